#include <cmath>

#include <gtest/gtest.h>

#include "creditrisk/synth.hpp"

namespace cr = creditrisk;

TEST(Synth, DeterministicForASeed) {
    cr::GeneratorSpec spec;
    spec.n_rows = 2000;
    const auto a = cr::generate(spec), b = cr::generate(spec);
    EXPECT_EQ(a.data.features.data(), b.data.features.data());
    EXPECT_EQ(a.data.target, b.data.target);
    spec.seed = 2025;
    EXPECT_NE(cr::generate(spec).data.target, a.data.target);
}

TEST(Synth, LayoutAndYears) {
    cr::GeneratorSpec spec;
    spec.n_rows = 700;
    const auto s = cr::generate(spec);
    EXPECT_EQ(s.data.n_cols(), 33u);
    EXPECT_EQ(s.data.feature_names.front(), "x_0");
    EXPECT_EQ(s.data.feature_kinds[10], cr::FeatureKind::Categorical);
    EXPECT_EQ(s.data.year.front(), 2011);
    EXPECT_EQ(s.data.year.back(), 2017);
    std::size_t n2017 = 0;
    for (int y : s.data.year) n2017 += y == 2017;
    EXPECT_EQ(n2017, 100u);
}

TEST(Synth, DefaultRateWithinThreeSigmaOfMeanPd) {
    cr::GeneratorSpec spec;
    spec.n_rows = 50000;
    spec.intercept = -4.0;
    const auto s = cr::generate(spec);
    double mean_pd = 0, var = 0;
    for (double p : s.true_pd) mean_pd += p, var += p * (1 - p);
    mean_pd /= static_cast<double>(spec.n_rows);
    const double rate = static_cast<double>(s.data.positives()) / static_cast<double>(spec.n_rows);
    EXPECT_LT(std::abs(rate - mean_pd), 3.0 * std::sqrt(var) / static_cast<double>(spec.n_rows));
}

TEST(Synth, NoSignalMeansChanceAuroc) {
    cr::GeneratorSpec spec;
    spec.n_rows = 20000;
    spec.n_informative = 0;
    spec.n_categorical = 0;
    spec.macro_drift.assign(spec.n_years(), 0.0);
    spec.intercept = -1.0;
    const auto s = cr::generate(spec);
    for (double p : s.true_pd) EXPECT_EQ(p, s.true_pd.front());
    EXPECT_DOUBLE_EQ(cr::bayes_metrics(s.true_pd, s.data.target).auroc, 0.5);
}

TEST(Synth, BayesBrierTracksIrreducibleTerm) {
    cr::GeneratorSpec spec;
    spec.n_rows = 50000;
    const auto s = cr::generate(spec);
    const auto m = cr::bayes_metrics(s.true_pd, s.data.target);
    EXPECT_NEAR(m.brier, m.irreducible_brier, 0.1 * m.irreducible_brier);
    EXPECT_GT(m.auroc, 0.8);
}

TEST(Synth, InvalidSpecs) {
    cr::GeneratorSpec spec;
    spec.true_weights = {1.0};
    EXPECT_THROW(cr::generate(spec), cr::ConfigError);
    spec = {};
    spec.last_year = 2000;
    EXPECT_THROW(cr::generate(spec), cr::ConfigError);
}
