#pragma once

// Synthetic firm-default data with a known logistic PD:
//   pd = sigmoid(w . z + sum_c effect_c[level] + intercept + drift[year])
// z are the informative N(0,1) features. Categorical features shift the logit
// by a per-level effect, so level frequencies differ between the classes.
// Noise features never enter the PD.

#include <string>
#include <vector>

#include "creditrisk/core.hpp"
#include "creditrisk/data.hpp"
#include "creditrisk/metrics.hpp"

namespace creditrisk {

struct GeneratorSpec {
    std::size_t n_rows = 50000;
    int first_year = 2011;
    int last_year = 2017;
    std::size_t n_informative = 10;
    std::size_t n_noise = 20;
    std::size_t n_categorical = 3;
    std::size_t categorical_levels = 6;
    double categorical_effect = 0.5;  // level effects spread evenly over [-e, e]
    std::vector<double> true_weights;  // empty: 1.0, 0.9, ... floored at 0.3
    double intercept = -5.0;
    std::vector<double> macro_drift;   // per year; empty: mild alternating drift
    std::uint64_t seed = 2024;

    std::size_t n_years() const { return static_cast<std::size_t>(last_year - first_year + 1); }

    std::vector<double> weights() const {
        if (!true_weights.empty()) return true_weights;
        std::vector<double> w(n_informative);
        for (std::size_t i = 0; i < n_informative; ++i) w[i] = std::max(0.3, 1.0 - 0.1 * static_cast<double>(i));
        return w;
    }

    std::vector<double> drift() const {
        if (!macro_drift.empty()) return macro_drift;
        std::vector<double> d(n_years());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = 0.15 * std::sin(1.3 * static_cast<double>(i));
        return d;
    }

    void check() const {
        if (last_year < first_year) throw ConfigError("synth: last_year < first_year");
        if (!true_weights.empty() && true_weights.size() != n_informative)
            throw ConfigError("synth: true_weights length must equal n_informative");
        if (!macro_drift.empty() && macro_drift.size() != n_years())
            throw ConfigError("synth: macro_drift needs one entry per year");
        if (n_categorical > 0 && categorical_levels < 2) throw ConfigError("synth: categorical_levels must be >= 2");
        if (!std::isfinite(intercept)) throw ConfigError("synth: intercept must be finite");
    }
};

struct SyntheticData {
    Dataset data;
    std::vector<double> true_pd;
};

// Columns: x_0.. (informative), cat_0.. (categorical), noise_0.. (noise).
// Years are assigned in equal blocks in row order.
inline SyntheticData generate(const GeneratorSpec& spec) {
    spec.check();
    const auto w = spec.weights();
    const auto drift = spec.drift();
    const std::size_t p = spec.n_informative + spec.n_categorical + spec.n_noise;
    const std::size_t levels = spec.categorical_levels;

    SyntheticData out;
    Dataset& ds = out.data;
    for (std::size_t i = 0; i < spec.n_informative; ++i) {
        ds.feature_names.push_back("x_" + std::to_string(i));
        ds.feature_kinds.push_back(FeatureKind::Numeric);
        ds.dictionaries.emplace_back();
    }
    std::vector<std::string> dict;
    for (std::size_t l = 0; l < levels; ++l) dict.push_back("L" + std::to_string(l));
    for (std::size_t i = 0; i < spec.n_categorical; ++i) {
        ds.feature_names.push_back("cat_" + std::to_string(i));
        ds.feature_kinds.push_back(FeatureKind::Categorical);
        ds.dictionaries.push_back(dict);
    }
    for (std::size_t i = 0; i < spec.n_noise; ++i) {
        ds.feature_names.push_back("noise_" + std::to_string(i));
        ds.feature_kinds.push_back(FeatureKind::Numeric);
        ds.dictionaries.emplace_back();
    }

    auto effect = [&](std::size_t level) {
        if (levels < 2) return 0.0;
        return spec.categorical_effect * (2.0 * static_cast<double>(level) / static_cast<double>(levels - 1) - 1.0);
    };

    ds.features = Matrix(spec.n_rows, p);
    ds.target.resize(spec.n_rows);
    ds.year.resize(spec.n_rows);
    ds.row_id.resize(spec.n_rows);
    out.true_pd.resize(spec.n_rows);
    Rng rng(spec.seed);
    const std::size_t ny = spec.n_years();
    for (std::size_t r = 0; r < spec.n_rows; ++r) {
        const std::size_t yi = r * ny / std::max<std::size_t>(spec.n_rows, 1);
        auto row = ds.features.row(r);
        double z = spec.intercept + drift[yi];
        std::size_t j = 0;
        for (std::size_t i = 0; i < spec.n_informative; ++i, ++j) {
            row[j] = rng.normal();
            z += w[i] * row[j];
        }
        for (std::size_t i = 0; i < spec.n_categorical; ++i, ++j) {
            const std::size_t level = rng.below(levels);
            row[j] = static_cast<double>(level);
            z += effect(level);
        }
        for (std::size_t i = 0; i < spec.n_noise; ++i, ++j) row[j] = rng.normal();
        const double pd = sigmoid(z);
        out.true_pd[r] = pd;
        ds.target[r] = rng.bernoulli(pd) ? 1 : 0;
        ds.year[r] = spec.first_year + static_cast<int>(yi);
        ds.row_id[r] = r;
    }
    if (spec.n_rows == 0) ds.features = Matrix(0, p);
    return out;
}

struct BayesMetrics {
    double auroc;
    double irreducible_brier;  // mean pd (1 - pd)
    double brier;              // Brier of the true pd against the drawn labels
};

inline BayesMetrics bayes_metrics(std::span<const double> true_pd, std::span<const int> y) {
    if (true_pd.size() != y.size()) throw DimensionError("bayes_metrics: length mismatch");
    BayesMetrics m{};
    m.auroc = roc_auc(true_pd, y).auc;
    double s = 0.0;
    for (double p : true_pd) s += p * (1.0 - p);
    m.irreducible_brier = true_pd.empty() ? 0.0 : s / static_cast<double>(true_pd.size());
    m.brier = brier(true_pd, y);
    return m;
}

// Unit-norm-ish random vectors grouped around a few centres, a stand-in for
// precomputed sector-description embeddings.
inline Matrix synthetic_embeddings(std::size_t n, std::size_t dim, std::size_t clusters, std::uint64_t seed,
                                   double spread = 0.3) {
    Rng rng(seed);
    Matrix centres(clusters, dim);
    for (double& v : centres.data()) v = rng.normal();
    Matrix out(n, dim);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t c = rng.below(clusters);
        for (std::size_t j = 0; j < dim; ++j)
            out(r, j) = (centres(c, j) + spread * rng.normal()) / std::sqrt(static_cast<double>(dim));
    }
    return out;
}

}  // namespace creditrisk
