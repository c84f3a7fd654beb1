#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "creditrisk/explain.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace cr = creditrisk;

namespace {

double sum(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0); }

// Depth-2 tree on three features with an interaction between 0 and 2.
cr::GbdtModel depth_two_tree() {
    cr::Tree t;
    auto split = [](int f, double thr, int l, int r) {
        cr::TreeNode n;
        n.feature = f;
        n.threshold = thr;
        n.left = l;
        n.right = r;
        return n;
    };
    auto leaf = [](int id, double v) {
        cr::TreeNode n;
        n.leaf_id = id;
        n.value = v;
        return n;
    };
    t.nodes = {split(0, 0.0, 1, 2), split(1, 0.5, 3, 4), split(2, -0.2, 5, 6),
               leaf(0, -1.0),       leaf(1, 0.5),         leaf(2, 0.25),        leaf(3, 2.0)};
    t.leaf_values = {-1.0, 0.5, 0.25, 2.0};
    cr::GbdtModel m;
    m.n_features = 3;
    m.learning_rate = 1.0;
    m.base_score = 0.1;
    m.trees.push_back(t);
    return m;
}

}  // namespace

TEST(Shapley, SinglePlayerGetsTheWholeDifference) {
    const auto bg = testutil::matrix(3, 1, {0.0, 1.0, 2.0});
    const cr::ScoreFunction f = [](std::span<const double> z) { return z[0] * z[0]; };
    const std::vector<double> x{3.0};
    const auto e = cr::exact_shapley(f, x, bg);
    EXPECT_NEAR(e.base_value, 5.0 / 3.0, 1e-15);
    EXPECT_NEAR(e.phi[0], 9.0 - 5.0 / 3.0, 1e-12);
}

TEST(Shapley, SymmetricPlayersShareEqually) {
    const auto bg = testutil::matrix(1, 2, {0.0, 0.0});
    const cr::ScoreFunction f = [](std::span<const double> z) { return z[0] * z[1]; };
    const std::vector<double> x{2.0, 2.0};
    const auto e = cr::exact_shapley(f, x, bg);
    EXPECT_NEAR(e.phi[0], 2.0, 1e-15);
    EXPECT_NEAR(e.phi[1], 2.0, 1e-15);
}

TEST(Shapley, NullPlayerGetsZero) {
    const auto bg = testutil::random_normal(5, 3, 2);
    const cr::ScoreFunction f = [](std::span<const double> z) { return std::sin(z[0]) + z[2]; };
    const std::vector<double> x{0.3, 7.0, -1.0};
    EXPECT_NEAR(cr::exact_shapley(f, x, bg).phi[1], 0.0, 1e-15);
}

TEST(Shapley, CoalitionEnumerationMatchesPermutationAverage) {
    cr::Rng rng(4);
    for (std::size_t m = 1; m <= 6; ++m) {
        const auto bg = testutil::random_normal(4, m, 10 + m);
        const cr::ScoreFunction f = [m](std::span<const double> z) {
            double s = 0;
            for (std::size_t j = 0; j < m; ++j) s += (j + 1) * z[j] + z[j] * z[(j + 1) % m] + std::tanh(z[j]);
            return s;
        };
        std::vector<double> x(m);
        for (double& v : x) v = rng.normal();
        const auto e = cr::exact_shapley(f, x, bg);
        const auto oracle = oracle::permutation_shapley(f, x, bg);
        for (std::size_t j = 0; j < m; ++j) EXPECT_NEAR(e.phi[j], oracle[j], 1e-9) << "m=" << m;
        EXPECT_NEAR(sum(e.phi), e.fx - e.base_value, 1e-9);
    }
}

TEST(Shapley, TreeTablesMatchPermutationOracleOnHandBuiltTree) {
    const auto model = depth_two_tree();
    const auto bg = testutil::random_normal(16, 3, 5);
    const cr::ScoreFunction f = [&](std::span<const double> z) { return model.raw_score(z); };
    cr::Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x{rng.normal(), rng.uniform(0, 1), rng.normal()};
        const auto e = cr::exact_shapley(model, x, bg);
        const auto oracle = oracle::permutation_shapley(f, x, bg);
        for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(e.phi[j], oracle[j], 1e-12);
        EXPECT_NEAR(e.fx, model.raw_score(x), 1e-15);
    }
}

TEST(Shapley, TreeTablesMatchGenericEnumerationOnFittedModel) {
    const auto x = testutil::random_normal(400, 5, 7);
    std::vector<int> y(400);
    for (std::size_t i = 0; i < 400; ++i) y[i] = x(i, 0) + 0.5 * x(i, 3) * x(i, 1) > 0.2;
    // Missing values exercise the learned default direction.
    cr::Matrix xm = x;
    for (std::size_t i = 0; i < 400; i += 7) xm(i, 3) = cr::kMissing;
    cr::GbdtConfig cfg;
    cfg.n_trees = 15;
    cfg.max_leaves = 6;
    const auto model = cr::fit_gbdt(xm, y, cfg);
    const auto bg = xm.select_rows(std::vector<std::size_t>{0, 3, 7, 11, 20, 33, 48, 59});
    const cr::ScoreFunction f = [&](std::span<const double> z) { return model.raw_score(z); };
    for (std::size_t r : {1u, 14u, 99u, 200u}) {
        const auto fast = cr::exact_shapley(model, xm.row(r), bg);
        const auto slow = cr::exact_shapley(f, xm.row(r), bg);
        EXPECT_NEAR(fast.base_value, slow.base_value, 1e-12);
        for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(fast.phi[j], slow.phi[j], 1e-12);
        EXPECT_NEAR(sum(fast.phi), fast.fx - fast.base_value, 1e-9);
    }
}

TEST(Shapley, FeatureCapAndEmptyBackground) {
    const cr::ScoreFunction f = [](std::span<const double>) { return 0.0; };
    const std::vector<double> x(16, 0.0);
    EXPECT_THROW(cr::exact_shapley(f, x, cr::Matrix(2, 16)), cr::ConfigError);
    try {
        cr::exact_shapley(f, x, cr::Matrix(2, 16));
    } catch (const cr::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("feature selection"), std::string::npos);
    }
    EXPECT_THROW(cr::exact_shapley(f, std::vector<double>(2, 0.0), cr::Matrix(0, 2)), cr::DomainError);
}

TEST(Lime, ConstantModelHasNoSlope) {
    const auto bg = testutil::random_normal(50, 3, 8);
    const cr::ScoreFunction f = [](std::span<const double>) { return 0.7; };
    const std::vector<double> x{0.1, 0.2, 0.3};
    const auto e = cr::lime_explain(f, x, bg, {});
    for (const auto& [j, w] : e.coefficients) EXPECT_NEAR(w, 0.0, 1e-9);
    EXPECT_NEAR(e.intercept, 0.7, 1e-9);
    EXPECT_NEAR(e.local_prediction, 0.7, 1e-9);
}

TEST(Lime, RecoversLinearSlope) {
    const auto bg = testutil::random_normal(100, 2, 9);
    const cr::ScoreFunction f = [](std::span<const double> z) { return 2.0 * z[1]; };
    const std::vector<double> x{0.5, -0.4};
    const auto e = cr::lime_explain(f, x, bg, {});
    ASSERT_FALSE(e.coefficients.empty());
    EXPECT_EQ(e.coefficients.front().first, 1u);
    EXPECT_NEAR(e.coefficients.front().second, 2.0, 0.1);
    EXPECT_GT(e.local_fit_r2, 0.99);
    EXPECT_DOUBLE_EQ(e.kernel_width, 0.75 * std::sqrt(2.0));
}

TEST(Lime, DeterministicForFixedSeed) {
    const auto bg = testutil::random_normal(40, 3, 10);
    const cr::ScoreFunction f = [](std::span<const double> z) { return z[0] * z[1] + z[2]; };
    const std::vector<double> x{1.0, 1.0, 1.0};
    const auto a = cr::lime_explain(f, x, bg, {}), b = cr::lime_explain(f, x, bg, {});
    EXPECT_EQ(a.coefficients, b.coefficients);
}

TEST(ShapSummary, RankingAndWaterfall) {
    cr::ShapExplanation a, b;
    a.base_value = b.base_value = 1.0;
    a.phi = {0.1, -0.5, 0.2};
    b.phi = {0.35, 0.1, -0.2};
    a.feature_values = b.feature_values = {0, 0, 0};
    const std::vector<cr::ShapExplanation> batch{a, b};
    const auto s = cr::summary_stats(batch);
    EXPECT_EQ(s.ranking, (std::vector<std::size_t>{1, 0, 2}));
    EXPECT_NEAR(s.mean_abs_phi[0], 0.225, 1e-15);
    EXPECT_NEAR(s.mean_abs_phi[1], 0.3, 1e-15);
    EXPECT_NEAR(s.mean_abs_phi[2], 0.2, 1e-15);
    EXPECT_EQ(s.records.size(), 6u);
    // Waterfall of instance 0 ends at base + sum(phi).
    EXPECT_NEAR(s.waterfall[2].cumulative, 1.0 + 0.1 - 0.5 + 0.2, 1e-15);
    EXPECT_EQ(s.waterfall[0].feature, 1u);
}
