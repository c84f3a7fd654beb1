#include <algorithm>

#include <gtest/gtest.h>

#include "creditrisk/calib.hpp"
#include "test_util.hpp"

namespace cr = creditrisk;

namespace {

// One stump on feature 0 at 0.5: leaf 0 for x <= 0.5, leaf 1 otherwise.
cr::GbdtModel stump_model() {
    cr::Tree t;
    cr::TreeNode root;
    root.feature = 0;
    root.threshold = 0.5;
    root.left = 1;
    root.right = 2;
    cr::TreeNode l, r;
    l.leaf_id = 0;
    r.leaf_id = 1;
    t.nodes = {root, l, r};
    t.leaf_values = {-1.0, 1.0};
    cr::GbdtModel m;
    m.n_features = 1;
    m.trees.push_back(t);
    return m;
}

struct Sample {
    cr::Matrix x;
    std::vector<int> y;
};

// Left side default rate 0.1, right side 0.6.
Sample stump_sample(std::size_t per_side) {
    Sample s{cr::Matrix(2 * per_side, 1), std::vector<int>(2 * per_side)};
    for (std::size_t i = 0; i < per_side; ++i) {
        s.x(i, 0) = 0.0;
        s.y[i] = i % 10 == 0;
        s.x(per_side + i, 0) = 1.0;
        s.y[per_side + i] = i % 10 < 6;
    }
    return s;
}

}  // namespace

TEST(LeafDesign, OneActiveColumnPerTree) {
    const auto d = testutil::random_normal(200, 3, 1);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < 200; ++i) y[i] = d(i, 0) > 0.3;
    cr::GbdtConfig cfg;
    cfg.n_trees = 6;
    cfg.max_leaves = 4;
    cfg.min_samples_leaf = 10;
    const auto model = cr::fit_gbdt(d, y, cfg);
    const auto cal = cr::leaf_vocabulary(model);
    std::size_t leaves = 0;
    for (const auto& t : model.trees) leaves += t.n_leaves();
    EXPECT_EQ(cal.width, leaves);
    const auto dense = cr::leaf_design(cal, model, d).dense();
    for (std::size_t r = 0; r < dense.rows(); ++r) {
        double s = 0;
        for (double v : dense.row(r)) s += v;
        EXPECT_EQ(s, static_cast<double>(model.trees.size()));
    }
}

TEST(Calibrator, SingleLeafGivesOneConstantPd) {
    cr::GbdtModel m;
    m.n_features = 1;
    m.trees.push_back(cr::Tree::single_leaf(0.3));
    const auto s = stump_sample(50);
    const std::vector<double> grid{1.0};
    const auto cal = cr::fit_calibrator(m, {s.x, s.y}, grid, {s.x, s.y});
    const auto pd = cr::calibrated_pd(cal, m, s.x);
    for (double p : pd) EXPECT_EQ(p, pd.front());
    EXPECT_NEAR(pd.front(), 0.35, 1e-4);
}

TEST(Calibrator, WeakPenaltyRecoversLeafFrequencies) {
    const auto m = stump_model();
    const auto s = stump_sample(500);
    const std::vector<double> grid{1e6};
    const auto cal = cr::fit_calibrator(m, {s.x, s.y}, grid, {s.x, s.y}, 1e-10, 10000);
    const auto pd = cr::calibrated_pd(cal, m, testutil::matrix(2, 1, {0.0, 1.0}));
    EXPECT_NEAR(pd[0], 0.1, 1e-3);
    EXPECT_NEAR(pd[1], 0.6, 1e-3);
}

TEST(Calibrator, KeepsTheGridValueWithLowestHoldoutLoss) {
    const auto m = stump_model();
    const auto s = stump_sample(300);
    const std::vector<double> grid{1e-4, 1.0, 100.0};
    const auto cal = cr::fit_calibrator(m, {s.x, s.y}, grid, {s.x, s.y});
    ASSERT_EQ(cal.c_scores.size(), 3u);
    const auto best = std::min_element(cal.c_scores.begin(), cal.c_scores.end(),
                                       [](const auto& a, const auto& b) { return a.second < b.second; });
    EXPECT_EQ(cal.c, best->first);
    EXPECT_NE(cal.c, 1e-4);
}

TEST(Calibrator, SingleValueGridAndEmptyGrid) {
    const auto m = stump_model();
    const auto s = stump_sample(40);
    const std::vector<double> one{0.5};
    EXPECT_EQ(cr::fit_calibrator(m, {s.x, s.y}, one, {s.x, s.y}).c, 0.5);
    EXPECT_THROW(cr::fit_calibrator(m, {s.x, s.y}, std::vector<double>{}, {s.x, s.y}), cr::ConfigError);
}

TEST(Calibrator, JsonRoundTrip) {
    const auto m = stump_model();
    const auto s = stump_sample(40);
    const std::vector<double> grid{0.1, 1.0};
    const auto cal = cr::fit_calibrator(m, {s.x, s.y}, grid, {s.x, s.y});
    const auto back = cr::calibrator_from_json(cr::to_json(cal));
    EXPECT_EQ(cr::calibrated_pd(back, m, s.x), cr::calibrated_pd(cal, m, s.x));
}

TEST(Reliability, BinsCountsAndClosedLastBin) {
    const std::vector<double> pd{0.0, 0.05, 0.15, 0.95, 1.0};
    const std::vector<int> y{0, 1, 0, 1, 1};
    const auto curve = cr::reliability_curve(pd, y, 10);
    ASSERT_EQ(curve.bins.size(), 10u);
    EXPECT_EQ(curve.bins[0].count, 2u);
    EXPECT_DOUBLE_EQ(curve.bins[0].mean_pred, 0.025);
    EXPECT_DOUBLE_EQ(curve.bins[0].obs_freq, 0.5);
    EXPECT_EQ(curve.bins[9].count, 2u);
    EXPECT_EQ(curve.bins[5].count, 0u);
    EXPECT_TRUE(cr::is_missing(curve.bins[5].mean_pred));
    std::size_t total = 0;
    for (const auto& b : curve.bins) total += b.count;
    EXPECT_EQ(total, pd.size());
}

TEST(Reliability, PerfectlyCalibratedConstantPd) {
    std::vector<double> pd(1000, 0.2);
    std::vector<int> y(1000);
    for (std::size_t i = 0; i < 1000; ++i) y[i] = i % 5 == 0;
    const auto curve = cr::reliability_curve(pd, y, 10);
    EXPECT_EQ(curve.bins[2].count, 1000u);
    EXPECT_DOUBLE_EQ(curve.bins[2].obs_freq, 0.2);
}
