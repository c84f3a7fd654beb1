#include <gtest/gtest.h>

#include "creditrisk/linmod.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace cr = creditrisk;

namespace {

struct Problem {
    cr::Matrix x;
    std::vector<int> y;
};

Problem logistic_problem(std::size_t n, std::size_t p, std::uint64_t seed) {
    Problem pr{testutil::random_normal(n, p, seed), std::vector<int>(n)};
    cr::Rng rng(seed + 1000);
    for (std::size_t i = 0; i < n; ++i) {
        double z = -0.5;
        for (std::size_t j = 0; j < p; ++j) z += (j % 2 ? -0.7 : 1.1) * pr.x(i, j);
        pr.y[i] = rng.bernoulli(cr::sigmoid(z)) ? 1 : 0;
    }
    return pr;
}

}  // namespace

TEST(Logistic, AnalyticGradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const auto pr = logistic_problem(80, 5, seed);
        cr::Rng rng(seed);
        std::vector<double> theta(6);
        for (double& t : theta) t = rng.uniform(-1, 1);
        for (auto penalty : {cr::Penalty::None, cr::Penalty::L2}) {
            const auto analytic = cr::logistic_gradient(pr.x, pr.y, theta, penalty, 0.7);
            const auto numeric = oracle::numeric_gradient(
                [&](std::span<const double> t) { return cr::logistic_smooth_objective(pr.x, pr.y, t, penalty, 0.7); },
                theta, 1e-6);
            EXPECT_LT(oracle::max_relative_error(analytic, numeric), 1e-6) << "seed " << seed;
        }
    }
}

TEST(Logistic, L2FitIsStationary) {
    const auto pr = logistic_problem(300, 4, 7);
    cr::LogisticOptions opt;
    opt.c = 2.0;
    opt.tol = 1e-10;
    opt.standardize = false;
    const auto m = cr::fit_logistic(pr.x, pr.y, opt);
    EXPECT_TRUE(m.converged);
    std::vector<double> theta = m.weights;
    theta.push_back(m.intercept);
    const auto g = cr::logistic_gradient(pr.x, pr.y, theta, cr::Penalty::L2, opt.c);
    for (double v : g) EXPECT_LT(std::abs(v), 1e-8);
}

TEST(Logistic, StandardizedFitReportsOriginalScaleWeights) {
    auto pr = logistic_problem(400, 3, 11);
    for (std::size_t i = 0; i < pr.x.rows(); ++i) pr.x(i, 1) = 100.0 + 50.0 * pr.x(i, 1);
    cr::LogisticOptions opt;
    opt.penalty = cr::Penalty::None;
    opt.tol = 1e-10;
    const auto a = cr::fit_logistic(pr.x, pr.y, opt);
    opt.standardize = false;
    opt.max_iter = 5000;
    const auto b = cr::fit_logistic(pr.x, pr.y, opt);
    const auto pa = cr::predict_proba(a, pr.x), pb = cr::predict_proba(b, pr.x);
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_NEAR(pa[i], pb[i], 1e-6);
}

TEST(Logistic, ZeroDesignBalancedTargetGivesZeroModel) {
    const cr::Matrix x(6, 3, 0.0);
    const std::vector<int> y{0, 1, 0, 1, 0, 1};
    const auto m = cr::fit_logistic(x, y, {});
    for (double w : m.weights) EXPECT_EQ(w, 0.0);
    EXPECT_NEAR(m.intercept, 0.0, 1e-12);
    for (double p : cr::predict_proba(m, x)) EXPECT_NEAR(p, 0.5, 1e-12);
}

TEST(Logistic, L1WithTinyCZeroesEveryWeightExactly) {
    const auto pr = logistic_problem(200, 6, 3);
    cr::LogisticOptions opt;
    opt.penalty = cr::Penalty::L1;
    opt.c = 1e-6;
    const auto m = cr::fit_logistic(pr.x, pr.y, opt);
    for (double w : m.weights) EXPECT_EQ(w, 0.0);
}

TEST(Logistic, L1SolutionsAreExactlySparse) {
    auto pr = logistic_problem(500, 3, 5);
    cr::Matrix wide(500, 6);
    cr::Rng rng(8);
    for (std::size_t i = 0; i < 500; ++i) {
        for (std::size_t j = 0; j < 3; ++j) wide(i, j) = pr.x(i, j);
        for (std::size_t j = 3; j < 6; ++j) wide(i, j) = rng.normal();
    }
    cr::LogisticOptions opt;
    opt.penalty = cr::Penalty::L1;
    opt.c = 10.0;
    const auto m = cr::fit_logistic(wide, pr.y, opt);
    std::size_t zeros = 0;
    for (double w : m.weights) zeros += w == 0.0;
    EXPECT_GT(zeros, 0u);
    EXPECT_NE(m.weights[0], 0.0);
}

TEST(Logistic, ConstantTargetIsAFitError) {
    const cr::Matrix x(3, 1, 1.0);
    EXPECT_THROW(cr::fit_logistic(x, std::vector<int>{1, 1, 1}, {}), cr::FitError);
}

TEST(Logistic, LargeScoresClampBelowOne) {
    cr::LogisticModel m;
    m.weights = {1e6};
    const cr::Matrix x(1, 1, 1.0);
    const double p = cr::predict_proba(m, x)[0];
    EXPECT_LT(p, 1.0);
    EXPECT_NEAR(p, 1.0, 1e-11);
}

TEST(Logistic, JsonRoundTrip) {
    const auto pr = logistic_problem(100, 2, 4);
    const auto m = cr::fit_logistic(pr.x, pr.y, {});
    const auto back = cr::logistic_from_json(cr::to_json(m));
    EXPECT_EQ(back.weights, m.weights);
    EXPECT_EQ(back.intercept, m.intercept);
    EXPECT_EQ(back.penalty, m.penalty);
}
