#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "creditrisk/rating.hpp"
#include "oracles.hpp"

namespace cr = creditrisk;

namespace {

struct Pds {
    std::vector<double> pd;
    std::vector<int> y;
};

// Three clumps of PDs around 0.02, 0.1 and 0.3 with Bernoulli outcomes.
Pds clumps(std::size_t n, std::uint64_t seed) {
    cr::Rng rng(seed);
    Pds s;
    const double centers[] = {0.02, 0.1, 0.3};
    for (std::size_t i = 0; i < n; ++i) {
        const double p = std::clamp(centers[i % 3] * (1.0 + 0.3 * rng.uniform(-1, 1)), 1e-4, 0.99);
        s.pd.push_back(p);
        s.y.push_back(rng.bernoulli(p) ? 1 : 0);
    }
    return s;
}

cr::DeConfig three_classes() {
    cr::DeConfig cfg;
    cfg.classes = 3;
    cfg.min_share = 0.1;
    cfg.max_share = 0.6;
    cfg.de.population = 30;
    cfg.de.generations = 200;
    return cfg;
}

}  // namespace

TEST(RatingFitness, MatchesDirectEvaluation) {
    cr::Rng rng(3);
    for (int trial = 0; trial < 200; ++trial) {
        const auto s = clumps(30 + rng.below(60), 100 + static_cast<std::uint64_t>(trial));
        cr::DeConfig cfg;
        cfg.classes = 2 + rng.below(5);
        std::vector<double> cuts(cfg.classes - 1);
        for (double& c : cuts) c = rng.uniform(0.0, 0.5);
        cr::repair_cuts(cuts, cfg.epsilon, cfg.min_gap);
        const cr::PdSample sample(s.pd, s.y);
        const double lib = cr::fitness(cuts, sample, cfg);
        const double direct = oracle::direct_fitness(cuts, s.pd, s.y, cfg);
        EXPECT_NEAR(lib, direct, 1e-9 * std::max(1.0, std::abs(direct))) << "trial " << trial;
    }
}

TEST(RatingFitness, BucketStatsPartitionTheSample) {
    const auto s = clumps(90, 4);
    const cr::PdSample sample(s.pd, s.y);
    const std::vector<double> cuts{0.05, 0.2};
    const auto b = cr::bucket_stats(cuts, sample);
    EXPECT_EQ(b.count[0] + b.count[1] + b.count[2], 90u);
    EXPECT_EQ(b.count[0], 30u);
    EXPECT_LT(b.class_pd[0], b.class_pd[1]);
    EXPECT_LT(b.class_pd[1], b.class_pd[2]);
}

TEST(RatingFitness, EmptyMiddleBucketIsInterpolated) {
    const std::vector<double> pd{0.01, 0.02, 0.5, 0.6};
    const std::vector<int> y{0, 0, 1, 0};
    const cr::PdSample sample(pd, y);
    const std::vector<double> cuts{0.1, 0.2};
    const auto b = cr::bucket_stats(cuts, sample);
    EXPECT_EQ(b.count[1], 0u);
    EXPECT_TRUE(b.interpolated[1]);
    EXPECT_DOUBLE_EQ(b.class_pd[1], 0.5 * (0.015 + 0.55));
}

TEST(RepairCuts, SortsClampsAndSeparates) {
    std::vector<double> g{0.5, -3.0, 2.0, 0.5, std::nan("")};
    cr::repair_cuts(g, 1e-9, 1e-6);
    for (double v : g) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_GE(g[i] - g[i - 1], 1e-6 * (1 - 1e-9));
}

TEST(DifferentialEvolution, MinimizesShiftedSphere) {
    cr::DeParams p;
    p.population = 30;
    p.generations = 300;
    p.seed = 5;
    auto sphere = [](std::span<const double> x) {
        double s = 0;
        for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - 0.1 * static_cast<double>(i + 1)) * (x[i] - 0.1 * static_cast<double>(i + 1));
        return s;
    };
    auto init = [](cr::Rng& rng) {
        std::vector<double> g(4);
        for (double& v : g) v = rng.uniform(-5, 5);
        return g;
    };
    const auto res = cr::differential_evolution(sphere, 4, init, [](std::vector<double>&) {}, p);
    EXPECT_LT(res.best_fitness, 1e-8);
    for (std::size_t i = 1; i < res.best_history.size(); ++i) EXPECT_LE(res.best_history[i], res.best_history[i - 1]);
}

TEST(DifferentialEvolution, InvalidParametersAreConfigErrors) {
    auto f = [](std::span<const double>) { return 0.0; };
    auto init = [](cr::Rng&) { return std::vector<double>{0.0}; };
    auto none = [](std::vector<double>&) {};
    cr::DeParams p;
    p.population = 3;
    EXPECT_THROW(cr::differential_evolution(f, 1, init, none, p), cr::ConfigError);
    p = {};
    p.weight = 2.5;
    EXPECT_THROW(cr::differential_evolution(f, 1, init, none, p), cr::ConfigError);
}

TEST(DeOptimize, ThreeClassesWithinOnePercentOfExhaustiveSearch) {
    const auto s = clumps(200, 21);
    const auto cfg = three_classes();
    const cr::PdSample sample(s.pd, s.y);
    const auto exhaustive = oracle::exhaustive_two_cuts(sample.sorted(), sample, cfg);
    const auto res = cr::de_optimize(s.pd, s.y, cfg);
    EXPECT_LE(res.terms.total, exhaustive.best + 0.01 * std::abs(exhaustive.best));
}

TEST(DeOptimize, ScaleIsMonotoneAndShareBounded) {
    const auto s = clumps(600, 22);
    const auto res = cr::de_optimize(s.pd, s.y, three_classes());
    EXPECT_NO_THROW(res.scale.check());
    for (double sh : res.scale.class_share) {
        EXPECT_GE(sh, 0.1);
        EXPECT_LE(sh, 0.6);
    }
}

TEST(DeOptimize, DeterministicForAFixedSeedAndAnyThreadCount) {
    const auto s = clumps(300, 23);
    auto cfg = three_classes();
    const auto a = cr::de_optimize(s.pd, s.y, cfg);
    cfg.de.threads = 4;
    const auto b = cr::de_optimize(s.pd, s.y, cfg);
    EXPECT_EQ(a.scale.cuts, b.scale.cuts);
}

TEST(DeOptimize, TooFewDistinctPdsIsAFitError) {
    const std::vector<double> pd{0.1, 0.1, 0.2, 0.2};
    const std::vector<int> y{0, 1, 0, 1};
    EXPECT_THROW(cr::de_optimize(pd, y, three_classes()), cr::FitError);
}

TEST(AssignRating, CutValuesBelongToTheUpperClass) {
    cr::RatingScale s;
    s.cuts = {0.01, 0.05};
    s.labels = {"A", "B", "C"};
    s.class_pd = {0.005, 0.02, 0.1};
    s.class_share = {0.3, 0.4, 0.3};
    EXPECT_EQ(cr::assign_rating(s, 0.0), "A");
    EXPECT_EQ(cr::assign_rating(s, 0.01), "B");
    EXPECT_EQ(cr::assign_rating(s, std::nextafter(0.05, 0.0)), "B");
    EXPECT_EQ(cr::assign_rating(s, 0.05), "C");
    EXPECT_EQ(cr::assign_rating(s, 1.0), "C");
    EXPECT_THROW(cr::assign_rating(s, 1.5), cr::DomainError);
}

TEST(AssignRating, NonDecreasingInPd) {
    cr::RatingScale s;
    s.cuts = {0.01, 0.03, 0.08, 0.2};
    s.labels = cr::default_rating_labels(5);
    for (double p = 0.0, prev = 0; p <= 1.0; p += 0.001) {
        const auto k = static_cast<double>(s.class_of(p));
        EXPECT_GE(k, prev);
        prev = k;
    }
}

TEST(RatingScale, JsonRoundTrip) {
    const auto s = clumps(300, 24);
    const auto res = cr::de_optimize(s.pd, s.y, three_classes());
    const auto back = cr::rating_scale_from_json(cr::to_json(res.scale));
    EXPECT_EQ(back.cuts, res.scale.cuts);
    EXPECT_EQ(back.labels, res.scale.labels);
}
