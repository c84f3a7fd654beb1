#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "creditrisk/select.hpp"
#include "test_util.hpp"

namespace cr = creditrisk;

namespace {

struct Problem {
    cr::Matrix x;
    std::vector<int> y;
    std::vector<std::string> names;
};

// Columns 0..2 drive the target, 3..7 are noise.
Problem informative(std::size_t n, std::uint64_t seed) {
    Problem p{testutil::random_normal(n, 8, seed), std::vector<int>(n), {}};
    cr::Rng rng(seed + 7);
    for (std::size_t i = 0; i < n; ++i)
        p.y[i] = rng.bernoulli(cr::sigmoid(-1.0 + 1.5 * p.x(i, 0) - 1.2 * p.x(i, 1) + 0.9 * p.x(i, 2))) ? 1 : 0;
    for (std::size_t j = 0; j < 8; ++j) p.names.push_back((j < 3 ? "s" : "n") + std::to_string(j));
    return p;
}

bool top_three_are_informative(const std::vector<std::size_t>& ranking) {
    std::vector<std::size_t> top(ranking.begin(), ranking.begin() + 3);
    std::sort(top.begin(), top.end());
    return top == std::vector<std::size_t>{0, 1, 2};
}

}  // namespace

TEST(Pearson, PerfectAndAbsentCorrelation) {
    const std::vector<int> y{0, 0, 1, 1};
    const auto x = testutil::matrix(4, 3, {0, 1, 5, 0, 1, 5, 1, 0, 5, 1, 0, 5});
    const auto r = cr::pearson_scores(x, y);
    EXPECT_NEAR(r[0], 1.0, 1e-15);
    EXPECT_NEAR(r[1], 1.0, 1e-15);
    EXPECT_EQ(r[2], 0.0);
}

TEST(Chi2, PerfectSeparationEqualsSampleSize) {
    std::vector<double> v(100);
    std::vector<int> y(100);
    for (std::size_t i = 0; i < 100; ++i) {
        v[i] = i < 50 ? 0.0 : 1.0;
        y[i] = i < 50 ? 0 : 1;
    }
    const auto bins = cr::equal_frequency_bins(v, 2);
    EXPECT_NEAR(cr::chi2_statistic(bins, y, 2), 100.0, 1e-12);
}

TEST(Chi2, IndependentTableIsZero) {
    const std::vector<std::size_t> bins{0, 0, 1, 1};
    const std::vector<int> y{0, 1, 0, 1};
    EXPECT_EQ(cr::chi2_statistic(bins, y, 2), 0.0);
}

TEST(Chi2, InvariantUnderMonotoneTransforms) {
    const auto p = informative(500, 1);
    cr::Matrix t = p.x;
    for (std::size_t i = 0; i < t.rows(); ++i)
        for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) = std::exp(3.0 * p.x(i, j)) + 2.0;
    EXPECT_EQ(cr::chi2_scores(p.x, p.y), cr::chi2_scores(t, p.y));
}

TEST(Chi2, MissingValuesGetTheirOwnBin) {
    const std::vector<double> v{1, cr::kMissing, 2, 3};
    const auto bins = cr::equal_frequency_bins(v, 3);
    EXPECT_EQ(bins[1], 3u);
}

TEST(Rfe, KeepsTheInformativeColumns) {
    const auto p = informative(1500, 2);
    const auto res = cr::rfe(p.x, p.y, 3);
    EXPECT_EQ(res.ranking.size(), 8u);
    EXPECT_EQ(res.eliminated.size(), 5u);
    EXPECT_TRUE(top_three_are_informative(res.ranking));
    EXPECT_EQ(res.ranking.back(), res.eliminated.front());
}

TEST(L1Select, SupportGrowsWithC) {
    const auto p = informative(1500, 3);
    std::size_t prev = 0;
    for (double c : {1e-4, 0.01, 0.1, 1.0, 100.0}) {
        const auto s = cr::l1_select(p.x, p.y, c);
        EXPECT_GE(s.selected.size(), prev) << "c=" << c;
        prev = s.selected.size();
    }
    EXPECT_TRUE(cr::l1_select(p.x, p.y, 1e-4).selected.empty());
    const auto mid = cr::l1_select(p.x, p.y, 10.0);
    for (std::size_t j : {0u, 1u}) EXPECT_NE(std::find(mid.selected.begin(), mid.selected.end(), j), mid.selected.end());
}

TEST(TreeImportance, BothKindsRankInformativeColumnsFirst) {
    const auto p = informative(1500, 4);
    for (auto kind : {cr::TreeModelKind::RandomForest, cr::TreeModelKind::Gbdt}) {
        cr::TreeImportanceOptions opt;
        opt.n_trees = 50;
        const auto imp = cr::tree_importance(p.x, p.y, kind, opt);
        double s = 0;
        for (double v : imp.importance) s += v;
        EXPECT_NEAR(s, 1.0, 1e-12);
        EXPECT_TRUE(top_three_are_informative(cr::rank_by_score(imp.importance, p.names)));
    }
}

TEST(TreeImportance, NoTreesGivesZerosAndWarning) {
    const auto p = informative(100, 5);
    cr::TreeImportanceOptions opt;
    opt.n_trees = 0;
    const auto imp = cr::tree_importance(p.x, p.y, cr::TreeModelKind::RandomForest, opt);
    for (double v : imp.importance) EXPECT_EQ(v, 0.0);
    EXPECT_FALSE(imp.warnings.empty());
}

TEST(VoteSelect, TiesBreakByMeanRankThenName) {
    const std::vector<std::string> names{"b", "a", "c", "d"};
    std::vector<cr::MethodRanking> methods{{"m1", {0, 1, 2, 3}, {}}, {"m2", {1, 0, 3, 2}, {}}};
    const auto rep = cr::vote_select(methods, names, 2, 2);
    // 0 and 1 both have 2 votes and mean rank 0.5; "a" sorts first.
    EXPECT_EQ(rep.selected, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(rep.votes, (std::vector<std::size_t>{2, 2, 0, 0}));
}

TEST(VoteSelect, ClipsNFinalAndRejectsSingleMethod) {
    const std::vector<std::string> names{"x", "y"};
    std::vector<cr::MethodRanking> two{{"m1", {0, 1}, {}}, {"m2", {0, 1}, {}}};
    const auto rep = cr::vote_select(two, names, 5);
    EXPECT_EQ(rep.selected.size(), 2u);
    EXPECT_FALSE(rep.warnings.empty());
    EXPECT_THROW(cr::vote_select({{"m1", {0, 1}, {}}}, names, 1), cr::ConfigError);
}

TEST(SelectFeatures, SixMethodsAgreeOnSignal) {
    const auto p = informative(1500, 6);
    cr::SelectionConfig cfg;
    cfg.n_final = 3;
    const auto rep = cr::select_features(p.x, p.y, p.names, cfg);
    EXPECT_EQ(rep.methods.size(), 6u);
    auto sel = rep.selected;
    std::sort(sel.begin(), sel.end());
    EXPECT_EQ(sel, (std::vector<std::string>{"s0", "s1", "s2"}));
}
