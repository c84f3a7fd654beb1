#include <sstream>

#include <gtest/gtest.h>

#include "creditrisk/encode.hpp"

namespace cr = creditrisk;

TEST(LabelEncode, FirstAppearanceOrder) {
    const auto e = cr::label_encode({"b", "a", "b"});
    EXPECT_EQ(e.codes, (std::vector<int>{0, 1, 0}));
    EXPECT_EQ(cr::label_encode({"z", "z"}).codes, (std::vector<int>{0, 0}));
    EXPECT_TRUE(cr::label_encode({}).codes.empty());
}

TEST(OneHot, VocabularyAndUnseenValues) {
    const auto oh = cr::one_hot_encode({"b", "z", "a", "c"}, {"a", "b", "c"});
    const auto m = oh.dense();
    EXPECT_EQ(std::vector<double>(m.row(0).begin(), m.row(0).end()), (std::vector<double>{0, 1, 0}));
    EXPECT_EQ(std::vector<double>(m.row(1).begin(), m.row(1).end()), (std::vector<double>{0, 0, 0}));
    EXPECT_LE(oh.nonzeros(), 4u);
    EXPECT_EQ(oh.nonzeros(), 3u);
}

namespace {

// Shrinkage weight straight from its definition.
double js_weight(double n, double tau2, double s2) { return n * tau2 / (n * tau2 + s2); }

}  // namespace

TEST(JamesStein, MatchesHandEvaluatedFormula) {
    // Category 0: 4 rows, 1 positive; category 1: 6 rows, 4 positives.
    const std::vector<double> codes{0, 0, 0, 0, 1, 1, 1, 1, 1, 1};
    const std::vector<int> y{1, 0, 0, 0, 1, 1, 1, 1, 0, 0};
    const auto enc = cr::fit_james_stein(codes, y);
    const double g = 5.0 / 10.0;
    const double s2 = g * (1 - g);
    const double m0 = 0.25, m1 = 4.0 / 6.0;
    const double mbar = 0.5 * (m0 + m1);
    const double tau2 = 0.5 * ((m0 - mbar) * (m0 - mbar) + (m1 - mbar) * (m1 - mbar));
    const double w0 = js_weight(4, tau2, s2), w1 = js_weight(6, tau2, s2);
    EXPECT_NEAR(enc.encode(0), w0 * m0 + (1 - w0) * g, 1e-15);
    EXPECT_NEAR(enc.encode(1), w1 * m1 + (1 - w1) * g, 1e-15);
    EXPECT_DOUBLE_EQ(enc.global_mean(), g);
}

TEST(JamesStein, CategoryAtGlobalMeanIsFixedPoint) {
    const std::vector<double> codes{0, 0, 1, 1, 1, 1, 2, 2};
    const std::vector<int> y{1, 0, 1, 1, 1, 0, 0, 0};
    const auto enc = cr::fit_james_stein(codes, y);
    EXPECT_DOUBLE_EQ(enc.global_mean(), 0.5);
    EXPECT_DOUBLE_EQ(enc.encode(0), 0.5);
}

TEST(JamesStein, EqualCategoryMeansCollapseToGlobalMean) {
    const std::vector<double> codes{0, 0, 1, 1, 2, 2};
    const std::vector<int> y{1, 0, 1, 0, 0, 1};
    const auto enc = cr::fit_james_stein(codes, y);
    EXPECT_EQ(enc.between_variance(), 0.0);
    for (double c : {0.0, 1.0, 2.0}) EXPECT_DOUBLE_EQ(enc.encode(c), enc.global_mean());
}

TEST(JamesStein, LargeCategoriesApproachTheirOwnMeans) {
    double prev_gap = 1.0;
    for (std::size_t n : {10u, 10000u, 1000000u}) {
        // Means 0.2 and 0.4 (global 0.3); n rows per category.
        std::vector<double> codes;
        std::vector<int> y;
        for (std::size_t i = 0; i < n; ++i) {
            codes.push_back(0);
            y.push_back(i % 5 == 0 ? 1 : 0);
            codes.push_back(1);
            y.push_back(i % 5 < 2 ? 1 : 0);
        }
        const auto enc = cr::fit_james_stein(codes, y);
        const double gap = std::abs(enc.encode(0) - 0.2) + std::abs(enc.encode(1) - 0.4);
        EXPECT_LT(gap, prev_gap);
        prev_gap = gap;
    }
    EXPECT_LT(prev_gap, 1e-5);
}

TEST(JamesStein, UnseenAndMissingFallBackToGlobalMean) {
    const std::vector<double> codes{0, 0, 1, 1};
    const std::vector<int> y{1, 1, 0, 0};
    const auto enc = cr::fit_james_stein(codes, y);
    EXPECT_EQ(enc.encode(7), enc.global_mean());
    EXPECT_EQ(enc.encode(cr::kMissing), enc.global_mean());
}

TEST(JamesStein, FitColumnIsStrictlyShrunk) {
    const std::vector<double> codes{0, 0, 0, 1, 1, 1, 1};
    const std::vector<int> y{1, 1, 0, 0, 0, 1, 0};
    const auto enc = cr::fit_james_stein(codes, y);
    for (const auto& [code, cs] : enc.categories()) {
        ASSERT_GT(cs.weight, 0.0);
        ASSERT_LT(cs.weight, 1.0);
        EXPECT_NE(cs.encoded, cs.target_mean);
    }
}

TEST(JamesStein, ConstantTargetIsAnError) {
    EXPECT_THROW(cr::fit_james_stein(std::vector<double>{0, 1}, std::vector<int>{1, 1}), cr::FitError);
}

TEST(Embeddings, ParseDimensionCheckAndDuplicates) {
    std::istringstream two("a 1 2 3 4 5\nb 5 4 3 2 1\n");
    const auto ok = cr::load_embeddings(two);
    EXPECT_EQ(ok.table.size(), 2u);
    EXPECT_EQ(ok.table.dimension(), 5u);

    std::istringstream bad("a 1 2 3 4 5\nb 1 2 3 4\n");
    EXPECT_THROW(cr::load_embeddings(bad), cr::IngestionError);

    std::istringstream dup("a 1 2\na 3 4\n");
    const auto d = cr::load_embeddings(dup);
    EXPECT_EQ(d.table.size(), 1u);
    EXPECT_EQ(*d.table.find("a"), (std::vector<double>{3, 4}));
    EXPECT_EQ(d.warnings.size(), 1u);
}
