#include <numeric>
#include <sstream>

#include <gtest/gtest.h>

#include "creditrisk/autoenc.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace cr = creditrisk;

namespace {

const std::vector<std::size_t> kDims{8, 6, 4, 2, 4, 6, 8};

std::vector<double> flatten(const cr::AutoencoderParams& p) {
    std::vector<double> out;
    for (std::size_t l = 0; l < p.layers(); ++l) {
        out.insert(out.end(), p.weights[l].data().begin(), p.weights[l].data().end());
        out.insert(out.end(), p.biases[l].begin(), p.biases[l].end());
    }
    return out;
}

std::vector<double> flatten(const cr::AutoencoderGradient& g) {
    std::vector<double> out;
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        out.insert(out.end(), g.weights[l].data().begin(), g.weights[l].data().end());
        out.insert(out.end(), g.biases[l].begin(), g.biases[l].end());
    }
    return out;
}

cr::AutoencoderParams unflatten(cr::AutoencoderParams p, std::span<const double> theta) {
    std::size_t k = 0;
    for (std::size_t l = 0; l < p.layers(); ++l) {
        for (double& v : p.weights[l].data()) v = theta[k++];
        for (double& v : p.biases[l]) v = theta[k++];
    }
    return p;
}

}  // namespace

TEST(Autoencoder, DimensionRules) {
    EXPECT_NO_THROW(cr::check_autoencoder_dims(kDims, true));
    EXPECT_THROW(cr::check_autoencoder_dims({8, 4, 8}, true), cr::ConfigError);
    EXPECT_NO_THROW(cr::check_autoencoder_dims({8, 4, 8}, false));
    EXPECT_THROW(cr::check_autoencoder_dims({8, 4, 6}, false), cr::ConfigError);
    EXPECT_THROW(cr::check_autoencoder_dims({4, 8, 4}, false), cr::ConfigError);
    EXPECT_THROW(cr::check_autoencoder_dims({8, 4}, false), cr::ConfigError);
}

TEST(Autoencoder, GlorotInitWithZeroBiases) {
    const auto p = cr::init_autoencoder(kDims, 1);
    ASSERT_EQ(p.layers(), 6u);
    for (std::size_t l = 0; l < p.layers(); ++l) {
        const double a = std::sqrt(6.0 / static_cast<double>(kDims[l] + kDims[l + 1]));
        EXPECT_EQ(p.weights[l].rows(), kDims[l + 1]);
        EXPECT_EQ(p.weights[l].cols(), kDims[l]);
        for (double v : p.weights[l].data()) EXPECT_LE(std::abs(v), a);
        for (double b : p.biases[l]) EXPECT_EQ(b, 0.0);
    }
    EXPECT_EQ(p.code_dim(), 2u);
}

TEST(Autoencoder, ZeroWeightsGiveZeroOutput) {
    auto p = cr::init_autoencoder(kDims, 2);
    for (auto& w : p.weights) std::fill(w.data().begin(), w.data().end(), 0.0);
    const std::vector<double> x{1, -2, 3, 0.5, 0, 1, 2, -1};
    const auto out = cr::forward(p, x);
    for (double v : out.reconstruction) EXPECT_EQ(v, 0.0);
    for (double v : out.code) EXPECT_EQ(v, 0.0);
}

TEST(Autoencoder, BackpropMatchesFiniteDifferences) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        auto p = cr::init_autoencoder(kDims, seed);
        cr::Rng rng(seed * 31);
        for (auto& b : p.biases)
            for (double& v : b) v = rng.uniform(-0.3, 0.3);
        const auto data = testutil::random_normal(5, 8, seed + 100);
        std::vector<std::size_t> rows(5);
        std::iota(rows.begin(), rows.end(), std::size_t{0});
        const auto analytic = flatten(cr::autoencoder_gradient(p, data, rows));
        const auto numeric = oracle::numeric_gradient(
            [&](std::span<const double> t) { return cr::reconstruction_mse(unflatten(p, t), data); }, flatten(p),
            1e-5);
        EXPECT_LT(oracle::max_relative_error(analytic, numeric), 1e-5) << "seed " << seed;
    }
}

TEST(Autoencoder, GradientLossEqualsReconstructionMse) {
    const auto p = cr::init_autoencoder(kDims, 3);
    const auto data = testutil::random_normal(7, 8, 4);
    std::vector<std::size_t> rows(7);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    EXPECT_NEAR(cr::autoencoder_gradient(p, data, rows).loss, cr::reconstruction_mse(p, data), 1e-14);
}

TEST(Autoencoder, LearnsIdenticalRows) {
    cr::Matrix data(32, 8);
    for (std::size_t r = 0; r < 32; ++r)
        for (std::size_t j = 0; j < 8; ++j) data(r, j) = 0.1 * static_cast<double>(j) - 0.3;
    cr::AutoencoderTrainOptions opt;
    opt.epochs = 400;
    opt.batch_size = 8;
    opt.learning_rate = 0.1;
    const auto [p, log] = cr::train_autoencoder(cr::init_autoencoder(kDims, 5), data, opt);
    EXPECT_LT(log.mse.back(), 1e-4);
    EXPECT_LT(log.mse.back(), log.mse.front());
}

TEST(Autoencoder, ZeroLearningRateLeavesParametersUnchanged) {
    const auto p0 = cr::init_autoencoder(kDims, 6);
    cr::AutoencoderTrainOptions opt;
    opt.epochs = 3;
    opt.learning_rate = 0.0;
    const auto [p, log] = cr::train_autoencoder(p0, testutil::random_normal(20, 8, 7), opt);
    EXPECT_EQ(flatten(p), flatten(p0));
}

TEST(Autoencoder, WrongInputWidthAndBadOptions) {
    const auto p = cr::init_autoencoder(kDims, 7);
    EXPECT_THROW(cr::forward(p, std::vector<double>(7, 0.0)), cr::DimensionError);
    cr::AutoencoderTrainOptions opt;
    opt.epochs = 0;
    EXPECT_THROW(cr::train_autoencoder(p, cr::Matrix(4, 8), opt), cr::ConfigError);
}

TEST(Autoencoder, JsonRoundTrip) {
    const auto p = cr::init_autoencoder(kDims, 8);
    const auto back = cr::autoencoder_from_json(cr::to_json(p));
    EXPECT_EQ(flatten(back), flatten(p));
    EXPECT_EQ(back.dims, p.dims);
}

TEST(Autoencoder, EncodesEveryEmbeddingKey) {
    std::istringstream in("a 1 2 3 4 5 6 7 8\nb 8 7 6 5 4 3 2 1\n");
    const auto table = cr::load_embeddings(in).table;
    const auto enc = cr::encode_all(cr::init_autoencoder(kDims, 9), table);
    EXPECT_EQ(enc.codes.rows(), 2u);
    EXPECT_EQ(enc.codes.cols(), 2u);
    EXPECT_EQ(enc.column_names, (std::vector<std::string>{"emb_0", "emb_1"}));
}
