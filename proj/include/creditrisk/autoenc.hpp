#pragma once

// Stacked autoencoder: symmetric dense layers, tanh on every hidden layer
// (the code layer included), identity on the output, trained end to end by
// plain minibatch SGD on reconstruction MSE.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "creditrisk/core.hpp"
#include "creditrisk/data.hpp"
#include "creditrisk/encode.hpp"

namespace creditrisk {

struct AutoencoderParams {
    std::vector<std::size_t> dims;      // input, ..., code, ..., output
    std::vector<Matrix> weights;        // layer l: dims[l+1] x dims[l]
    std::vector<std::vector<double>> biases;

    std::size_t layers() const noexcept { return weights.size(); }
    std::size_t input_dim() const { return dims.front(); }
    std::size_t code_dim() const { return dims[dims.size() / 2]; }
    std::size_t code_layer() const { return dims.size() / 2; }  // activation index of the code
};

inline void check_autoencoder_dims(const std::vector<std::size_t>& dims, bool strict_six_layers) {
    if (dims.size() < 3 || dims.size() % 2 == 0)
        throw ConfigError("autoencoder: dims must have an odd number >= 3 of entries");
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] == 0) throw ConfigError("autoencoder: zero-width layer");
        if (dims[i] != dims[dims.size() - 1 - i]) throw ConfigError("autoencoder: dims must be symmetric");
    }
    if (strict_six_layers && dims.size() != 7)
        throw ConfigError("autoencoder: expected 3 encoder and 3 decoder layers, got " +
                          std::to_string((dims.size() - 1) / 2) + " per side");
    const std::size_t code = dims[dims.size() / 2];
    if (code >= dims.front()) throw ConfigError("autoencoder: code dimension must be below the input dimension");
}

// Glorot-uniform weights, zero biases.
inline AutoencoderParams init_autoencoder(const std::vector<std::size_t>& dims, std::uint64_t seed,
                                          bool strict_six_layers = true) {
    check_autoencoder_dims(dims, strict_six_layers);
    AutoencoderParams p;
    p.dims = dims;
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t in = dims[l], out = dims[l + 1];
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        Matrix w(out, in);
        for (double& v : w.data()) v = rng.uniform(-a, a);
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(out, 0.0);
    }
    return p;
}

namespace detail {

// activations[0] = x; activations[l+1] = layer l output.
inline std::vector<std::vector<double>> ae_forward_all(const AutoencoderParams& p, std::span<const double> x) {
    std::vector<std::vector<double>> act;
    act.emplace_back(x.begin(), x.end());
    for (std::size_t l = 0; l < p.layers(); ++l) {
        const Matrix& w = p.weights[l];
        const auto& in = act.back();
        std::vector<double> out(w.rows());
        const bool last = l + 1 == p.layers();
        for (std::size_t i = 0; i < w.rows(); ++i) {
            double s = p.biases[l][i];
            auto wr = w.row(i);
            for (std::size_t j = 0; j < wr.size(); ++j) s += wr[j] * in[j];
            out[i] = last ? s : std::tanh(s);
        }
        act.push_back(std::move(out));
    }
    return act;
}

}  // namespace detail

struct AutoencoderOutput {
    std::vector<double> code;
    std::vector<double> reconstruction;
};

inline AutoencoderOutput forward(const AutoencoderParams& p, std::span<const double> x) {
    if (x.size() != p.input_dim()) throw DimensionError("autoencoder: input has wrong dimension");
    auto act = detail::ae_forward_all(p, x);
    return {act[p.code_layer()], act.back()};
}

inline std::vector<double> encode(const AutoencoderParams& p, std::span<const double> x) {
    return forward(p, x).code;
}

// Mean over rows of the mean squared error per coordinate.
inline double reconstruction_mse(const AutoencoderParams& p, const Matrix& data) {
    if (data.rows() == 0) return 0.0;
    double s = 0.0;
    for (std::size_t r = 0; r < data.rows(); ++r) {
        auto x = data.row(r);
        auto rec = forward(p, x).reconstruction;
        double e = 0.0;
        for (std::size_t k = 0; k < x.size(); ++k) e += (rec[k] - x[k]) * (rec[k] - x[k]);
        s += e / static_cast<double>(x.size());
    }
    return s / static_cast<double>(data.rows());
}

struct AutoencoderGradient {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    double loss = 0.0;
};

// Backpropagated gradient of the MSE over the given rows.
inline AutoencoderGradient autoencoder_gradient(const AutoencoderParams& p, const Matrix& data,
                                                std::span<const std::size_t> rows) {
    AutoencoderGradient g;
    for (std::size_t l = 0; l < p.layers(); ++l) {
        g.weights.emplace_back(p.weights[l].rows(), p.weights[l].cols());
        g.biases.emplace_back(p.biases[l].size(), 0.0);
    }
    if (rows.empty()) return g;
    const double inv_b = 1.0 / static_cast<double>(rows.size());
    const double inv_d = 1.0 / static_cast<double>(p.input_dim());
    for (std::size_t r : rows) {
        auto x = data.row(r);
        if (x.size() != p.input_dim()) throw DimensionError("autoencoder: input has wrong dimension");
        const auto act = detail::ae_forward_all(p, x);
        const auto& out = act.back();
        std::vector<double> delta(out.size());
        double e = 0.0;
        for (std::size_t k = 0; k < out.size(); ++k) {
            const double diff = out[k] - x[k];
            e += diff * diff;
            delta[k] = 2.0 * diff * inv_d * inv_b;
        }
        g.loss += e * inv_d * inv_b;
        for (std::size_t l = p.layers(); l-- > 0;) {
            const auto& in = act[l];
            Matrix& gw = g.weights[l];
            for (std::size_t i = 0; i < delta.size(); ++i) {
                g.biases[l][i] += delta[i];
                auto gr = gw.row(i);
                for (std::size_t j = 0; j < in.size(); ++j) gr[j] += delta[i] * in[j];
            }
            if (l == 0) break;
            std::vector<double> prev(in.size(), 0.0);
            const Matrix& w = p.weights[l];
            for (std::size_t i = 0; i < delta.size(); ++i) {
                auto wr = w.row(i);
                for (std::size_t j = 0; j < in.size(); ++j) prev[j] += wr[j] * delta[i];
            }
            for (std::size_t j = 0; j < in.size(); ++j) prev[j] *= 1.0 - in[j] * in[j];  // tanh'
            delta = std::move(prev);
        }
    }
    return g;
}

struct AutoencoderTrainOptions {
    std::size_t epochs = 200;
    std::size_t batch_size = 32;
    double learning_rate = 0.05;
    std::uint64_t seed = 5;
};

struct TrainLog {
    std::vector<double> mse;  // full-data reconstruction MSE after each epoch
    std::size_t epochs = 0;
    std::uint64_t seed = 0;
};

inline std::pair<AutoencoderParams, TrainLog> train_autoencoder(AutoencoderParams p, const Matrix& data,
                                                                const AutoencoderTrainOptions& opt = {}) {
    if (data.rows() == 0) throw DomainError("autoencoder: empty training data");
    if (data.cols() != p.input_dim()) throw DimensionError("autoencoder: input has wrong dimension");
    if (opt.epochs == 0 || opt.batch_size == 0) throw ConfigError("autoencoder: epochs and batch_size must be >= 1");
    if (!(opt.learning_rate >= 0) || !std::isfinite(opt.learning_rate))
        throw ConfigError("autoencoder: learning_rate must be finite and >= 0");
    TrainLog log;
    log.epochs = opt.epochs;
    log.seed = opt.seed;
    Rng rng(opt.seed);
    std::vector<std::size_t> order(data.rows());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t b = 0; b < order.size(); b += opt.batch_size) {
            const std::size_t e = std::min(order.size(), b + opt.batch_size);
            const auto g = autoencoder_gradient(p, data, std::span<const std::size_t>(order).subspan(b, e - b));
            if (!std::isfinite(g.loss))
                throw FitError("autoencoder: non-finite loss in epoch " + std::to_string(epoch + 1));
            for (std::size_t l = 0; l < p.layers(); ++l) {
                auto& w = p.weights[l].data();
                const auto& gw = g.weights[l].data();
                for (std::size_t k = 0; k < w.size(); ++k) w[k] -= opt.learning_rate * gw[k];
                for (std::size_t k = 0; k < p.biases[l].size(); ++k)
                    p.biases[l][k] -= opt.learning_rate * g.biases[l][k];
            }
        }
        const double mse = reconstruction_mse(p, data);
        if (!std::isfinite(mse)) throw FitError("autoencoder: non-finite loss in epoch " + std::to_string(epoch + 1));
        log.mse.push_back(mse);
    }
    return {std::move(p), std::move(log)};
}

struct EncodedTable {
    std::vector<std::string> keys;
    std::vector<std::string> column_names;  // emb_0 .. emb_{d-1}
    Matrix codes;                           // one row per key
};

inline std::vector<std::string> embedding_column_names(std::size_t d) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < d; ++i) names.push_back("emb_" + std::to_string(i));
    return names;
}

inline EncodedTable encode_all(const AutoencoderParams& p, const EmbeddingTable& table) {
    EncodedTable out;
    out.column_names = embedding_column_names(p.code_dim());
    out.codes = Matrix(0, p.code_dim());
    if (table.size() == 0) return out;
    if (table.dimension() != p.input_dim()) throw DimensionError("encode_all: embedding dimension mismatch");
    for (const auto& key : table.keys()) {
        out.keys.push_back(key);
        out.codes.append_row(encode(p, *table.find(key)));
    }
    return out;
}

// Appends emb_* columns looked up through the categorical column `key_column`;
// rows whose category has no embedding get missing values.
inline void add_embedding_columns(Dataset& ds, const std::string& key_column, const AutoencoderParams& p,
                                  const EmbeddingTable& table) {
    const auto col = ds.column_index(key_column);
    if (!col) throw DomainError("add_embedding_columns: no column named '" + key_column + "'");
    if (ds.feature_kinds[*col] != FeatureKind::Categorical)
        throw DomainError("add_embedding_columns: '" + key_column + "' is not categorical");
    const auto& dict = ds.dictionaries[*col];
    std::vector<std::vector<double>> code_of(dict.size());
    for (std::size_t c = 0; c < dict.size(); ++c)
        if (const auto* v = table.find(dict[c])) code_of[c] = encode(p, *v);
    const auto names = embedding_column_names(p.code_dim());
    for (std::size_t k = 0; k < names.size(); ++k) {
        std::vector<double> values(ds.n_rows(), kMissing);
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            const double code = ds.features(r, *col);
            if (is_missing(code)) continue;
            const auto& v = code_of[static_cast<std::size_t>(code)];
            if (!v.empty()) values[r] = v[k];
        }
        ds.add_column(names[k], FeatureKind::Embedding, values);
    }
}

inline nlohmann::json to_json(const AutoencoderParams& p) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < p.layers(); ++l)
        layers.push_back({{"weights", p.weights[l].data()}, {"biases", p.biases[l]}});
    return {{"format", "creditrisk.autoencoder/1"},
            {"dims", p.dims},
            {"activation", {{"hidden", "tanh"}, {"output", "identity"}}},
            {"layers", layers}};
}

inline AutoencoderParams autoencoder_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "creditrisk.autoencoder/1") throw DomainError("autoencoder json: unknown format");
    AutoencoderParams p;
    p.dims = j.at("dims").get<std::vector<std::size_t>>();
    check_autoencoder_dims(p.dims, false);
    const auto& layers = j.at("layers");
    if (layers.size() + 1 != p.dims.size()) throw DomainError("autoencoder json: layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        Matrix w(p.dims[l + 1], p.dims[l]);
        auto values = layers[l].at("weights").get<std::vector<double>>();
        if (values.size() != w.data().size()) throw DomainError("autoencoder json: weight shape mismatch");
        w.data() = std::move(values);
        p.weights.push_back(std::move(w));
        p.biases.push_back(layers[l].at("biases").get<std::vector<double>>());
        if (p.biases.back().size() != p.dims[l + 1]) throw DomainError("autoencoder json: bias shape mismatch");
    }
    return p;
}

}  // namespace creditrisk
