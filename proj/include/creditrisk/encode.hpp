#pragma once

// Categorical encoders: label, one-hot and James-Stein target encoding, plus
// ingestion of precomputed embedding vectors keyed by category label.

#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "creditrisk/core.hpp"
#include "creditrisk/data.hpp"

namespace creditrisk {

struct LabelEncoding {
    std::vector<int> codes;
    std::vector<std::string> dictionary;  // code -> label
};

// Codes follow first-appearance order.
inline LabelEncoding label_encode(const std::vector<std::string>& column) {
    LabelEncoding out;
    std::unordered_map<std::string, int> index;
    out.codes.reserve(column.size());
    for (const auto& v : column) {
        auto [it, inserted] = index.try_emplace(v, static_cast<int>(out.dictionary.size()));
        if (inserted) out.dictionary.push_back(v);
        out.codes.push_back(it->second);
    }
    return out;
}

// Sparse one-hot: per row the active column, or -1 for an out-of-vocabulary
// value (an all-zero row).
struct OneHot {
    std::size_t width = 0;
    std::vector<int> active;

    Matrix dense() const {
        Matrix m(active.size(), width);
        for (std::size_t r = 0; r < active.size(); ++r)
            if (active[r] >= 0) m(r, static_cast<std::size_t>(active[r])) = 1.0;
        return m;
    }

    std::size_t nonzeros() const {
        return static_cast<std::size_t>(std::count_if(active.begin(), active.end(), [](int c) { return c >= 0; }));
    }
};

inline OneHot one_hot_encode(const std::vector<std::string>& column, const std::vector<std::string>& vocabulary) {
    std::unordered_map<std::string, int> index;
    for (std::size_t i = 0; i < vocabulary.size(); ++i) index.emplace(vocabulary[i], static_cast<int>(i));
    OneHot out{vocabulary.size(), {}};
    out.active.reserve(column.size());
    for (const auto& v : column) {
        auto it = index.find(v);
        out.active.push_back(it == index.end() ? -1 : it->second);
    }
    return out;
}

// ----------------------------------------------------------------------------
// James-Stein target encoding
// ----------------------------------------------------------------------------

struct CategoryStats {
    std::size_t count = 0;
    double target_mean = 0.0;
    double weight = 0.0;   // shrink weight in [0, 1]
    double encoded = 0.0;  // weight * target_mean + (1 - weight) * global_mean
};

// Fitted encoder. Only fit_james_stein produces one, so a transform always
// uses statistics from the fit rows alone.
class JamesSteinEncoder {
public:
    double global_mean() const noexcept { return global_mean_; }
    double target_variance() const noexcept { return target_var_; }
    double between_variance() const noexcept { return between_var_; }
    std::size_t fitted_rows() const noexcept { return fitted_rows_; }
    const std::map<long long, CategoryStats>& categories() const noexcept { return stats_; }

    // Unseen and missing codes map to the global mean.
    double encode(double code) const {
        if (is_missing(code)) return global_mean_;
        auto it = stats_.find(static_cast<long long>(code));
        return it == stats_.end() ? global_mean_ : it->second.encoded;
    }

    std::vector<double> transform(std::span<const double> codes) const {
        std::vector<double> out(codes.size());
        for (std::size_t i = 0; i < codes.size(); ++i) out[i] = encode(codes[i]);
        return out;
    }

private:
    friend JamesSteinEncoder fit_james_stein(std::span<const double>, std::span<const int>);
    double global_mean_ = 0.0;
    double target_var_ = 0.0;
    double between_var_ = 0.0;
    std::size_t fitted_rows_ = 0;
    std::map<long long, CategoryStats> stats_;
};

// w_k = n_k tau^2 / (n_k tau^2 + s^2), with s^2 the target variance over all
// rows and tau^2 the variance of category means over categories with n_k >= 2.
inline JamesSteinEncoder fit_james_stein(std::span<const double> codes, std::span<const int> target) {
    if (codes.size() != target.size()) throw DimensionError("fit_james_stein: length mismatch");
    if (target.empty()) throw FitError("fit_james_stein: empty column");
    const bool constant = std::all_of(target.begin(), target.end(), [&](int t) { return t == target[0]; });
    if (constant) throw FitError("fit_james_stein: target is constant");

    JamesSteinEncoder enc;
    std::vector<double> y(target.begin(), target.end());
    enc.global_mean_ = mean(y);
    enc.target_var_ = variance(y);
    enc.fitted_rows_ = target.size();

    std::map<long long, std::pair<std::size_t, double>> acc;
    for (std::size_t i = 0; i < codes.size(); ++i) {
        if (is_missing(codes[i])) continue;
        auto& [n, s] = acc[static_cast<long long>(codes[i])];
        ++n;
        s += target[i];
    }
    std::vector<double> means_multi;
    for (const auto& [code, ns] : acc) {
        CategoryStats cs;
        cs.count = ns.first;
        cs.target_mean = ns.second / static_cast<double>(ns.first);
        enc.stats_[code] = cs;
        if (cs.count >= 2) means_multi.push_back(cs.target_mean);
    }
    enc.between_var_ = means_multi.size() >= 2 ? variance(means_multi) : 0.0;

    for (auto& [code, cs] : enc.stats_) {
        const double num = static_cast<double>(cs.count) * enc.between_var_;
        const double den = num + enc.target_var_;
        cs.weight = den > 0.0 ? std::clamp(num / den, 0.0, 1.0) : 0.0;
        cs.encoded = cs.weight * cs.target_mean + (1.0 - cs.weight) * enc.global_mean_;
    }
    return enc;
}

// ----------------------------------------------------------------------------
// Embeddings
// ----------------------------------------------------------------------------

class EmbeddingTable {
public:
    std::size_t dimension() const noexcept { return dim_; }
    std::size_t size() const noexcept { return keys_.size(); }
    bool empty() const noexcept { return keys_.empty(); }
    const std::vector<std::string>& keys() const noexcept { return keys_; }

    const std::vector<double>* find(const std::string& key) const {
        auto it = index_.find(key);
        return it == index_.end() ? nullptr : &vectors_[it->second];
    }

    const std::vector<double>& vector_at(std::size_t i) const { return vectors_[i]; }

    // Returns true when `key` replaced an existing entry.
    bool insert(const std::string& key, std::vector<double> v) {
        if (keys_.empty() && dim_ == 0) dim_ = v.size();
        if (v.size() != dim_)
            throw IngestionError("embeddings: key '" + key + "' has dimension " + std::to_string(v.size()) +
                                 ", expected " + std::to_string(dim_));
        auto it = index_.find(key);
        if (it != index_.end()) {
            vectors_[it->second] = std::move(v);
            return true;
        }
        index_.emplace(key, keys_.size());
        keys_.push_back(key);
        vectors_.push_back(std::move(v));
        return false;
    }

    Matrix as_matrix() const {
        Matrix m(size(), dim_);
        for (std::size_t i = 0; i < size(); ++i)
            std::copy(vectors_[i].begin(), vectors_[i].end(), m.row(i).begin());
        return m;
    }

private:
    std::size_t dim_ = 0;
    std::vector<std::string> keys_;
    std::vector<std::vector<double>> vectors_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct EmbeddingLoad {
    EmbeddingTable table;
    std::vector<std::string> warnings;
};

// One record per line: key, then whitespace-separated reals. Duplicate keys:
// last one wins, with a warning.
inline EmbeddingLoad load_embeddings(std::istream& in) {
    EmbeddingLoad out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string key;
        if (!(ss >> key)) continue;
        std::vector<double> v;
        std::string tok;
        while (ss >> tok) {
            auto d = csv::parse_double(tok);
            if (!d)
                throw IngestionError("embeddings: line " + std::to_string(lineno) + ": bad number '" + tok + "'");
            v.push_back(*d);
        }
        if (v.empty()) throw IngestionError("embeddings: line " + std::to_string(lineno) + ": no vector");
        try {
            if (out.table.insert(key, std::move(v)))
                out.warnings.push_back("embeddings: duplicate key '" + key + "' on line " +
                                       std::to_string(lineno) + ", last value kept");
        } catch (const IngestionError& e) {
            throw IngestionError(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
        }
    }
    return out;
}

inline EmbeddingLoad load_embeddings(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("embeddings: cannot open '" + path + "'");
    return load_embeddings(in);
}

}  // namespace creditrisk
