#pragma once

// Local explanations.
//
// Shapley values use the interventional value function
//   v(S) = mean_b f(x_S, b_{~S})
// over a background sample, computed by exact enumeration of coalitions.
// LIME fits a kernel-weighted ridge surrogate to perturbations of one row.

#include <bit>
#include <functional>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "creditrisk/core.hpp"
#include "creditrisk/data.hpp"
#include "creditrisk/gbdt.hpp"

namespace creditrisk {

using ScoreFunction = std::function<double(std::span<const double>)>;

struct ShapExplanation {
    double base_value = 0.0;  // v(empty set)
    double fx = 0.0;          // model output at the instance
    std::vector<double> phi;
    std::vector<double> feature_values;
};

namespace detail {

// s!(m-s-1)!/m! for s = 0..m-1.
inline std::vector<double> shapley_weights(std::size_t m) {
    std::vector<double> w(m);
    for (std::size_t s = 0; s < m; ++s)
        w[s] = std::exp(std::lgamma(static_cast<double>(s) + 1) +
                        std::lgamma(static_cast<double>(m - s)) - std::lgamma(static_cast<double>(m) + 1));
    return w;
}

// phi_j = sum_{S not containing j} w(|S|) [v(S u j) - v(S)], with v indexed by bitmask.
inline std::vector<double> shapley_from_table(std::span<const double> v, std::size_t m) {
    const auto w = shapley_weights(m);
    std::vector<double> phi(m, 0.0);
    const std::size_t full = std::size_t{1} << m;
    for (std::size_t s = 0; s < full; ++s) {
        const auto size = static_cast<std::size_t>(std::popcount(s));
        if (size == m) continue;
        const double ws = w[size];
        for (std::size_t j = 0; j < m; ++j) {
            const std::size_t bit = std::size_t{1} << j;
            if (s & bit) continue;
            phi[j] += ws * (v[s | bit] - v[s]);
        }
    }
    return phi;
}

inline void check_shapley_inputs(std::size_t m, const Matrix& background, std::size_t max_features) {
    if (background.rows() == 0) throw DomainError("exact_shapley: empty background sample");
    if (background.cols() != m) throw DimensionError("exact_shapley: background width mismatch");
    if (m > max_features)
        throw ConfigError("exact_shapley: " + std::to_string(m) + " features exceed the exact-enumeration cap of " +
                          std::to_string(max_features) + "; reduce the feature set (e.g. via feature selection)");
}

}  // namespace detail

// Model-agnostic: 2^m coalitions x |background| model calls.
inline ShapExplanation exact_shapley(const ScoreFunction& model, std::span<const double> x, const Matrix& background,
                                     std::size_t max_features = 15) {
    const std::size_t m = x.size();
    detail::check_shapley_inputs(m, background, max_features);
    const std::size_t full = std::size_t{1} << m;
    std::vector<double> v(full, 0.0), row(m);
    for (std::size_t s = 0; s < full; ++s) {
        double acc = 0.0;
        for (std::size_t b = 0; b < background.rows(); ++b) {
            auto bg = background.row(b);
            for (std::size_t j = 0; j < m; ++j) row[j] = (s >> j) & 1 ? x[j] : bg[j];
            acc += model(row);
        }
        v[s] = acc / static_cast<double>(background.rows());
    }
    ShapExplanation e;
    e.phi = detail::shapley_from_table(v, m);
    e.base_value = v[0];
    e.fx = model(x);
    e.feature_values.assign(x.begin(), x.end());
    return e;
}

namespace detail {

// Fills table[S] += value for every coalition S of the tree's local features
// under which the composite of (x, b) reaches each leaf. A leaf is reached iff
// the features where only x goes its way are in S and those where only b goes
// its way are not; all other coalitions are free.
inline void accumulate_tree_table(const Tree& tree, std::span<const double> x, std::span<const double> b,
                                  std::span<const int> local, std::vector<double>& table, std::size_t m_local) {
    const std::size_t all = (std::size_t{1} << m_local) - 1;
    auto goes_left = [](const TreeNode& n, double v) { return is_missing(v) ? n.missing_left : v <= n.threshold; };
    auto visit = [&](auto&& self, int node, std::size_t in, std::size_t out) -> void {
        const TreeNode& n = tree.nodes[static_cast<std::size_t>(node)];
        if (n.is_leaf()) {
            const std::size_t free = all & ~(in | out);
            for (std::size_t sub = free;; sub = (sub - 1) & free) {
                table[in | sub] += n.value;
                if (sub == 0) break;
            }
            return;
        }
        const bool lx = goes_left(n, x[static_cast<std::size_t>(n.feature)]);
        const bool lb = goes_left(n, b[static_cast<std::size_t>(n.feature)]);
        const int cx = lx ? n.left : n.right, cb = lb ? n.left : n.right;
        if (lx == lb) return self(self, cx, in, out);
        const std::size_t bit = std::size_t{1} << local[static_cast<std::size_t>(n.feature)];
        if (in & bit) return self(self, cx, in, out);
        if (out & bit) return self(self, cb, in, out);
        self(self, cx, in | bit, out);
        self(self, cb, in, out | bit);
    };
    visit(visit, 0, 0, 0);
}

}  // namespace detail

// Same value function for a boosted-tree model's raw log-odds score. By
// linearity the game splits into one game per tree, each enumerated over the
// features that tree splits on; features a tree never uses are null players.
inline ShapExplanation exact_shapley(const GbdtModel& model, std::span<const double> x, const Matrix& background,
                                     std::size_t max_features = 15) {
    const std::size_t m = x.size();
    if (m != model.n_features) throw DimensionError("exact_shapley: width mismatch");
    detail::check_shapley_inputs(m, background, max_features);
    ShapExplanation e;
    e.phi.assign(m, 0.0);
    e.feature_values.assign(x.begin(), x.end());
    double base_sum = 0.0;
    std::vector<int> local(m, -1);
    std::vector<std::size_t> used;
    for (const Tree& tree : model.trees) {
        used.clear();
        std::fill(local.begin(), local.end(), -1);
        for (const auto& n : tree.nodes) {
            if (n.is_leaf()) continue;
            auto f = static_cast<std::size_t>(n.feature);
            if (local[f] < 0) {
                local[f] = static_cast<int>(used.size());
                used.push_back(f);
            }
        }
        const std::size_t ml = used.size();
        std::vector<double> table(std::size_t{1} << ml, 0.0);
        for (std::size_t b = 0; b < background.rows(); ++b)
            detail::accumulate_tree_table(tree, x, background.row(b), local, table, ml);
        const double inv = 1.0 / static_cast<double>(background.rows());
        for (double& t : table) t *= inv;
        base_sum += table[0];
        if (ml == 0) continue;
        const auto phi_local = detail::shapley_from_table(table, ml);
        for (std::size_t i = 0; i < ml; ++i) e.phi[used[i]] += model.learning_rate * phi_local[i];
    }
    e.base_value = model.base_score + model.learning_rate * base_sum;
    e.fx = model.raw_score(x);
    return e;
}

// ----------------------------------------------------------------------------
// LIME
// ----------------------------------------------------------------------------

struct LimeOptions {
    std::size_t n_samples = 5000;
    double kernel_width = 0.0;  // <= 0: 0.75 * sqrt(#features)
    std::size_t top_k = 5;
    double ridge = 1e-3;
    double flip_probability = 0.5;
    std::uint64_t seed = 17;
};

struct LimeExplanation {
    double intercept = 0.0;
    std::vector<std::pair<std::size_t, double>> coefficients;  // top-k (feature, weight)
    double kernel_width = 0.0;
    double local_fit_r2 = 0.0;
    std::size_t n_samples = 0;
    double model_output = 0.0;
    // intercept + sum of kept coefficient * feature value at the instance.
    double local_prediction = 0.0;
};

namespace detail {

// Solves the SPD system a * x = rhs in place (Cholesky). a is n x n row-major.
inline std::vector<double> solve_spd(std::vector<double> a, std::vector<double> rhs, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        double d = a[j * n + j];
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(d > 0)) throw FitError("lime: surrogate normal equations are singular");
        d = std::sqrt(d);
        a[j * n + j] = d;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / d;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double s = rhs[i];
        for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * rhs[k];
        rhs[i] = s / a[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        double s = rhs[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * rhs[k];
        rhs[i] = s / a[i * n + i];
    }
    return rhs;
}

}  // namespace detail

inline LimeExplanation lime_explain(const ScoreFunction& model, std::span<const double> x, const Matrix& background,
                                    const LimeOptions& opt = {}) {
    const std::size_t p = x.size();
    if (background.rows() == 0) throw DomainError("lime: empty background sample");
    if (background.cols() != p) throw DimensionError("lime: background width mismatch");
    if (opt.n_samples < 2) throw ConfigError("lime: need at least 2 samples");
    if (opt.top_k == 0) throw ConfigError("lime: top_k must be >= 1");

    std::vector<double> mu(p), sd(p);
    for (std::size_t j = 0; j < p; ++j) {
        std::vector<double> col;
        for (std::size_t r = 0; r < background.rows(); ++r)
            if (!is_missing(background(r, j))) col.push_back(background(r, j));
        mu[j] = mean(col);
        sd[j] = std::sqrt(variance(col));
        if (!(sd[j] > 0)) sd[j] = 1.0;
    }
    const double width = opt.kernel_width > 0 ? opt.kernel_width : 0.75 * std::sqrt(static_cast<double>(p));

    Rng rng(opt.seed);
    const std::size_t n = opt.n_samples;
    Matrix z(n, p);
    std::vector<double> fz(n), wt(n);
    auto value_or_mean = [&](double v, std::size_t j) { return is_missing(v) ? mu[j] : v; };
    for (std::size_t i = 0; i < n; ++i) {
        auto row = z.row(i);
        double d2 = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            double v = x[j];
            if (i > 0 && rng.uniform() < opt.flip_probability) v = background(rng.below(background.rows()), j);
            row[j] = v;
            const double diff = (value_or_mean(v, j) - value_or_mean(x[j], j)) / sd[j];
            d2 += diff * diff;
        }
        wt[i] = std::exp(-d2 / (width * width));
        fz[i] = model(row);
    }
    const double wsum = std::accumulate(wt.begin(), wt.end(), 0.0);
    if (!(wsum > 1e-12 * static_cast<double>(n)))
        throw FitError("lime: kernel weights vanish; increase kernel_width");

    // Weighted ridge with an unpenalized intercept: center by weighted means.
    std::vector<double> xbar(p, 0.0);
    double ybar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) xbar[j] += wt[i] * value_or_mean(z(i, j), j);
        ybar += wt[i] * fz[i];
    }
    for (double& v : xbar) v /= wsum;
    ybar /= wsum;
    std::vector<double> a(p * p, 0.0), rhs(p, 0.0), xc(p);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) xc[j] = value_or_mean(z(i, j), j) - xbar[j];
        const double yc = fz[i] - ybar;
        for (std::size_t j = 0; j < p; ++j) {
            rhs[j] += wt[i] * xc[j] * yc;
            for (std::size_t k = 0; k <= j; ++k) a[j * p + k] += wt[i] * xc[j] * xc[k];
        }
    }
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t k = 0; k < j; ++k) a[k * p + j] = a[j * p + k];
        a[j * p + j] += opt.ridge;
    }
    const std::vector<double> beta = detail::solve_spd(a, rhs, p);

    LimeExplanation e;
    e.kernel_width = width;
    e.n_samples = n;
    e.model_output = model(x);
    e.intercept = ybar;
    for (std::size_t j = 0; j < p; ++j) e.intercept -= beta[j] * xbar[j];

    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double pred = e.intercept;
        for (std::size_t j = 0; j < p; ++j) pred += beta[j] * value_or_mean(z(i, j), j);
        ss_res += wt[i] * (fz[i] - pred) * (fz[i] - pred);
        ss_tot += wt[i] * (fz[i] - ybar) * (fz[i] - ybar);
    }
    e.local_fit_r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;

    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return std::abs(beta[i] * sd[i]) > std::abs(beta[j] * sd[j]);
    });
    const std::size_t keep = std::min(opt.top_k, p);
    e.local_prediction = e.intercept;
    for (std::size_t r = 0; r < keep; ++r) {
        const std::size_t j = order[r];
        e.coefficients.emplace_back(j, beta[j]);
        e.local_prediction += beta[j] * value_or_mean(x[j], j);
    }
    return e;
}

// ----------------------------------------------------------------------------
// Summaries for plotting
// ----------------------------------------------------------------------------

struct ShapRecord {
    std::size_t instance;
    std::size_t feature;
    double phi;
    double feature_value;
};

struct WaterfallStep {
    std::size_t instance;
    std::size_t rank;
    std::size_t feature;
    double phi;
    double cumulative;  // base + sum of contributions up to and including this step
};

struct ShapSummary {
    std::vector<ShapRecord> records;        // long format, also the dependence data
    std::vector<double> mean_abs_phi;       // per feature
    std::vector<std::size_t> ranking;       // features by mean |phi| descending
    std::vector<WaterfallStep> waterfall;   // per instance, contributions by |phi| descending
};

inline ShapSummary summary_stats(std::span<const ShapExplanation> batch) {
    if (batch.empty()) throw DomainError("summary_stats: empty batch");
    const std::size_t m = batch[0].phi.size();
    ShapSummary s;
    s.mean_abs_phi.assign(m, 0.0);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& e = batch[i];
        if (e.phi.size() != m) throw DimensionError("summary_stats: explanations differ in width");
        for (std::size_t j = 0; j < m; ++j) {
            s.records.push_back({i, j, e.phi[j], j < e.feature_values.size() ? e.feature_values[j] : kMissing});
            s.mean_abs_phi[j] += std::abs(e.phi[j]);
        }
        std::vector<std::size_t> order(m);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return std::abs(e.phi[a]) > std::abs(e.phi[b]); });
        double cum = e.base_value;
        for (std::size_t r = 0; r < m; ++r) {
            cum += e.phi[order[r]];
            s.waterfall.push_back({i, r, order[r], e.phi[order[r]], cum});
        }
    }
    for (double& v : s.mean_abs_phi) v /= static_cast<double>(batch.size());
    s.ranking.resize(m);
    std::iota(s.ranking.begin(), s.ranking.end(), std::size_t{0});
    std::stable_sort(s.ranking.begin(), s.ranking.end(),
                     [&](std::size_t a, std::size_t b) { return s.mean_abs_phi[a] > s.mean_abs_phi[b]; });
    return s;
}

inline void write_summary_csv(std::ostream& out, const ShapSummary& s, const std::vector<std::string>& names) {
    out << "instance,feature,phi,feature_value\n";
    for (const auto& r : s.records)
        out << r.instance << ',' << csv::quote(names[r.feature]) << ',' << csv::format_double(r.phi) << ','
            << csv::format_double(r.feature_value) << '\n';
}

inline void write_ranking_csv(std::ostream& out, const ShapSummary& s, const std::vector<std::string>& names) {
    out << "rank,feature,mean_abs_phi\n";
    for (std::size_t r = 0; r < s.ranking.size(); ++r)
        out << r << ',' << csv::quote(names[s.ranking[r]]) << ',' << csv::format_double(s.mean_abs_phi[s.ranking[r]])
            << '\n';
}

inline void write_waterfall_csv(std::ostream& out, const ShapSummary& s, std::span<const ShapExplanation> batch,
                                const std::vector<std::string>& names) {
    out << "instance,step,feature,phi,cumulative\n";
    std::size_t last = std::numeric_limits<std::size_t>::max();
    for (const auto& w : s.waterfall) {
        if (w.instance != last) {
            out << w.instance << ",base,,," << csv::format_double(batch[w.instance].base_value) << '\n';
            last = w.instance;
        }
        out << w.instance << ',' << w.rank << ',' << csv::quote(names[w.feature]) << ','
            << csv::format_double(w.phi) << ',' << csv::format_double(w.cumulative) << '\n';
    }
}

inline nlohmann::json to_json(const ShapExplanation& e, const std::vector<std::string>& names) {
    nlohmann::json phi = nlohmann::json::object();
    for (std::size_t j = 0; j < e.phi.size(); ++j) phi[names[j]] = e.phi[j];
    return {{"base_value", e.base_value}, {"fx", e.fx}, {"phi", phi}};
}

inline nlohmann::json to_json(const LimeExplanation& e, const std::vector<std::string>& names) {
    nlohmann::json coef = nlohmann::json::array();
    for (const auto& [j, w] : e.coefficients) coef.push_back({{"feature", names[j]}, {"weight", w}});
    return {{"intercept", e.intercept},
            {"coefficients", coef},
            {"kernel_width", e.kernel_width},
            {"local_fit_r2", e.local_fit_r2},
            {"n_samples", e.n_samples},
            {"model_output", e.model_output},
            {"local_prediction", e.local_prediction}};
}

}  // namespace creditrisk
