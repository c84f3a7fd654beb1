#pragma once

// Feature selection by hard voting over six scorers: |Pearson r|, chi-squared
// on equal-frequency bins, RFE with L2 logistic, L1 logistic, random-forest
// gain importance and boosted-tree gain importance.
//
// Scorers take a numeric design; categorical columns are expected to be
// target-encoded first. Linear scorers replace missing values by the column
// mean of the observed entries.

#include <array>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "creditrisk/core.hpp"
#include "creditrisk/data.hpp"
#include "creditrisk/gbdt.hpp"
#include "creditrisk/linmod.hpp"

namespace creditrisk {

namespace detail {

inline Matrix mean_imputed(const Matrix& x) {
    Matrix out = x;
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double s = 0.0;
        std::size_t n = 0;
        for (std::size_t r = 0; r < x.rows(); ++r)
            if (!is_missing(x(r, j))) s += x(r, j), ++n;
        const double fill = n > 0 ? s / static_cast<double>(n) : 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r)
            if (is_missing(out(r, j))) out(r, j) = fill;
    }
    return out;
}

}  // namespace detail

// |r| per column over rows where the feature is observed; 0 for zero variance.
inline std::vector<double> pearson_scores(const Matrix& x, std::span<const int> y) {
    if (x.rows() != y.size()) throw DimensionError("pearson_scores: row count mismatch");
    std::vector<double> out(x.cols(), 0.0);
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double sx = 0, sy = 0;
        std::size_t n = 0;
        for (std::size_t r = 0; r < x.rows(); ++r)
            if (!is_missing(x(r, j))) sx += x(r, j), sy += y[r], ++n;
        if (n < 2) continue;
        const double mx = sx / static_cast<double>(n), my = sy / static_cast<double>(n);
        double cxy = 0, cxx = 0, cyy = 0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            if (is_missing(x(r, j))) continue;
            const double dx = x(r, j) - mx, dy = y[r] - my;
            cxy += dx * dy;
            cxx += dx * dx;
            cyy += dy * dy;
        }
        if (cxx > 0 && cyy > 0) out[j] = std::min(1.0, std::abs(cxy) / std::sqrt(cxx * cyy));
    }
    return out;
}

// Equal-frequency bin of every row: tied values share the bin of their first
// sorted position, so any strictly increasing transform leaves bins unchanged.
// Missing values get their own bin (index n_bins).
inline std::vector<std::size_t> equal_frequency_bins(std::span<const double> v, std::size_t n_bins) {
    if (n_bins == 0) throw ConfigError("equal_frequency_bins: n_bins must be >= 1");
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!is_missing(v[i])) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<std::size_t> bin(v.size(), n_bins);
    const std::size_t m = order.size();
    std::size_t first = 0;
    for (std::size_t k = 0; k < m; ++k) {
        if (k > 0 && v[order[k]] != v[order[k - 1]]) first = k;
        bin[order[k]] = std::min(n_bins - 1, first * n_bins / m);
    }
    return bin;
}

// Pearson chi-squared of the bin x class table. Empty bins and classes carry
// no rows, so they are dropped (merged away) rather than divided by zero.
inline double chi2_statistic(std::span<const std::size_t> bins, std::span<const int> y, std::size_t n_bins) {
    std::vector<std::array<double, 2>> obs(n_bins + 1, {0.0, 0.0});
    for (std::size_t i = 0; i < bins.size(); ++i) obs[bins[i]][y[i] == 1 ? 1 : 0] += 1;
    std::array<double, 2> col{0, 0};
    for (const auto& o : obs) col[0] += o[0], col[1] += o[1];
    const double n = col[0] + col[1];
    if (n == 0) return 0.0;
    double chi2 = 0.0;
    for (const auto& o : obs) {
        const double row = o[0] + o[1];
        if (row == 0) continue;
        for (int c = 0; c < 2; ++c) {
            const double e = row * col[static_cast<std::size_t>(c)] / n;
            if (e > 0) chi2 += (o[static_cast<std::size_t>(c)] - e) * (o[static_cast<std::size_t>(c)] - e) / e;
        }
    }
    return chi2;
}

inline std::vector<double> chi2_scores(const Matrix& x, std::span<const int> y, std::size_t n_bins = 10) {
    if (x.rows() != y.size()) throw DimensionError("chi2_scores: row count mismatch");
    std::vector<double> out(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) {
        const auto col = x.column(j);
        out[j] = chi2_statistic(equal_frequency_bins(col, n_bins), y, n_bins);
    }
    return out;
}

struct RfeResult {
    std::vector<std::size_t> ranking;     // best first; the last entry was eliminated first
    std::vector<std::size_t> eliminated;  // in elimination order
    std::vector<std::string> warnings;
};

// Recursive feature elimination with an L2 logistic estimator on standardized
// features: drop the `step` smallest |standardized weight| until n_keep remain.
inline RfeResult rfe(const Matrix& x, std::span<const int> y, std::size_t n_keep, std::size_t step = 1,
                     LogisticOptions estimator = {}) {
    if (n_keep < 1) throw ConfigError("rfe: n_keep must be >= 1");
    if (step < 1) throw ConfigError("rfe: step must be >= 1");
    estimator.penalty = Penalty::L2;
    estimator.standardize = true;
    const Matrix xi = detail::mean_imputed(x);
    std::vector<std::size_t> remaining(x.cols());
    std::iota(remaining.begin(), remaining.end(), std::size_t{0});
    RfeResult res;
    n_keep = std::min(n_keep, remaining.size());
    std::vector<double> last_weights;
    while (true) {
        const LogisticModel m = fit_logistic(xi.select_cols(remaining), y, estimator);
        if (!m.converged)
            res.warnings.push_back("rfe: estimator did not converge with " + std::to_string(remaining.size()) +
                                   " features");
        last_weights = m.standardized_weights;
        if (remaining.size() <= n_keep) break;
        const std::size_t drop = std::min(step, remaining.size() - n_keep);
        std::vector<std::size_t> pos(remaining.size());
        std::iota(pos.begin(), pos.end(), std::size_t{0});
        std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(last_weights[a]) < std::abs(last_weights[b]);
        });
        std::vector<bool> gone(remaining.size(), false);
        for (std::size_t k = 0; k < drop; ++k) {
            gone[pos[k]] = true;
            res.eliminated.push_back(remaining[pos[k]]);
        }
        std::vector<std::size_t> next;
        for (std::size_t i = 0; i < remaining.size(); ++i)
            if (!gone[i]) next.push_back(remaining[i]);
        remaining = std::move(next);
    }
    std::vector<std::size_t> pos(remaining.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    std::stable_sort(pos.begin(), pos.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(last_weights[a]) > std::abs(last_weights[b]);
    });
    for (std::size_t p : pos) res.ranking.push_back(remaining[p]);
    res.ranking.insert(res.ranking.end(), res.eliminated.rbegin(), res.eliminated.rend());
    return res;
}

struct L1Selection {
    std::vector<std::size_t> selected;  // exactly nonzero weights, by column index
    std::vector<double> standardized_weights;
    bool converged = false;
};

inline L1Selection l1_select(const Matrix& x, std::span<const int> y, double c, double tol = 1e-8,
                             std::size_t max_iter = 5000) {
    LogisticOptions opt;
    opt.penalty = Penalty::L1;
    opt.c = c;
    opt.tol = tol;
    opt.max_iter = max_iter;
    opt.standardize = true;
    const LogisticModel m = fit_logistic(detail::mean_imputed(x), y, opt);
    L1Selection s;
    s.standardized_weights = m.standardized_weights;
    s.converged = m.converged;
    for (std::size_t j = 0; j < m.weights.size(); ++j)
        if (m.standardized_weights[j] != 0.0) s.selected.push_back(j);
    return s;
}

enum class TreeModelKind { RandomForest, Gbdt };

struct TreeImportanceOptions {
    std::size_t n_trees = 100;
    std::size_t max_leaves = 31;
    std::size_t min_samples_leaf = 20;
    double feature_fraction = 0.0;  // per tree; <= 0 means ceil(sqrt(p)) features
    std::uint64_t seed = 3;
    GbdtConfig gbdt;  // used for TreeModelKind::Gbdt
};

struct TreeImportance {
    std::vector<double> importance;  // sums to 1, or all zero
    std::vector<std::string> warnings;
};

namespace detail {

inline TreeImportance normalized_importance(std::vector<double> imp, std::size_t trees) {
    TreeImportance out;
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (trees == 0 || !(total > 0)) {
        std::fill(imp.begin(), imp.end(), 0.0);
        out.warnings.push_back("tree_importance: no splits were made; importances are all zero");
    } else {
        for (double& v : imp) v /= total;
    }
    out.importance = std::move(imp);
    return out;
}

}  // namespace detail

// Total split gain per feature. The random forest grows squared-error
// regression trees on bootstrap row counts, each over a random feature subset.
inline TreeImportance tree_importance(const Matrix& x, std::span<const int> y, TreeModelKind kind,
                                      const TreeImportanceOptions& opt = {}, unsigned threads = 1) {
    if (x.rows() != y.size()) throw DimensionError("tree_importance: row count mismatch");
    const std::size_t p = x.cols(), n = x.rows();
    if (kind == TreeModelKind::Gbdt) {
        GbdtConfig cfg = opt.gbdt;
        cfg.n_trees = opt.n_trees;
        const GbdtModel m = fit_gbdt(x, y, cfg, threads);
        std::vector<double> imp(p, 0.0);
        for (const auto& t : m.trees)
            for (const auto& nd : t.nodes)
                if (!nd.is_leaf()) imp[static_cast<std::size_t>(nd.feature)] += nd.gain;
        return detail::normalized_importance(std::move(imp), m.trees.size());
    }

    std::vector<double> imp(p, 0.0);
    if (opt.n_trees == 0 || n == 0 || p == 0) return detail::normalized_importance(std::move(imp), 0);
    double ybar = 0.0;
    for (int v : y) ybar += v;
    ybar /= static_cast<double>(n);
    std::vector<double> grad(n), hess(n, 1.0), weight(n);
    for (std::size_t i = 0; i < n; ++i) grad[i] = ybar - y[i];
    const std::size_t m_feat =
        opt.feature_fraction > 0
            ? std::clamp<std::size_t>(
                  static_cast<std::size_t>(std::ceil(opt.feature_fraction * static_cast<double>(p))), 1, p)
            : std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(p)))), 1, p);
    TreeLearner learner(x);
    const TreeParams params{opt.max_leaves, opt.min_samples_leaf, 0.0, 0.0};
    Rng rng(opt.seed);
    std::vector<std::size_t> feats(p);
    std::size_t grown = 0;
    for (std::size_t t = 0; t < opt.n_trees; ++t) {
        std::fill(weight.begin(), weight.end(), 0.0);
        for (std::size_t k = 0; k < n; ++k) weight[rng.below(n)] += 1.0;
        std::iota(feats.begin(), feats.end(), std::size_t{0});
        for (std::size_t k = 0; k < m_feat; ++k) std::swap(feats[k], feats[k + rng.below(p - k)]);
        std::vector<std::size_t> allowed(feats.begin(), feats.begin() + static_cast<std::ptrdiff_t>(m_feat));
        std::sort(allowed.begin(), allowed.end());
        auto tree = learner.grow(grad, hess, weight, params, allowed, threads);
        if (!tree) continue;
        ++grown;
        for (const auto& nd : tree->nodes)
            if (!nd.is_leaf()) imp[static_cast<std::size_t>(nd.feature)] += nd.gain;
    }
    return detail::normalized_importance(std::move(imp), grown);
}

// Column indices sorted by score descending, ties by name.
inline std::vector<std::size_t> rank_by_score(std::span<const double> score, const std::vector<std::string>& names) {
    std::vector<std::size_t> idx(score.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (score[a] != score[b]) return score[a] > score[b];
        return names[a] < names[b];
    });
    return idx;
}

struct MethodRanking {
    std::string method;
    std::vector<std::size_t> ranking;  // column indices, best first
    std::vector<double> scores;        // per column, may be empty
};

struct SelectionReport {
    std::vector<std::string> feature_names;
    std::vector<MethodRanking> methods;
    std::size_t k_per_method = 0;
    std::vector<std::size_t> votes;        // per column
    std::vector<double> mean_rank;         // per column, 0-based
    std::vector<std::size_t> order;        // columns by (votes desc, mean rank asc, name asc)
    std::vector<std::string> selected;
    std::vector<std::string> warnings;
};

// Each method votes for its top k columns (k = 2 * n_final when 0).
inline SelectionReport vote_select(std::vector<MethodRanking> methods, const std::vector<std::string>& names,
                                   std::size_t n_final, std::size_t k_per_method = 0) {
    if (methods.size() < 2) throw ConfigError("vote_select: need at least 2 methods");
    const std::size_t p = names.size();
    SelectionReport rep;
    rep.feature_names = names;
    if (n_final > p) {
        rep.warnings.push_back("vote_select: n_final " + std::to_string(n_final) + " clipped to " +
                               std::to_string(p) + " features");
        n_final = p;
    }
    rep.k_per_method = k_per_method > 0 ? k_per_method : 2 * n_final;
    rep.votes.assign(p, 0);
    rep.mean_rank.assign(p, 0.0);
    for (const auto& m : methods) {
        std::vector<std::size_t> pos(p, p);
        for (std::size_t r = 0; r < m.ranking.size(); ++r) {
            if (m.ranking[r] >= p) throw DimensionError("vote_select: ranking refers to an unknown column");
            pos[m.ranking[r]] = r;
        }
        for (std::size_t j = 0; j < p; ++j) {
            rep.mean_rank[j] += static_cast<double>(pos[j]);
            if (pos[j] < rep.k_per_method) ++rep.votes[j];
        }
    }
    for (double& r : rep.mean_rank) r /= static_cast<double>(methods.size());
    rep.order.resize(p);
    std::iota(rep.order.begin(), rep.order.end(), std::size_t{0});
    std::stable_sort(rep.order.begin(), rep.order.end(), [&](std::size_t a, std::size_t b) {
        if (rep.votes[a] != rep.votes[b]) return rep.votes[a] > rep.votes[b];
        if (rep.mean_rank[a] != rep.mean_rank[b]) return rep.mean_rank[a] < rep.mean_rank[b];
        return names[a] < names[b];
    });
    for (std::size_t i = 0; i < n_final; ++i) rep.selected.push_back(names[rep.order[i]]);
    rep.methods = std::move(methods);
    return rep;
}

struct SelectionConfig {
    std::size_t n_final = 12;
    std::size_t k_per_method = 0;
    std::size_t chi2_bins = 10;
    std::size_t rfe_step = 1;
    double rfe_c = 1.0;
    double l1_c = 1000.0;  // penalty 1/c on the mean loss; small c zeroes every weight at a 2% default rate
    TreeImportanceOptions trees;
};

inline nlohmann::json to_json(const SelectionConfig& c) {
    return {{"n_final", c.n_final},   {"k_per_method", c.k_per_method}, {"chi2_bins", c.chi2_bins},
            {"rfe_step", c.rfe_step}, {"rfe_c", c.rfe_c},               {"l1_c", c.l1_c},
            {"tree_count", c.trees.n_trees}, {"tree_seed", c.trees.seed}};
}

// Runs all six scorers on a numeric design and votes.
inline SelectionReport select_features(const Matrix& x, std::span<const int> y, const std::vector<std::string>& names,
                                       const SelectionConfig& cfg, unsigned threads = 1) {
    if (names.size() != x.cols()) throw DimensionError("select_features: names do not match columns");
    std::vector<MethodRanking> methods;
    std::vector<std::string> warnings;

    auto pear = pearson_scores(x, y);
    methods.push_back({"pearson", rank_by_score(pear, names), pear});
    auto chi = chi2_scores(x, y, cfg.chi2_bins);
    methods.push_back({"chi2", rank_by_score(chi, names), chi});

    LogisticOptions est;
    est.c = cfg.rfe_c;
    RfeResult r = rfe(x, y, 1, cfg.rfe_step, est);
    warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
    methods.push_back({"rfe", r.ranking, {}});

    L1Selection l1 = l1_select(x, y, cfg.l1_c);
    if (!l1.converged) warnings.push_back("l1_select: solver did not converge");
    std::vector<double> l1_abs(l1.standardized_weights.size());
    for (std::size_t j = 0; j < l1_abs.size(); ++j) l1_abs[j] = std::abs(l1.standardized_weights[j]);
    methods.push_back({"l1_logistic", rank_by_score(l1_abs, names), l1_abs});

    TreeImportance rf = tree_importance(x, y, TreeModelKind::RandomForest, cfg.trees, threads);
    warnings.insert(warnings.end(), rf.warnings.begin(), rf.warnings.end());
    methods.push_back({"random_forest", rank_by_score(rf.importance, names), rf.importance});
    TreeImportance gb = tree_importance(x, y, TreeModelKind::Gbdt, cfg.trees, threads);
    warnings.insert(warnings.end(), gb.warnings.begin(), gb.warnings.end());
    methods.push_back({"gbdt", rank_by_score(gb.importance, names), gb.importance});

    SelectionReport rep = vote_select(std::move(methods), names, cfg.n_final, cfg.k_per_method);
    rep.warnings.insert(rep.warnings.begin(), warnings.begin(), warnings.end());
    return rep;
}

inline nlohmann::json to_json(const SelectionReport& r) {
    const auto& names = r.feature_names;
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : r.methods) {
        nlohmann::json ranking = nlohmann::json::array();
        for (std::size_t j : m.ranking) {
            nlohmann::json e = {{"feature", names[j]}};
            if (!m.scores.empty()) e["score"] = m.scores[j];
            ranking.push_back(e);
        }
        methods.push_back({{"method", m.method}, {"ranking", ranking}});
    }
    nlohmann::json votes = nlohmann::json::array();
    for (std::size_t j : r.order)
        votes.push_back({{"feature", names[j]}, {"votes", r.votes[j]}, {"mean_rank", r.mean_rank[j]}});
    return {{"format", "creditrisk.selection/1"},
            {"k_per_method", r.k_per_method},
            {"methods", methods},
            {"votes", votes},
            {"selected", r.selected},
            {"warnings", r.warnings}};
}

}  // namespace creditrisk
