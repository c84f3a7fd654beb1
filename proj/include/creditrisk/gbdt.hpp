#pragma once

// Gradient-boosted decision trees for binary classification.
//
// Trees are grown leaf-wise (best gain first) with an exact search over
// presorted feature values. Positive rows carry weight scale_pos_weight in
// the log-loss; each iteration fits one tree to the second-order expansion
// of that loss on a row subsample drawn without replacement.

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "creditrisk/core.hpp"
#include "creditrisk/data.hpp"
#include "creditrisk/metrics.hpp"

namespace creditrisk {

struct GbdtConfig {
    std::size_t n_trees = 100;
    std::size_t max_leaves = 15;
    std::size_t min_samples_leaf = 20;
    double learning_rate = 0.1;
    double subsample_fraction = 0.8;
    // Used when auto_scale_pos_weight is false.
    double scale_pos_weight = 1.0;
    // Set scale_pos_weight to #negatives / #positives of the training data.
    bool auto_scale_pos_weight = true;
    double min_gain = 0.0;
    double lambda = 1.0;
    std::uint64_t seed = 7;

    void check() const {
        if (max_leaves < 2) throw ConfigError("gbdt: max_leaves must be >= 2");
        if (min_samples_leaf < 1) throw ConfigError("gbdt: min_samples_leaf must be >= 1");
        if (!(learning_rate > 0)) throw ConfigError("gbdt: learning_rate must be > 0");
        if (!(subsample_fraction > 0 && subsample_fraction <= 1))
            throw ConfigError("gbdt: subsample_fraction must lie in (0, 1]");
        if (!(scale_pos_weight > 0)) throw ConfigError("gbdt: scale_pos_weight must be > 0");
        if (!(min_gain >= 0)) throw ConfigError("gbdt: min_gain must be >= 0");
        if (!(lambda >= 0)) throw ConfigError("gbdt: lambda must be >= 0");
    }
};

inline nlohmann::json to_json(const GbdtConfig& c) {
    return {{"n_trees", c.n_trees},
            {"max_leaves", c.max_leaves},
            {"min_samples_leaf", c.min_samples_leaf},
            {"learning_rate", c.learning_rate},
            {"subsample_fraction", c.subsample_fraction},
            {"scale_pos_weight", c.scale_pos_weight},
            {"auto_scale_pos_weight", c.auto_scale_pos_weight},
            {"min_gain", c.min_gain},
            {"lambda", c.lambda},
            {"seed", c.seed}};
}

inline GbdtConfig gbdt_config_from_json(const nlohmann::json& j, GbdtConfig c = {}) {
    c.n_trees = j.value("n_trees", c.n_trees);
    c.max_leaves = j.value("max_leaves", c.max_leaves);
    c.min_samples_leaf = j.value("min_samples_leaf", c.min_samples_leaf);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.subsample_fraction = j.value("subsample_fraction", c.subsample_fraction);
    c.scale_pos_weight = j.value("scale_pos_weight", c.scale_pos_weight);
    c.auto_scale_pos_weight = j.value("auto_scale_pos_weight", c.auto_scale_pos_weight);
    c.min_gain = j.value("min_gain", c.min_gain);
    c.lambda = j.value("lambda", c.lambda);
    c.seed = j.value("seed", c.seed);
    c.check();
    return c;
}

// Internal nodes route x[feature] <= threshold to `left`; missing values go
// left iff missing_left. Leaves have feature == -1.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    bool missing_left = true;
    int left = -1;
    int right = -1;
    double gain = 0.0;
    int leaf_id = -1;
    double value = 0.0;

    bool is_leaf() const noexcept { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root
    std::vector<double> leaf_values;  // by leaf id

    std::size_t n_leaves() const noexcept { return leaf_values.size(); }

    std::size_t leaf_of(std::span<const double> x) const {
        const TreeNode* n = &nodes[0];
        while (!n->is_leaf()) {
            const double v = x[static_cast<std::size_t>(n->feature)];
            const bool left = is_missing(v) ? n->missing_left : v <= n->threshold;
            n = &nodes[static_cast<std::size_t>(left ? n->left : n->right)];
        }
        return static_cast<std::size_t>(n->leaf_id);
    }

    double value_of(std::span<const double> x) const { return leaf_values[leaf_of(x)]; }

    static Tree single_leaf(double value) {
        Tree t;
        TreeNode leaf;
        leaf.leaf_id = 0;
        leaf.value = value;
        t.nodes.push_back(leaf);
        t.leaf_values.push_back(value);
        return t;
    }
};

struct GbdtModel {
    double base_score = 0.0;
    double learning_rate = 0.1;
    std::vector<Tree> trees;
    std::size_t n_features = 0;
    std::vector<std::string> feature_names;
    GbdtConfig config;
    // Weighted training log-loss (full training set) after each stored tree;
    // entry 0 is the base-score-only loss.
    std::vector<double> train_loss;
    std::vector<std::string> warnings;

    // base_score + learning_rate * sum of leaf values.
    double raw_score(std::span<const double> x) const {
        if (x.size() != n_features) throw DimensionError("gbdt: width mismatch");
        double sum = 0.0;
        for (const auto& t : trees) sum += t.value_of(x);
        return base_score + learning_rate * sum;
    }

    std::size_t total_leaves() const {
        std::size_t s = 0;
        for (const auto& t : trees) s += t.n_leaves();
        return s;
    }
};

inline std::vector<double> raw_scores(const GbdtModel& m, const Matrix& x) {
    if (x.cols() != m.n_features) throw DimensionError("gbdt: width mismatch");
    std::vector<double> out(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) out[r] = m.raw_score(x.row(r));
    return out;
}

inline std::vector<double> predict_proba(const GbdtModel& m, const Matrix& x) {
    auto s = raw_scores(m, x);
    for (double& v : s) v = sigmoid(v);
    return s;
}

// Row-major rows x trees table of leaf ids.
struct LeafAssignments {
    std::size_t rows = 0;
    std::size_t trees = 0;
    std::vector<std::uint32_t> ids;

    std::uint32_t operator()(std::size_t r, std::size_t t) const { return ids[r * trees + t]; }
};

inline LeafAssignments leaf_indices(const GbdtModel& m, const Matrix& x) {
    if (x.cols() != m.n_features) throw DimensionError("gbdt: width mismatch");
    LeafAssignments out{x.rows(), m.trees.size(), std::vector<std::uint32_t>(x.rows() * m.trees.size())};
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t t = 0; t < m.trees.size(); ++t)
            out.ids[r * out.trees + t] = static_cast<std::uint32_t>(m.trees[t].leaf_of(x.row(r)));
    return out;
}

// Total split gain per feature, normalized to sum 1 (all zeros when the
// model has no splits).
inline std::vector<double> gain_importance(const GbdtModel& m) {
    std::vector<double> imp(m.n_features, 0.0);
    for (const auto& t : m.trees)
        for (const auto& n : t.nodes)
            if (!n.is_leaf()) imp[static_cast<std::size_t>(n.feature)] += n.gain;
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total > 0)
        for (double& v : imp) v /= total;
    return imp;
}

// ----------------------------------------------------------------------------
// Tree learner
// ----------------------------------------------------------------------------

struct TreeParams {
    std::size_t max_leaves = 15;
    std::size_t min_samples_leaf = 20;
    double lambda = 1.0;
    double min_gain = 0.0;
};

// Exact-split regression tree learner on gradient statistics. Feature values
// are presorted once; per node, every feature keeps a contiguous segment of
// its sorted order (missing rows at the segment tail), and a split partitions
// each segment stably.
class TreeLearner {
public:
    explicit TreeLearner(const Matrix& x) : n_(x.rows()), p_(x.cols()), cols_(x.rows() * x.cols()) {
        for (std::size_t j = 0; j < p_; ++j)
            for (std::size_t r = 0; r < n_; ++r) cols_[j * n_ + r] = x(r, j);
        sorted_.resize(p_);
        missing_.resize(p_);
        for (std::size_t j = 0; j < p_; ++j) {
            const double* col = &cols_[j * n_];
            auto& s = sorted_[j];
            for (std::uint32_t r = 0; r < n_; ++r) {
                if (is_missing(col[r])) missing_[j].push_back(r);
                else s.push_back(r);
            }
            std::stable_sort(s.begin(), s.end(), [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
        }
    }

    std::size_t rows() const noexcept { return n_; }
    std::size_t features() const noexcept { return p_; }

    // Grows one tree. weight[r] is the row multiplicity (0 = not in sample);
    // only `allowed` features are split on (all when empty). Returns nullopt
    // when the root has no split with gain above min_gain.
    std::optional<Tree> grow(std::span<const double> grad, std::span<const double> hess,
                             std::span<const double> weight, const TreeParams& params,
                             std::span<const std::size_t> allowed = {}, unsigned threads = 1) {
        grad_ = grad;
        hess_ = hess;
        weight_ = weight;
        params_ = params;
        if (allowed.empty()) {
            features_.resize(p_);
            std::iota(features_.begin(), features_.end(), std::size_t{0});
        } else {
            features_.assign(allowed.begin(), allowed.end());
        }
        threads_ = threads;

        // Root segments over in-sample rows.
        std::size_t m = 0;
        for (std::size_t r = 0; r < n_; ++r)
            if (weight_[r] > 0) ++m;
        order_.assign(p_, {});
        for (std::size_t j : features_) {
            auto& o = order_[j];
            o.reserve(m);
            for (std::uint32_t r : sorted_[j])
                if (weight_[r] > 0) o.push_back(r);
            for (std::uint32_t r : missing_[j])
                if (weight_[r] > 0) o.push_back(r);
        }
        go_left_.assign(n_, 0);
        buffer_.resize(m);

        Tree tree;
        std::vector<Open> open;
        Open root{0, m, 0, 0, 0, 0, {}};
        for (std::size_t k = 0; k < m; ++k) {
            const std::uint32_t r = order_[features_[0]][k];
            root.g += grad_[r] * weight_[r];
            root.h += hess_[r] * weight_[r];
            root.c += weight_[r];
        }
        tree.nodes.emplace_back();
        root.best = best_split(root);
        if (!root.best.valid) return std::nullopt;
        open.push_back(root);

        std::size_t leaves = 1;
        while (leaves < params_.max_leaves) {
            int pick = -1;
            for (std::size_t i = 0; i < open.size(); ++i) {
                if (!open[i].best.valid) continue;
                if (pick < 0 || open[i].best.gain > open[static_cast<std::size_t>(pick)].best.gain)
                    pick = static_cast<int>(i);
            }
            if (pick < 0) break;
            Open node = open[static_cast<std::size_t>(pick)];
            open.erase(open.begin() + pick);
            auto [left, right] = split(node);
            TreeNode& tn = tree.nodes[node.node];
            tn.feature = static_cast<int>(node.best.feature);
            tn.threshold = node.best.threshold;
            tn.missing_left = node.best.missing_left;
            tn.gain = node.best.gain;
            tn.left = static_cast<int>(tree.nodes.size());
            tn.right = static_cast<int>(tree.nodes.size() + 1);
            left.node = tree.nodes.size();
            right.node = tree.nodes.size() + 1;
            tree.nodes.emplace_back();
            tree.nodes.emplace_back();
            left.best = best_split(left);
            right.best = best_split(right);
            open.push_back(left);
            open.push_back(right);
            ++leaves;
        }
        // Dense leaf ids in node order.
        std::vector<const Open*> by_node(tree.nodes.size(), nullptr);
        for (const auto& o : open) by_node[o.node] = &o;
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            auto& tn = tree.nodes[i];
            if (!tn.is_leaf()) continue;
            const Open& o = *by_node[i];
            tn.leaf_id = static_cast<int>(tree.leaf_values.size());
            tn.value = -o.g / (o.h + params_.lambda);
            tree.leaf_values.push_back(tn.value);
        }
        return tree;
    }

private:
    struct Split {
        bool valid = false;
        std::size_t feature = 0;
        double threshold = 0.0;
        bool missing_left = true;
        double gain = 0.0;
    };

    struct Open {
        std::size_t begin, end;
        std::size_t node;
        double g, h, c;
        Split best;
    };

    double score(double g, double h) const { return g * g / (h + params_.lambda); }

    Split best_split(const Open& node) {
        std::vector<Split> per_feature(features_.size());
        parallel_for(features_.size(), threads_, [&](std::size_t i) {
            per_feature[i] = best_split_feature(node, features_[i]);
        });
        // Fixed feature order keeps the result independent of thread count.
        Split best;
        for (const auto& s : per_feature)
            if (s.valid && (!best.valid || s.gain > best.gain)) best = s;
        return best;
    }

    Split best_split_feature(const Open& node, std::size_t f) const {
        Split best;
        const std::uint32_t* ord = order_[f].data();
        const double* col = &cols_[f * n_];
        const double min_leaf = static_cast<double>(params_.min_samples_leaf);
        if (node.c < 2 * min_leaf) return best;

        std::size_t nm_end = node.begin;
        while (nm_end < node.end && !is_missing(col[ord[nm_end]])) ++nm_end;
        if (nm_end == node.begin) return best;
        double gm = 0, hm = 0, cm = 0;
        for (std::size_t k = nm_end; k < node.end; ++k) {
            const std::uint32_t r = ord[k];
            gm += grad_[r] * weight_[r];
            hm += hess_[r] * weight_[r];
            cm += weight_[r];
        }
        const double cn = node.c - cm;
        const double parent = score(node.g, node.h);

        double gl = 0, hl = 0, cl = 0;
        for (std::size_t k = node.begin; k + 1 < nm_end; ++k) {
            const std::uint32_t r = ord[k];
            gl += grad_[r] * weight_[r];
            hl += hess_[r] * weight_[r];
            cl += weight_[r];
            const double v = col[r], v_next = col[ord[k + 1]];
            if (v_next == v) continue;
            auto consider = [&](double GL, double HL, double CL, bool miss_left) {
                const double GR = node.g - GL, HR = node.h - HL, CR = node.c - CL;
                if (CL < min_leaf || CR < min_leaf) return;
                const double gain = 0.5 * (score(GL, HL) + score(GR, HR) - parent);
                if (gain > params_.min_gain && (!best.valid || gain > best.gain)) {
                    best = {true, f, std::midpoint(v, v_next), miss_left, gain};
                }
            };
            if (cm > 0) {
                consider(gl, hl, cl, false);
                consider(gl + gm, hl + hm, cl + cm, true);
            } else {
                // No missing rows here: at predict time they follow the larger side.
                consider(gl, hl, cl, cl >= cn - cl);
            }
        }
        return best;
    }

    std::pair<Open, Open> split(const Open& node) {
        const std::size_t f = node.best.feature;
        const double* col = &cols_[f * n_];
        Open left{node.begin, node.begin, 0, 0, 0, 0, {}};
        Open right{0, node.end, 0, 0, 0, 0, {}};
        for (std::size_t k = node.begin; k < node.end; ++k) {
            const std::uint32_t r = order_[f][k];
            const double v = col[r];
            const bool l = is_missing(v) ? node.best.missing_left : v <= node.best.threshold;
            go_left_[r] = l ? 1 : 0;
            Open& side = l ? left : right;
            side.g += grad_[r] * weight_[r];
            side.h += hess_[r] * weight_[r];
            side.c += weight_[r];
            if (l) ++left.end;
        }
        right.begin = left.end;
        for (std::size_t j : features_) {
            auto& o = order_[j];
            std::size_t li = node.begin, ri = 0;
            for (std::size_t k = node.begin; k < node.end; ++k) {
                const std::uint32_t r = o[k];
                if (go_left_[r]) o[li++] = r;
                else buffer_[ri++] = r;
            }
            std::copy(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(ri),
                      o.begin() + static_cast<std::ptrdiff_t>(li));
        }
        return {left, right};
    }

    std::size_t n_, p_;
    std::vector<double> cols_;  // column-major copy
    std::vector<std::vector<std::uint32_t>> sorted_;
    std::vector<std::vector<std::uint32_t>> missing_;

    std::span<const double> grad_, hess_, weight_;
    TreeParams params_;
    std::vector<std::size_t> features_;
    unsigned threads_ = 1;
    std::vector<std::vector<std::uint32_t>> order_;
    std::vector<std::uint8_t> go_left_;
    std::vector<std::uint32_t> buffer_;
};

// ----------------------------------------------------------------------------
// Boosting
// ----------------------------------------------------------------------------

inline double weighted_log_loss(std::span<const double> raw, std::span<const int> y, double pos_weight) {
    double s = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const double w = y[i] == 1 ? pos_weight : 1.0;
        const double p = clamp_prob(sigmoid(raw[i]));
        s -= w * (y[i] == 1 ? std::log(p) : std::log(1.0 - p));
        wsum += w;
    }
    return wsum > 0 ? s / wsum : 0.0;
}

inline GbdtModel fit_gbdt(const Matrix& x, std::span<const int> y, GbdtConfig config, unsigned threads = 1) {
    config.check();
    if (x.rows() != y.size()) throw DimensionError("fit_gbdt: row count mismatch");
    std::size_t pos = 0;
    for (int v : y) pos += v == 1;
    const std::size_t neg = y.size() - pos;
    if (pos == 0 || neg == 0) throw FitError("fit_gbdt: both classes must be present");
    if (config.auto_scale_pos_weight) config.scale_pos_weight = static_cast<double>(neg) / static_cast<double>(pos);

    const double spw = config.scale_pos_weight;
    const std::size_t n = x.rows();
    GbdtModel m;
    m.config = config;
    m.learning_rate = config.learning_rate;
    m.n_features = x.cols();
    const double wpos = spw * static_cast<double>(pos);
    m.base_score = logit(wpos / (wpos + static_cast<double>(neg)));

    std::vector<double> raw(n, m.base_score), grad(n), hess(n), weight(n);
    m.train_loss.push_back(weighted_log_loss(raw, y, spw));
    if (config.n_trees == 0) return m;

    TreeLearner learner(x);
    Rng rng(config.seed);
    const auto sample_size =
        static_cast<std::size_t>(std::ceil(config.subsample_fraction * static_cast<double>(n)));
    std::vector<std::size_t> perm(n);
    const TreeParams params{config.max_leaves, config.min_samples_leaf, config.lambda, config.min_gain};
    std::size_t skipped = 0;

    for (std::size_t it = 0; it < config.n_trees; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            const double w = y[i] == 1 ? spw : 1.0;
            const double p = sigmoid(raw[i]);
            grad[i] = w * (p - y[i]);
            hess[i] = w * p * (1.0 - p);
        }
        if (sample_size >= n) {
            std::fill(weight.begin(), weight.end(), 1.0);
        } else {
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            std::fill(weight.begin(), weight.end(), 0.0);
            for (std::size_t k = 0; k < sample_size; ++k) {
                std::swap(perm[k], perm[k + rng.below(n - k)]);
                weight[perm[k]] = 1.0;
            }
        }
        auto tree = learner.grow(grad, hess, weight, params, {}, threads);
        if (!tree) {
            ++skipped;
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) raw[i] += config.learning_rate * tree->value_of(x.row(i));
        m.trees.push_back(std::move(*tree));
        m.train_loss.push_back(weighted_log_loss(raw, y, spw));
    }
    if (skipped > 0)
        m.warnings.push_back(std::to_string(skipped) + " of " + std::to_string(config.n_trees) +
                             " trees skipped: no split with gain above min_gain");
    if (m.trees.empty()) m.warnings.push_back("model has no trees; predictions equal the base score");
    return m;
}

inline GbdtModel fit_gbdt(const Dataset& ds, const GbdtConfig& config, unsigned threads = 1) {
    GbdtModel m = fit_gbdt(ds.features, ds.target, config, threads);
    m.feature_names = ds.feature_names;
    return m;
}

// ----------------------------------------------------------------------------
// F-beta and out-of-time tuning
// ----------------------------------------------------------------------------

// (1 + b^2) * spec * rec / (b^2 * spec + rec); 0 when both inputs are 0.
inline double f_beta(double specificity, double recall, double beta) {
    if (!(beta > 0) || !std::isfinite(beta)) throw DomainError("f_beta: beta must be finite and > 0");
    const double b2 = beta * beta;
    const double den = b2 * specificity + recall;
    if (den == 0.0) return 0.0;
    return (1.0 + b2) * specificity * recall / den;
}

struct CvFold {
    std::size_t candidate;
    int test_year;
    std::size_t n_train, n_test;
    double specificity, recall, fbeta;
};

struct CvResult {
    std::size_t best_index = 0;
    GbdtConfig best;
    std::vector<double> mean_fbeta;  // per candidate; NaN when discarded
    std::vector<CvFold> folds;
    std::vector<std::string> notes;
};

// Expanding-window folds: for each year Y after the first, train on years < Y
// and test on Y. Candidates are scored by mean F-beta at threshold 0.5.
inline CvResult oot_cv_tune(const Dataset& ds, const std::vector<GbdtConfig>& grid, double beta,
                            unsigned threads = 1) {
    if (grid.empty()) throw ConfigError("oot_cv_tune: empty grid");
    std::set<int> years(ds.year.begin(), ds.year.end());
    if (years.size() < 2) throw SplitError("oot_cv_tune: need at least 2 distinct years");

    CvResult res;
    res.mean_fbeta.assign(grid.size(), kMissing);
    std::vector<int> test_years(std::next(years.begin()), years.end());
    for (std::size_t ci = 0; ci < grid.size(); ++ci) {
        double sum = 0.0;
        bool failed = false;
        std::vector<CvFold> folds;
        for (int yr : test_years) {
            std::vector<std::size_t> tr, te;
            for (std::size_t r = 0; r < ds.n_rows(); ++r) {
                if (ds.year[r] < yr) tr.push_back(r);
                else if (ds.year[r] == yr) te.push_back(r);
            }
            try {
                const Dataset train = ds.subset(tr), test = ds.subset(te);
                const GbdtModel m = fit_gbdt(train.features, train.target, grid[ci], threads);
                const auto pd = predict_proba(m, test.features);
                const auto cm = confusion(pd, test.target, 0.5);
                const double spec = specificity(cm).value, rec = tpr(cm).value;
                const double f = f_beta(spec, rec, beta);
                folds.push_back({ci, yr, tr.size(), te.size(), spec, rec, f});
                sum += f;
            } catch (const Error& e) {
                res.notes.push_back("candidate " + std::to_string(ci) + " discarded on test year " +
                                    std::to_string(yr) + ": " + e.what());
                failed = true;
                break;
            }
        }
        if (failed) continue;
        res.mean_fbeta[ci] = sum / static_cast<double>(test_years.size());
        res.folds.insert(res.folds.end(), folds.begin(), folds.end());
    }

    std::optional<std::size_t> best;
    for (std::size_t ci = 0; ci < grid.size(); ++ci) {
        if (is_missing(res.mean_fbeta[ci])) continue;
        if (!best) {
            best = ci;
            continue;
        }
        const double a = res.mean_fbeta[ci], b = res.mean_fbeta[*best];
        const auto& ca = grid[ci];
        const auto& cb = grid[*best];
        if (a > b || (a == b && (ca.n_trees < cb.n_trees ||
                                 (ca.n_trees == cb.n_trees && ca.max_leaves < cb.max_leaves))))
            best = ci;
    }
    if (!best) throw FitError("oot_cv_tune: every candidate failed");
    res.best_index = *best;
    res.best = grid[*best];
    return res;
}

// ----------------------------------------------------------------------------
// Persistence
// ----------------------------------------------------------------------------

inline nlohmann::json to_json(const Tree& t) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes) {
        if (n.is_leaf()) {
            nodes.push_back({{"leaf", n.leaf_id}, {"value", n.value}});
        } else {
            nodes.push_back({{"feature", n.feature},
                             {"threshold", n.threshold},
                             {"missing_left", n.missing_left},
                             {"left", n.left},
                             {"right", n.right},
                             {"gain", n.gain}});
        }
    }
    return {{"nodes", nodes}};
}

inline Tree tree_from_json(const nlohmann::json& j) {
    Tree t;
    for (const auto& jn : j.at("nodes")) {
        TreeNode n;
        if (jn.contains("leaf")) {
            n.leaf_id = jn.at("leaf").get<int>();
            n.value = jn.at("value").get<double>();
        } else {
            n.feature = jn.at("feature").get<int>();
            n.threshold = jn.at("threshold").get<double>();
            n.missing_left = jn.at("missing_left").get<bool>();
            n.left = jn.at("left").get<int>();
            n.right = jn.at("right").get<int>();
            n.gain = jn.value("gain", 0.0);
        }
        t.nodes.push_back(n);
    }
    std::size_t leaves = 0;
    for (const auto& n : t.nodes) leaves += n.is_leaf();
    t.leaf_values.assign(leaves, 0.0);
    for (const auto& n : t.nodes) {
        if (!n.is_leaf()) continue;
        if (n.leaf_id < 0 || static_cast<std::size_t>(n.leaf_id) >= leaves)
            throw DomainError("tree json: leaf ids must be dense");
        t.leaf_values[static_cast<std::size_t>(n.leaf_id)] = n.value;
    }
    return t;
}

inline nlohmann::json to_json(const GbdtModel& m) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : m.trees) trees.push_back(to_json(t));
    return {{"format", "creditrisk.gbdt/1"},
            {"base_score", m.base_score},
            {"learning_rate", m.learning_rate},
            {"n_features", m.n_features},
            {"feature_names", m.feature_names},
            {"config", to_json(m.config)},
            {"trees", trees}};
}

inline GbdtModel gbdt_from_json(const nlohmann::json& j) {
    GbdtModel m;
    m.base_score = j.at("base_score").get<double>();
    m.learning_rate = j.at("learning_rate").get<double>();
    m.n_features = j.at("n_features").get<std::size_t>();
    m.feature_names = j.value("feature_names", std::vector<std::string>{});
    if (j.contains("config")) m.config = gbdt_config_from_json(j.at("config"));
    for (const auto& jt : j.at("trees")) m.trees.push_back(tree_from_json(jt));
    return m;
}

}  // namespace creditrisk
