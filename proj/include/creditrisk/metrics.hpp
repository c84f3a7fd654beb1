#pragma once

// Classification and probability-forecast metrics.

#include <string>
#include <vector>

#include "creditrisk/core.hpp"

namespace creditrisk {

struct ConfusionMatrix {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double threshold = 0.5;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }
};

namespace detail {
inline void check_lengths(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw DimensionError(std::string(what) + ": length mismatch");
}
}  // namespace detail

// Predicts positive iff pd >= threshold.
inline ConfusionMatrix confusion(std::span<const double> pd, std::span<const int> y, double threshold) {
    detail::check_lengths(pd.size(), y.size(), "confusion");
    ConfusionMatrix cm;
    cm.threshold = threshold;
    for (std::size_t i = 0; i < pd.size(); ++i) {
        const bool pred = pd[i] >= threshold;
        if (y[i] == 1) (pred ? cm.tp : cm.fn)++;
        else (pred ? cm.fp : cm.tn)++;
    }
    return cm;
}

// A ratio with a 0/0 denominator reports 0 and sets `degenerate`.
struct Rate {
    double value = 0.0;
    bool degenerate = false;
};

inline Rate safe_rate(std::size_t num, std::size_t den) {
    if (den == 0) return {0.0, true};
    return {static_cast<double>(num) / static_cast<double>(den), false};
}

inline Rate tpr(const ConfusionMatrix& cm) { return safe_rate(cm.tp, cm.tp + cm.fn); }
inline Rate fpr(const ConfusionMatrix& cm) { return safe_rate(cm.fp, cm.fp + cm.tn); }
inline Rate specificity(const ConfusionMatrix& cm) { return safe_rate(cm.tn, cm.tn + cm.fp); }

struct RocPoint {
    double threshold;
    double fpr;
    double tpr;
};

struct RocCurve {
    std::vector<RocPoint> points;  // from (0,0) to (1,1)
    double auc = 0.0;
};

// Sweeps every distinct score as a threshold (descending). Tied scores move
// the curve diagonally, which gives ties half credit in the area.
inline RocCurve roc_auc(std::span<const double> scores, std::span<const int> y) {
    detail::check_lengths(scores.size(), y.size(), "roc_auc");
    std::size_t pos = 0, neg = 0;
    for (int v : y) (v == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0) throw DomainError("roc_auc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocCurve curve;
    curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    double area = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        const std::size_t tp0 = tp, fp0 = fp;
        while (i < order.size() && scores[order[i]] == s) {
            (y[order[i]] == 1 ? tp : fp)++;
            ++i;
        }
        // Trapezoid in count space keeps the sum exact until the final division.
        area += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0) * 0.5;
        curve.points.push_back({s, static_cast<double>(fp) / static_cast<double>(neg),
                                static_cast<double>(tp) / static_cast<double>(pos)});
    }
    curve.auc = area / (static_cast<double>(pos) * static_cast<double>(neg));
    return curve;
}

// Threshold on the ROC maximizing tpr - fpr (Youden's J).
inline RocPoint youden_threshold(const RocCurve& curve) {
    RocPoint best = curve.points.front();
    double best_j = -1.0;
    for (const auto& p : curve.points) {
        if (!std::isfinite(p.threshold)) continue;
        const double j = p.tpr - p.fpr;
        if (j > best_j) {
            best_j = j;
            best = p;
        }
    }
    return best;
}

inline double brier(std::span<const double> f, std::span<const int> o) {
    detail::check_lengths(f.size(), o.size(), "brier");
    if (f.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += (f[i] - o[i]) * (f[i] - o[i]);
    return s / static_cast<double>(f.size());
}

// Forecasts are clamped to [1e-12, 1 - 1e-12].
inline double log_loss(std::span<const double> f, std::span<const int> o) {
    detail::check_lengths(f.size(), o.size(), "log_loss");
    if (f.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double p = clamp_prob(f[i]);
        s += o[i] == 1 ? std::log(p) : std::log(1.0 - p);
    }
    return -s / static_cast<double>(f.size());
}

}  // namespace creditrisk
