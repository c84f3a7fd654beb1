#pragma once

// PD calibration from boosted-tree leaf assignments: every (tree, leaf) pair
// becomes a 0/1 column and an L2 logistic regression maps the resulting
// design to probabilities. Also the reliability curve used to inspect it.

#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "creditrisk/core.hpp"
#include "creditrisk/data.hpp"
#include "creditrisk/gbdt.hpp"
#include "creditrisk/linmod.hpp"
#include "creditrisk/metrics.hpp"

namespace creditrisk {

struct Calibrator {
    // Column of leaf l of tree t is offsets[t] + l.
    std::vector<std::size_t> offsets;
    std::size_t width = 0;
    LogisticModel lr;
    double c = 1.0;
    // Holdout log-loss for each c tried, in grid order.
    std::vector<std::pair<double, double>> c_scores;
};

inline Calibrator leaf_vocabulary(const GbdtModel& model) {
    Calibrator cal;
    for (const auto& t : model.trees) {
        cal.offsets.push_back(cal.width);
        cal.width += t.n_leaves();
    }
    return cal;
}

// One active column per tree, so every row sums to the number of trees.
inline SparseBinaryMatrix leaf_design(const Calibrator& cal, const GbdtModel& model, const Matrix& x) {
    if (cal.offsets.size() != model.trees.size())
        throw DimensionError("calibrator: vocabulary built for a different model");
    const LeafAssignments leaves = leaf_indices(model, x);
    SparseBinaryMatrix design(cal.width);
    std::vector<std::size_t> active(model.trees.size());
    for (std::size_t r = 0; r < leaves.rows; ++r) {
        for (std::size_t t = 0; t < leaves.trees; ++t) active[t] = cal.offsets[t] + leaves(r, t);
        design.append_row(active);
    }
    return design;
}

struct CalibrationData {
    const Matrix& x;
    std::span<const int> y;
};

// Fits one L2 logistic model per c on `fit_rows` and keeps the c with the
// lowest log-loss on `holdout`. Leaves never reached by fit_rows keep weight 0.
inline Calibrator fit_calibrator(const GbdtModel& model, CalibrationData fit_rows, std::span<const double> c_grid,
                                 CalibrationData holdout, double tol = 1e-7, std::size_t max_iter = 2000) {
    if (c_grid.empty()) throw ConfigError("fit_calibrator: empty c grid");
    Calibrator base = leaf_vocabulary(model);
    const SparseBinaryMatrix design = leaf_design(base, model, fit_rows.x);
    const SparseBinaryMatrix hold = leaf_design(base, model, holdout.x);

    Calibrator best = base;
    double best_loss = std::numeric_limits<double>::infinity();
    for (double c : c_grid) {
        LogisticOptions opt;
        opt.penalty = Penalty::L2;
        opt.c = c;
        opt.tol = tol;
        opt.max_iter = max_iter;
        opt.standardize = false;
        LogisticModel lr = fit_logistic(design, fit_rows.y, opt);
        const double loss = log_loss(predict_proba(lr, hold), holdout.y);
        base.c_scores.emplace_back(c, loss);
        if (loss < best_loss) {
            best_loss = loss;
            best.lr = std::move(lr);
            best.c = c;
        }
    }
    best.c_scores = base.c_scores;
    return best;
}

inline std::vector<double> calibrated_pd(const Calibrator& cal, const GbdtModel& model, const Matrix& x) {
    return predict_proba(cal.lr, leaf_design(cal, model, x));
}

inline nlohmann::json to_json(const Calibrator& cal) {
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& [c, loss] : cal.c_scores) scores.push_back({{"c", c}, {"holdout_log_loss", loss}});
    return {{"format", "creditrisk.calibrator/1"},
            {"offsets", cal.offsets},
            {"width", cal.width},
            {"c", cal.c},
            {"c_scores", scores},
            {"logistic", to_json(cal.lr)}};
}

inline Calibrator calibrator_from_json(const nlohmann::json& j) {
    Calibrator cal;
    cal.offsets = j.at("offsets").get<std::vector<std::size_t>>();
    cal.width = j.at("width").get<std::size_t>();
    cal.c = j.at("c").get<double>();
    for (const auto& s : j.value("c_scores", nlohmann::json::array()))
        cal.c_scores.emplace_back(s.at("c").get<double>(), s.at("holdout_log_loss").get<double>());
    cal.lr = logistic_from_json(j.at("logistic"));
    if (cal.lr.weights.size() != cal.width) throw DomainError("calibrator json: weight count != width");
    return cal;
}

// ----------------------------------------------------------------------------
// Reliability curve
// ----------------------------------------------------------------------------

struct ReliabilityBin {
    double low, high;
    double mean_pred;  // NaN when count == 0
    double obs_freq;   // NaN when count == 0
    std::size_t count;
};

struct ReliabilityCurve {
    std::vector<ReliabilityBin> bins;
};

// Equal-width bins on [0, 1]; the last bin is closed on the right.
inline ReliabilityCurve reliability_curve(std::span<const double> pd, std::span<const int> y, std::size_t n_bins) {
    if (pd.size() != y.size()) throw DimensionError("reliability_curve: length mismatch");
    if (n_bins == 0) throw ConfigError("reliability_curve: n_bins must be >= 1");
    std::vector<double> sum_p(n_bins, 0.0), sum_y(n_bins, 0.0);
    std::vector<std::size_t> count(n_bins, 0);
    for (std::size_t i = 0; i < pd.size(); ++i) {
        auto b = static_cast<std::size_t>(std::clamp(pd[i], 0.0, 1.0) * static_cast<double>(n_bins));
        b = std::min(b, n_bins - 1);
        sum_p[b] += pd[i];
        sum_y[b] += y[i];
        ++count[b];
    }
    ReliabilityCurve curve;
    for (std::size_t b = 0; b < n_bins; ++b) {
        const double lo = static_cast<double>(b) / static_cast<double>(n_bins);
        const double hi = static_cast<double>(b + 1) / static_cast<double>(n_bins);
        if (count[b] == 0) {
            curve.bins.push_back({lo, hi, kMissing, kMissing, 0});
        } else {
            const auto n = static_cast<double>(count[b]);
            curve.bins.push_back({lo, hi, sum_p[b] / n, sum_y[b] / n, count[b]});
        }
    }
    return curve;
}

inline void write_csv(std::ostream& out, const ReliabilityCurve& curve) {
    out << "bin_low,bin_high,mean_pred,obs_freq,count\n";
    for (const auto& b : curve.bins)
        out << csv::format_double(b.low) << ',' << csv::format_double(b.high) << ','
            << csv::format_double(b.mean_pred) << ',' << csv::format_double(b.obs_freq) << ',' << b.count << '\n';
}

}  // namespace creditrisk
