#pragma once

// Back-testing of a rating scale on out-of-time data: one-sided binomial
// test and the four-zone traffic-light grading, per rating class.

#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "creditrisk/calib.hpp"
#include "creditrisk/core.hpp"
#include "creditrisk/metrics.hpp"
#include "creditrisk/rating.hpp"

namespace creditrisk {

namespace detail {

inline double log_binomial_pmf(std::size_t n, std::size_t j, double log_p, double log_q) {
    const auto nn = static_cast<double>(n), jj = static_cast<double>(j);
    return std::lgamma(nn + 1) - std::lgamma(jj + 1) - std::lgamma(nn - jj + 1) + jj * log_p + (nn - jj) * log_q;
}

inline double log_add(double a, double b) {
    if (a == -std::numeric_limits<double>::infinity()) return b;
    if (b == -std::numeric_limits<double>::infinity()) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace detail

// Smallest d with P(X >= d) <= 1 - alpha for X ~ Bin(n, pd); n + 1 when no
// d <= n qualifies. The upper tail is accumulated in log space from j = n down.
inline std::size_t binomial_critical(std::size_t n, double pd, double alpha) {
    if (n < 1) throw DomainError("binomial_critical: N must be >= 1");
    if (!(pd > 0 && pd < 1)) throw DomainError("binomial_critical: PD must lie in (0, 1)");
    if (!(alpha > 0 && alpha < 1)) throw DomainError("binomial_critical: alpha must lie in (0, 1)");
    const double log_p = std::log(pd), log_q = std::log1p(-pd);
    const double log_level = std::log1p(-alpha);
    double log_tail = -std::numeric_limits<double>::infinity();
    for (std::size_t j = n + 1; j-- > 0;) {
        log_tail = detail::log_add(log_tail, detail::log_binomial_pmf(n, j, log_p, log_q));
        if (log_tail > log_level) return j + 1;
    }
    return 0;
}

// Rejects H0 (actual default rate <= PD) iff d >= d_alpha. True = passed.
inline bool binomial_test(std::size_t defaults, std::size_t n, double pd, double alpha) {
    return defaults < binomial_critical(n, pd, alpha);
}

enum class Zone { Green, Yellow, Orange, Red };

inline std::string to_string(Zone z) {
    switch (z) {
        case Zone::Green: return "Green";
        case Zone::Yellow: return "Yellow";
        case Zone::Orange: return "Orange";
        case Zone::Red: return "Red";
    }
    return "Red";
}

struct TrafficLightParams {
    double k_yellow = 0.84;
    double k_orange = 1.44;

    void check() const {
        if (!(0 < k_yellow && k_yellow < k_orange)) throw ConfigError("traffic light: need 0 < K_y < K_0");
    }
};

inline double traffic_light_sigma(double pd, std::size_t n) {
    return std::sqrt(pd * (1.0 - pd) / static_cast<double>(n));
}

inline Zone traffic_light(double pd, std::size_t n, double observed_rate, const TrafficLightParams& params = {}) {
    if (n < 1) throw DomainError("traffic_light: N must be >= 1");
    if (!(pd > 0 && pd < 1)) throw DomainError("traffic_light: PD must lie in (0, 1)");
    const double sigma = traffic_light_sigma(pd, n);
    if (observed_rate < pd) return Zone::Green;
    if (observed_rate < pd + params.k_yellow * sigma) return Zone::Yellow;
    if (observed_rate < pd + params.k_orange * sigma) return Zone::Orange;
    return Zone::Red;
}

struct ClassValidation {
    std::string label;
    double bin_low = 0, bin_high = 1;
    std::size_t n = 0;
    double forecast_pd = 0;
    std::size_t defaults = 0;
    double observed_rate = kMissing;  // NaN when n == 0
    double alpha = 0.95;
    std::optional<std::size_t> critical;
    std::optional<bool> binomial_pass;
    std::optional<Zone> zone;

    bool has_data() const noexcept { return n > 0; }
};

struct ValidationReport {
    std::vector<ClassValidation> classes;
    std::size_t n = 0;
    double auroc = kMissing;
    double brier = kMissing;
    ReliabilityCurve reliability;
};

inline ValidationReport validate_scale(const RatingScale& scale, std::span<const double> pds, std::span<const int> y,
                                       double alpha = 0.95, const TrafficLightParams& params = {},
                                       std::size_t reliability_bins = 10) {
    if (pds.size() != y.size()) throw DimensionError("validate_scale: length mismatch");
    params.check();
    scale.check();
    const std::size_t k = scale.classes();
    std::vector<std::size_t> n(k, 0), d(k, 0);
    for (std::size_t i = 0; i < pds.size(); ++i) {
        const std::size_t c = scale.class_of(pds[i]);
        ++n[c];
        d[c] += y[i] == 1;
    }
    ValidationReport rep;
    rep.n = pds.size();
    for (std::size_t c = 0; c < k; ++c) {
        ClassValidation cv;
        cv.label = scale.labels[c];
        cv.bin_low = scale.bin_low(c);
        cv.bin_high = scale.bin_high(c);
        cv.n = n[c];
        cv.forecast_pd = scale.class_pd[c];
        cv.defaults = d[c];
        cv.alpha = alpha;
        if (n[c] > 0) {
            cv.observed_rate = static_cast<double>(d[c]) / static_cast<double>(n[c]);
            cv.critical = binomial_critical(n[c], cv.forecast_pd, alpha);
            cv.binomial_pass = d[c] < *cv.critical;
            cv.zone = traffic_light(cv.forecast_pd, n[c], cv.observed_rate, params);
        }
        rep.classes.push_back(cv);
    }
    const bool both = std::find(y.begin(), y.end(), 0) != y.end() && std::find(y.begin(), y.end(), 1) != y.end();
    if (both) rep.auroc = roc_auc(pds, y).auc;
    rep.brier = brier(pds, y);
    rep.reliability = reliability_curve(pds, y, reliability_bins);
    return rep;
}

namespace detail {
inline nlohmann::json nullable(double v) { return is_missing(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }
}  // namespace detail

inline nlohmann::json to_json(const ValidationReport& r) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : r.classes) {
        nlohmann::json j = {{"label", c.label},
                            {"bin_low", c.bin_low},
                            {"bin_high", c.bin_high},
                            {"n", c.n},
                            {"class_pd", c.forecast_pd},
                            {"defaults", c.defaults},
                            {"observed_rate", detail::nullable(c.observed_rate)},
                            {"alpha", c.alpha}};
        if (c.has_data()) {
            j["critical_value"] = *c.critical;
            j["binomial_test"] = *c.binomial_pass ? "Passed" : "Failed";
            j["traffic_light"] = to_string(*c.zone);
        } else {
            j["critical_value"] = nullptr;
            j["binomial_test"] = "no data";
            j["traffic_light"] = "no data";
        }
        classes.push_back(j);
    }
    nlohmann::json rel = nlohmann::json::array();
    for (const auto& b : r.reliability.bins)
        rel.push_back({{"bin_low", b.low},
                       {"bin_high", b.high},
                       {"mean_pred", detail::nullable(b.mean_pred)},
                       {"obs_freq", detail::nullable(b.obs_freq)},
                       {"count", b.count}});
    return {{"format", "creditrisk.validation/1"},
            {"n", r.n},
            {"auroc", detail::nullable(r.auroc)},
            {"brier", detail::nullable(r.brier)},
            {"classes", classes},
            {"reliability", rel}};
}

// Columns mirror a rating back-test table; percentages are in percent.
inline void write_csv(std::ostream& out, const ValidationReport& r) {
    out << "rating_class,pd_bin_low_pct,pd_bin_high_pct,class_pd_pct,default_rate_pct,n,defaults,"
           "critical_value,binomial_test,traffic_light\n";
    for (const auto& c : r.classes) {
        out << csv::quote(c.label) << ',' << csv::format_double(100 * c.bin_low) << ','
            << csv::format_double(100 * c.bin_high) << ',' << csv::format_double(100 * c.forecast_pd) << ','
            << csv::format_double(is_missing(c.observed_rate) ? kMissing : 100 * c.observed_rate) << ',' << c.n
            << ',' << c.defaults << ',';
        if (c.has_data())
            out << *c.critical << ',' << (*c.binomial_pass ? "Passed" : "Failed") << ',' << to_string(*c.zone);
        else
            out << ",no data,no data";
        out << '\n';
    }
}

}  // namespace creditrisk
