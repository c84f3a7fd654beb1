#pragma once

// Binary logistic regression with optional L1 or L2 penalty. Works over a
// dense matrix or a sparse 0/1 design (one-hot leaf assignments).
//
// Objective, with theta = (w, b) and the intercept b never penalized:
//   J(theta) = mean_i softplus(z_i) - y_i z_i  +  penalty(w),   z_i = x_i.w + b
//   L2: penalty = ||w||^2 / (2c)     L1: penalty = ||w||_1 / c

#include <deque>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "creditrisk/core.hpp"

namespace creditrisk {

enum class Penalty { None, L1, L2 };

inline std::string to_string(Penalty p) {
    switch (p) {
        case Penalty::None: return "none";
        case Penalty::L1: return "l1";
        case Penalty::L2: return "l2";
    }
    return "none";
}

inline Penalty penalty_from_string(std::string_view s) {
    if (s == "none") return Penalty::None;
    if (s == "l1") return Penalty::L1;
    if (s == "l2") return Penalty::L2;
    throw ConfigError("unknown penalty '" + std::string(s) + "'");
}

// Rows of active column indices; every listed entry has value 1.
class SparseBinaryMatrix {
public:
    SparseBinaryMatrix() = default;
    explicit SparseBinaryMatrix(std::size_t cols) : cols_(cols) {}

    void append_row(std::vector<std::size_t> active) {
        for (std::size_t c : active)
            if (c >= cols_) throw DimensionError("sparse row: column index out of range");
        rows_.push_back(std::move(active));
    }

    std::size_t rows() const noexcept { return rows_.size(); }
    std::size_t cols() const noexcept { return cols_; }
    const std::vector<std::size_t>& row(std::size_t r) const { return rows_[r]; }

    Matrix dense() const {
        Matrix m(rows(), cols_);
        for (std::size_t r = 0; r < rows(); ++r)
            for (std::size_t c : rows_[r]) m(r, c) += 1.0;
        return m;
    }

private:
    std::size_t cols_ = 0;
    std::vector<std::vector<std::size_t>> rows_;
};

namespace design {

inline std::size_t rows(const Matrix& x) { return x.rows(); }
inline std::size_t cols(const Matrix& x) { return x.cols(); }
inline std::size_t rows(const SparseBinaryMatrix& x) { return x.rows(); }
inline std::size_t cols(const SparseBinaryMatrix& x) { return x.cols(); }

inline double dot(const Matrix& x, std::size_t r, std::span<const double> w) {
    auto row = x.row(r);
    double s = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) s += row[j] * w[j];
    return s;
}
inline double dot(const SparseBinaryMatrix& x, std::size_t r, std::span<const double> w) {
    double s = 0.0;
    for (std::size_t c : x.row(r)) s += w[c];
    return s;
}

// g += alpha * x_r
inline void axpy(const Matrix& x, std::size_t r, double alpha, std::span<double> g) {
    auto row = x.row(r);
    for (std::size_t j = 0; j < row.size(); ++j) g[j] += alpha * row[j];
}
inline void axpy(const SparseBinaryMatrix& x, std::size_t r, double alpha, std::span<double> g) {
    for (std::size_t c : x.row(r)) g[c] += alpha;
}

}  // namespace design

template <typename D>
concept LogisticDesign = requires(const D& d, std::size_t r, std::span<const double> w, std::span<double> g) {
    { design::rows(d) } -> std::convertible_to<std::size_t>;
    { design::cols(d) } -> std::convertible_to<std::size_t>;
    { design::dot(d, r, w) } -> std::convertible_to<double>;
    design::axpy(d, r, 1.0, g);
};

struct LogisticOptions {
    Penalty penalty = Penalty::L2;
    double c = 1.0;
    double tol = 1e-6;
    std::size_t max_iter = 1000;
    // Fit on columns scaled to mean 0 / variance 1 and report weights on the
    // original scale. Dense designs only.
    bool standardize = true;
};

struct LogisticModel {
    std::vector<double> weights;
    double intercept = 0.0;
    Penalty penalty = Penalty::L2;
    double c = 1.0;
    bool converged = false;
    std::size_t iterations = 0;
    // Weights in the standardized space the optimizer worked in (equal to
    // `weights` when no standardization was applied).
    std::vector<double> standardized_weights;

    double score(std::span<const double> x) const {
        if (x.size() != weights.size()) throw DimensionError("logistic: width mismatch");
        double z = intercept;
        for (std::size_t j = 0; j < x.size(); ++j) z += weights[j] * x[j];
        return z;
    }
};

inline double softplus(double z) noexcept {
    return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Smooth part of J plus the L2 term when present (the L1 term is returned by
// l1_term). theta = (w_0..w_{p-1}, b).
template <LogisticDesign D>
double logistic_smooth_objective(const D& x, std::span<const int> y, std::span<const double> theta,
                                 Penalty penalty, double c) {
    const std::size_t n = design::rows(x), p = design::cols(x);
    auto w = theta.subspan(0, p);
    const double b = theta[p];
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = design::dot(x, i, w) + b;
        loss += softplus(z) - y[i] * z;
    }
    loss /= static_cast<double>(n);
    if (penalty == Penalty::L2) {
        double sq = 0.0;
        for (double v : w) sq += v * v;
        loss += sq / (2.0 * c);
    }
    return loss;
}

inline double l1_term(std::span<const double> theta, std::size_t p, double c) {
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += std::abs(theta[j]);
    return s / c;
}

template <LogisticDesign D>
double logistic_objective(const D& x, std::span<const int> y, std::span<const double> theta, Penalty penalty,
                          double c) {
    double v = logistic_smooth_objective(x, y, theta, penalty, c);
    if (penalty == Penalty::L1) v += l1_term(theta, design::cols(x), c);
    return v;
}

// Gradient of logistic_smooth_objective.
template <LogisticDesign D>
std::vector<double> logistic_gradient(const D& x, std::span<const int> y, std::span<const double> theta,
                                      Penalty penalty, double c) {
    const std::size_t n = design::rows(x), p = design::cols(x);
    auto w = theta.subspan(0, p);
    const double b = theta[p];
    std::vector<double> g(p + 1, 0.0);
    std::span<double> gw(g.data(), p);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = (sigmoid(design::dot(x, i, w) + b) - y[i]) * inv_n;
        design::axpy(x, i, r, gw);
        g[p] += r;
    }
    if (penalty == Penalty::L2)
        for (std::size_t j = 0; j < p; ++j) g[j] += w[j] / c;
    return g;
}

namespace detail {

inline double dotv(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm_inf(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

// L-BFGS with Armijo backtracking; every accepted step lowers the objective.
template <LogisticDesign D>
void minimize_smooth(const D& x, std::span<const int> y, std::vector<double>& theta, Penalty penalty, double c,
                     const LogisticOptions& opt, LogisticModel& m) {
    const std::size_t dim = theta.size();
    constexpr std::size_t kHistory = 10;
    std::deque<std::vector<double>> s_hist, y_hist;
    std::deque<double> rho_hist;

    double f = logistic_smooth_objective(x, y, theta, penalty, c);
    std::vector<double> g = logistic_gradient(x, y, theta, penalty, c);
    std::vector<double> dir(dim), trial(dim);
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
        if (norm_inf(g) < opt.tol) {
            m.converged = true;
            m.iterations = it;
            return;
        }
        // Two-loop recursion.
        dir = g;
        std::vector<double> alpha(s_hist.size());
        for (std::size_t k = s_hist.size(); k-- > 0;) {
            alpha[k] = rho_hist[k] * dotv(s_hist[k], dir);
            for (std::size_t i = 0; i < dim; ++i) dir[i] -= alpha[k] * y_hist[k][i];
        }
        if (!s_hist.empty()) {
            const double gamma = dotv(s_hist.back(), y_hist.back()) / dotv(y_hist.back(), y_hist.back());
            for (double& d : dir) d *= gamma;
        }
        for (std::size_t k = 0; k < s_hist.size(); ++k) {
            const double beta = rho_hist[k] * dotv(y_hist[k], dir);
            for (std::size_t i = 0; i < dim; ++i) dir[i] += s_hist[k][i] * (alpha[k] - beta);
        }
        for (double& d : dir) d = -d;
        double slope = dotv(g, dir);
        if (!(slope < 0)) {
            for (std::size_t i = 0; i < dim; ++i) dir[i] = -g[i];
            slope = dotv(g, dir);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }
        double step = 1.0;
        double f_new = f;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < dim; ++i) trial[i] = theta[i] + step * dir[i];
            f_new = logistic_smooth_objective(x, y, trial, penalty, c);
            if (f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            m.iterations = it;
            m.converged = norm_inf(g) < std::sqrt(opt.tol);
            return;
        }
        std::vector<double> g_new = logistic_gradient(x, y, trial, penalty, c);
        std::vector<double> s(dim), yy(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            s[i] = trial[i] - theta[i];
            yy[i] = g_new[i] - g[i];
        }
        const double sy = dotv(s, yy);
        if (sy > 1e-12) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(yy));
            rho_hist.push_back(1.0 / sy);
            if (s_hist.size() > kHistory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        theta.swap(trial);
        g.swap(g_new);
        f = f_new;
    }
    m.iterations = opt.max_iter;
    m.converged = norm_inf(g) < opt.tol;
}

// Proximal gradient (ISTA) with backtracking on the smooth part; the
// soft-threshold sets small weights to exactly zero.
template <LogisticDesign D>
void minimize_l1(const D& x, std::span<const int> y, std::vector<double>& theta, double c,
                 const LogisticOptions& opt, LogisticModel& m) {
    const std::size_t dim = theta.size(), p = dim - 1;
    double lipschitz_inv = 1.0;
    double f = logistic_smooth_objective(x, y, theta, Penalty::None, c);
    std::vector<double> trial(dim);
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
        const std::vector<double> g = logistic_gradient(x, y, theta, Penalty::None, c);
        double step = std::min(lipschitz_inv * 2.0, 1e6);
        double f_new = f;
        for (int ls = 0; ls < 80; ++ls) {
            for (std::size_t j = 0; j < dim; ++j) {
                const double v = theta[j] - step * g[j];
                if (j < p) {
                    const double thr = step / c;
                    trial[j] = v > thr ? v - thr : (v < -thr ? v + thr : 0.0);
                } else {
                    trial[j] = v;
                }
            }
            f_new = logistic_smooth_objective(x, y, trial, Penalty::None, c);
            // Majorization condition for the quadratic upper bound.
            double lin = 0.0, quad = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                const double d = trial[j] - theta[j];
                lin += g[j] * d;
                quad += d * d;
            }
            if (f_new <= f + lin + quad / (2.0 * step) + 1e-15) break;
            step *= 0.5;
        }
        lipschitz_inv = step;
        double disp = 0.0;
        for (std::size_t j = 0; j < dim; ++j) disp = std::max(disp, std::abs(trial[j] - theta[j]));
        theta.swap(trial);
        f = f_new;
        if (disp < opt.tol) {
            m.converged = true;
            m.iterations = it + 1;
            return;
        }
    }
    m.iterations = opt.max_iter;
    m.converged = false;
}

template <LogisticDesign D>
void check_fit_inputs(const D& x, std::span<const int> y, const LogisticOptions& opt) {
    if (design::rows(x) != y.size()) throw DimensionError("fit_logistic: row count mismatch");
    if (y.empty()) throw FitError("fit_logistic: no rows");
    if (!(opt.c > 0)) throw ConfigError("fit_logistic: c must be > 0");
    bool has0 = false, has1 = false;
    for (int v : y) {
        if (v == 0) has0 = true;
        else if (v == 1) has1 = true;
        else throw DomainError("fit_logistic: target must be 0/1");
    }
    if (!has0 || !has1) throw FitError("fit_logistic: both classes must be present");
}

template <LogisticDesign D>
LogisticModel fit_core(const D& x, std::span<const int> y, const LogisticOptions& opt) {
    LogisticModel m;
    m.penalty = opt.penalty;
    m.c = opt.c;
    const std::size_t p = design::cols(x);
    std::vector<double> theta(p + 1, 0.0);
    // Start at the class prior.
    double pos = 0.0;
    for (int v : y) pos += v;
    theta[p] = logit(pos / static_cast<double>(y.size()));
    if (opt.penalty == Penalty::L1) minimize_l1(x, y, theta, opt.c, opt, m);
    else minimize_smooth(x, y, theta, opt.penalty, opt.c, opt, m);
    m.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(p));
    m.standardized_weights = m.weights;
    m.intercept = theta[p];
    return m;
}

}  // namespace detail

// Sparse designs are fitted as given.
inline LogisticModel fit_logistic(const SparseBinaryMatrix& x, std::span<const int> y, const LogisticOptions& opt) {
    detail::check_fit_inputs(x, y, opt);
    return detail::fit_core(x, y, opt);
}

inline LogisticModel fit_logistic(const Matrix& x, std::span<const int> y, const LogisticOptions& opt) {
    detail::check_fit_inputs(x, y, opt);
    for (double v : x.data())
        if (!std::isfinite(v)) throw DomainError("fit_logistic: design contains non-finite values");
    if (!opt.standardize) return detail::fit_core(x, y, opt);

    const std::size_t n = x.rows(), p = x.cols();
    std::vector<double> mu(p, 0.0), sd(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        const auto col = x.column(j);
        mu[j] = mean(col);
        sd[j] = std::sqrt(variance(col));
    }
    Matrix z(n, p);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) z(i, j) = sd[j] > 0 ? (x(i, j) - mu[j]) / sd[j] : 0.0;
    LogisticModel m = detail::fit_core(z, y, opt);
    m.standardized_weights = m.weights;
    for (std::size_t j = 0; j < p; ++j) {
        if (sd[j] > 0) {
            m.weights[j] = m.standardized_weights[j] / sd[j];
            m.intercept -= m.weights[j] * mu[j];
        } else {
            m.weights[j] = 0.0;
        }
    }
    return m;
}

// sigmoid(x.w + b), clamped to [1e-12, 1 - 1e-12].
inline std::vector<double> predict_proba(const LogisticModel& m, const Matrix& x) {
    if (x.cols() != m.weights.size()) throw DimensionError("predict_proba: width mismatch");
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
        out[i] = clamp_prob(sigmoid(design::dot(x, i, m.weights) + m.intercept));
    return out;
}

inline std::vector<double> predict_proba(const LogisticModel& m, const SparseBinaryMatrix& x) {
    if (x.cols() != m.weights.size()) throw DimensionError("predict_proba: width mismatch");
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
        out[i] = clamp_prob(sigmoid(design::dot(x, i, m.weights) + m.intercept));
    return out;
}

inline nlohmann::json to_json(const LogisticModel& m) {
    return {{"weights", m.weights},
            {"intercept", m.intercept},
            {"penalty", to_string(m.penalty)},
            {"c", m.c},
            {"converged", m.converged},
            {"iterations", m.iterations}};
}

inline LogisticModel logistic_from_json(const nlohmann::json& j) {
    LogisticModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.intercept = j.at("intercept").get<double>();
    m.penalty = penalty_from_string(j.at("penalty").get<std::string>());
    m.c = j.at("c").get<double>();
    m.converged = j.value("converged", false);
    m.iterations = j.value("iterations", std::size_t{0});
    m.standardized_weights = m.weights;
    return m;
}

}  // namespace creditrisk
