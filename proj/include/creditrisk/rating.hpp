#pragma once

// Rating scale construction: differential evolution (DE/rand/1/bin) places
// K-1 cut points on calibrated PDs so that the K resulting buckets are
// accurate (classwise Brier), tight, well separated, size-balanced and
// monotone in observed default rate.

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "creditrisk/core.hpp"
#include "creditrisk/data.hpp"

namespace creditrisk {

// ----------------------------------------------------------------------------
// Generic DE engine
// ----------------------------------------------------------------------------

struct DeParams {
    std::size_t population = 50;
    double weight = 0.8;     // differential weight F
    double crossover = 0.9;  // CR
    std::size_t generations = 300;
    std::uint64_t seed = 11;
    unsigned threads = 1;
};

struct DeResult {
    std::vector<double> best;
    double best_fitness = std::numeric_limits<double>::infinity();
    std::vector<double> best_history;  // incumbent best after each generation
};

// Minimizes `fitness` over genomes of length `dim`. `init` draws a starting
// genome, `repair` maps any genome into the feasible set before evaluation.
// Trial vectors are generated serially from one RNG and evaluated in
// parallel, so the result does not depend on the thread count.
// `on_generation`, when set, sees the population fitness after selection.
template <typename Fitness, typename Init, typename Repair>
DeResult differential_evolution(Fitness&& fitness, std::size_t dim, Init&& init, Repair&& repair,
                                const DeParams& p,
                                const std::function<void(std::size_t, std::span<const double>)>& on_generation = {}) {
    if (p.population < 4) throw ConfigError("differential evolution: population must be >= 4");
    if (!(p.weight > 0 && p.weight < 2)) throw ConfigError("differential evolution: F must lie in (0, 2)");
    if (!(p.crossover >= 0 && p.crossover <= 1)) throw ConfigError("differential evolution: CR must lie in [0, 1]");
    if (dim == 0) throw ConfigError("differential evolution: dimension must be >= 1");

    Rng rng(p.seed);
    const std::size_t np = p.population;
    std::vector<std::vector<double>> pop(np), trial(np);
    std::vector<double> fit(np), trial_fit(np);
    for (auto& x : pop) {
        x = init(rng);
        repair(x);
    }
    parallel_for(np, p.threads, [&](std::size_t i) { fit[i] = fitness(std::span<const double>(pop[i])); });

    DeResult res;
    auto track_best = [&] {
        for (std::size_t i = 0; i < np; ++i) {
            if (fit[i] < res.best_fitness) {
                res.best_fitness = fit[i];
                res.best = pop[i];
            }
        }
    };
    track_best();

    for (std::size_t g = 0; g < p.generations; ++g) {
        for (std::size_t i = 0; i < np; ++i) {
            std::size_t a, b, c;
            do { a = rng.below(np); } while (a == i);
            do { b = rng.below(np); } while (b == i || b == a);
            do { c = rng.below(np); } while (c == i || c == a || c == b);
            const std::size_t forced = rng.below(dim);
            auto& t = trial[i];
            t = pop[i];
            for (std::size_t d = 0; d < dim; ++d) {
                if (d == forced || rng.uniform() < p.crossover)
                    t[d] = pop[a][d] + p.weight * (pop[b][d] - pop[c][d]);
            }
            repair(t);
        }
        parallel_for(np, p.threads, [&](std::size_t i) { trial_fit[i] = fitness(std::span<const double>(trial[i])); });
        for (std::size_t i = 0; i < np; ++i) {
            if (trial_fit[i] <= fit[i]) {
                pop[i].swap(trial[i]);
                fit[i] = trial_fit[i];
            }
        }
        track_best();
        res.best_history.push_back(res.best_fitness);
        if (on_generation) on_generation(g, fit);
    }
    return res;
}

// ----------------------------------------------------------------------------
// Rating scale
// ----------------------------------------------------------------------------

struct FitnessWeights {
    double brier = 1.0;
    double cohesion = 1.0;
    double separation = 1.0;
    double size = 1e6;
    double monotonicity = 100.0;
};

struct DeConfig {
    std::size_t classes = 9;
    DeParams de;
    FitnessWeights weights;
    double min_share = 0.02;
    double max_share = 0.40;
    double epsilon = 1e-9;  // cuts are clamped to (epsilon, 1 - epsilon)
    double min_gap = 1e-6;

    void check() const {
        if (classes < 2) throw ConfigError("rating: need at least 2 classes");
        const auto& w = weights;
        if (w.brier < 0 || w.cohesion < 0 || w.separation < 0 || w.size < 0 || w.monotonicity < 0)
            throw ConfigError("rating: fitness weights must be >= 0");
        if (!(0 <= min_share && min_share < max_share && max_share <= 1))
            throw ConfigError("rating: need 0 <= min_share < max_share <= 1");
        if (!(epsilon > 0 && min_gap > 0 && epsilon + static_cast<double>(classes) * min_gap < 1))
            throw ConfigError("rating: epsilon/min_gap leave no room for the cuts");
    }
};

inline std::vector<std::string> default_rating_labels(std::size_t k) {
    if (k == 9) return {"AAA", "AA", "A", "BBB", "BB", "B", "CCC", "CC", "C"};
    std::vector<std::string> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back("R" + std::to_string(i + 1));
    return out;
}

struct RatingScale {
    std::vector<double> cuts;  // K-1 strictly increasing values in (0, 1)
    std::vector<double> class_pd;
    std::vector<std::string> labels;
    std::vector<double> class_share;

    std::size_t classes() const noexcept { return labels.size(); }

    // Bucket k is [cuts[k-1], cuts[k]); a pd equal to a cut falls in the upper one.
    std::size_t class_of(double pd) const {
        return static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), pd) - cuts.begin());
    }

    double bin_low(std::size_t k) const { return k == 0 ? 0.0 : cuts[k - 1]; }
    double bin_high(std::size_t k) const { return k + 1 == classes() ? 1.0 : cuts[k]; }

    void check() const {
        const std::size_t k = labels.size();
        if (cuts.size() + 1 != k || class_pd.size() != k || class_share.size() != k)
            throw DomainError("rating scale: inconsistent class count");
        for (std::size_t i = 0; i < cuts.size(); ++i) {
            if (!(cuts[i] > 0 && cuts[i] < 1)) throw DomainError("rating scale: cut outside (0,1)");
            if (i > 0 && !(cuts[i] > cuts[i - 1])) throw DomainError("rating scale: cuts not strictly increasing");
        }
        for (std::size_t i = 1; i < k; ++i)
            if (!(class_pd[i] > class_pd[i - 1])) throw DomainError("rating scale: class PD not strictly increasing");
        const double total = std::accumulate(class_share.begin(), class_share.end(), 0.0);
        if (std::abs(total - 1.0) > 1e-9) throw DomainError("rating scale: shares do not sum to 1");
    }
};

inline const std::string& assign_rating(const RatingScale& scale, double pd) {
    if (!(pd >= 0 && pd <= 1)) throw DomainError("assign_rating: pd outside [0, 1]");
    return scale.labels[scale.class_of(pd)];
}

// Sorted PDs with prefix sums so bucket statistics cost O(log n) per cut.
class PdSample {
public:
    PdSample(std::span<const double> pds, std::span<const int> y) {
        if (pds.size() != y.size()) throw DimensionError("rating: pds/y length mismatch");
        if (pds.empty()) throw DomainError("rating: no PDs");
        std::vector<std::size_t> order(pds.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pds[a] < pds[b]; });
        sorted_.reserve(pds.size());
        s1_.assign(1, 0.0);
        s2_.assign(1, 0.0);
        d_.assign(1, 0.0);
        for (std::size_t i : order) {
            const double v = pds[i];
            if (!(v >= 0 && v <= 1)) throw DomainError("rating: pd outside [0, 1]");
            sorted_.push_back(v);
            s1_.push_back(s1_.back() + v);
            s2_.push_back(s2_.back() + v * v);
            d_.push_back(d_.back() + y[i]);
        }
    }

    std::size_t size() const noexcept { return sorted_.size(); }
    const std::vector<double>& sorted() const noexcept { return sorted_; }

    // Index of the first pd >= cut.
    std::size_t boundary(double cut) const {
        return static_cast<std::size_t>(std::lower_bound(sorted_.begin(), sorted_.end(), cut) - sorted_.begin());
    }

    double sum(std::size_t a, std::size_t b) const { return s1_[b] - s1_[a]; }
    double sum_sq(std::size_t a, std::size_t b) const { return s2_[b] - s2_[a]; }
    double defaults(std::size_t a, std::size_t b) const { return d_[b] - d_[a]; }

    std::size_t distinct() const {
        std::size_t n = sorted_.empty() ? 0 : 1;
        for (std::size_t i = 1; i < sorted_.size(); ++i) n += sorted_[i] != sorted_[i - 1];
        return n;
    }

private:
    std::vector<double> sorted_;
    std::vector<double> s1_, s2_, d_;
};

struct BucketStats {
    std::vector<std::size_t> count;
    std::vector<double> class_pd;      // mean pd; interpolated for empty buckets
    std::vector<double> default_rate;  // NaN for empty buckets
    std::vector<double> share;
    std::vector<bool> interpolated;
};

inline BucketStats bucket_stats(std::span<const double> cuts, const PdSample& s) {
    const std::size_t k = cuts.size() + 1, n = s.size();
    BucketStats b;
    b.count.resize(k);
    b.class_pd.assign(k, kMissing);
    b.default_rate.assign(k, kMissing);
    b.share.resize(k);
    b.interpolated.assign(k, false);
    std::size_t lo = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t hi = c + 1 == k ? n : s.boundary(cuts[c]);
        const std::size_t cnt = hi > lo ? hi - lo : 0;
        b.count[c] = cnt;
        b.share[c] = static_cast<double>(cnt) / static_cast<double>(n);
        if (cnt > 0) {
            b.class_pd[c] = s.sum(lo, hi) / static_cast<double>(cnt);
            b.default_rate[c] = s.defaults(lo, hi) / static_cast<double>(cnt);
        }
        lo = std::max(lo, hi);
    }
    // Empty buckets: linear interpolation between the nearest occupied
    // neighbours, or the bucket midpoint at the edges.
    for (std::size_t c = 0; c < k; ++c) {
        if (b.count[c] > 0) continue;
        b.interpolated[c] = true;
        std::ptrdiff_t left = static_cast<std::ptrdiff_t>(c) - 1, right = static_cast<std::ptrdiff_t>(c) + 1;
        while (left >= 0 && b.count[static_cast<std::size_t>(left)] == 0) --left;
        while (right < static_cast<std::ptrdiff_t>(k) && b.count[static_cast<std::size_t>(right)] == 0) ++right;
        if (left >= 0 && right < static_cast<std::ptrdiff_t>(k)) {
            const double pl = b.class_pd[static_cast<std::size_t>(left)];
            const double pr = b.class_pd[static_cast<std::size_t>(right)];
            const double t = static_cast<double>(static_cast<std::ptrdiff_t>(c) - left) /
                             static_cast<double>(right - left);
            b.class_pd[c] = pl + t * (pr - pl);
        } else {
            const double low = c == 0 ? 0.0 : cuts[c - 1];
            const double high = c + 1 == k ? 1.0 : cuts[c];
            b.class_pd[c] = 0.5 * (low + high);
        }
    }
    return b;
}

struct FitnessTerms {
    double brier = 0, cohesion = 0, separation = 0, size_penalty = 0, mono_penalty = 0;
    double total = 0;
    bool has_empty = false;
};

// Lower is better:
//   w_b*BS_class + w_c*Coh - w_s*Sep + w_size*SizePen + w_mono*MonoPen
inline FitnessTerms fitness_terms(std::span<const double> cuts, const PdSample& s, const DeConfig& cfg) {
    const std::size_t k = cuts.size() + 1;
    const auto n = static_cast<double>(s.size());
    const BucketStats b = bucket_stats(cuts, s);
    FitnessTerms f;
    std::size_t lo = 0;
    for (std::size_t c = 0; c < k; ++c) {
        const std::size_t hi = lo + b.count[c];
        const double cnt = static_cast<double>(b.count[c]);
        if (b.count[c] > 0) {
            const double q = b.class_pd[c];
            const double d = s.defaults(lo, hi);
            f.brier += cnt * q * q - 2.0 * q * d + d;
            f.cohesion += std::max(0.0, s.sum_sq(lo, hi) - s.sum(lo, hi) * s.sum(lo, hi) / cnt);
        } else {
            f.has_empty = true;
        }
        const double under = std::max(0.0, cfg.min_share - b.share[c]);
        const double over = std::max(0.0, b.share[c] - cfg.max_share);
        f.size_penalty += under * under + over * over;
        lo = hi;
    }
    f.brier /= n;
    f.cohesion /= n;
    for (std::size_t c = 0; c + 1 < k; ++c) f.separation += b.class_pd[c + 1] - b.class_pd[c];
    f.separation /= static_cast<double>(k - 1);
    // Observed default rates of consecutive occupied buckets must not decrease.
    double prev = kMissing;
    for (std::size_t c = 0; c < k; ++c) {
        if (b.count[c] == 0) continue;
        if (!is_missing(prev)) {
            const double drop = std::max(0.0, prev - b.default_rate[c]);
            f.mono_penalty += drop * drop;
        }
        prev = b.default_rate[c];
    }
    const auto& w = cfg.weights;
    f.total = w.brier * f.brier + w.cohesion * f.cohesion - w.separation * f.separation +
              w.size * f.size_penalty + w.monotonicity * f.mono_penalty;
    return f;
}

inline double fitness(std::span<const double> cuts, const PdSample& s, const DeConfig& cfg) {
    return fitness_terms(cuts, s, cfg).total;
}

// Clamp into (epsilon, 1 - epsilon), sort, then enforce a minimum gap.
inline void repair_cuts(std::vector<double>& g, double epsilon, double min_gap) {
    for (double& v : g) {
        if (!std::isfinite(v)) v = 0.5;
        v = std::clamp(v, epsilon, 1.0 - epsilon);
    }
    std::sort(g.begin(), g.end());
    for (std::size_t i = 1; i < g.size(); ++i) g[i] = std::max(g[i], g[i - 1] + min_gap);
    const double top = 1.0 - epsilon;
    if (!g.empty() && g.back() > top) {
        g.back() = top;
        for (std::size_t i = g.size() - 1; i-- > 0;) g[i] = std::min(g[i], g[i + 1] - min_gap);
    }
}

struct RatingResult {
    RatingScale scale;
    FitnessTerms terms;
    DeResult search;
};

inline RatingScale scale_from_cuts(std::span<const double> cuts, const PdSample& s,
                                   std::vector<std::string> labels = {}) {
    const BucketStats b = bucket_stats(cuts, s);
    RatingScale scale;
    scale.cuts.assign(cuts.begin(), cuts.end());
    scale.class_pd = b.class_pd;
    scale.class_share = b.share;
    scale.labels = labels.empty() ? default_rating_labels(cuts.size() + 1) : std::move(labels);
    return scale;
}

inline RatingResult de_optimize(std::span<const double> pds, std::span<const int> y, const DeConfig& cfg) {
    cfg.check();
    const PdSample sample(pds, y);
    const std::size_t k = cfg.classes;
    if (sample.distinct() < k)
        throw FitError("rating: only " + std::to_string(sample.distinct()) + " distinct PDs for " +
                       std::to_string(k) + " classes; monotone classes are impossible, use fewer classes");

    const auto& sorted = sample.sorted();
    auto init = [&](Rng& rng) {
        std::vector<double> g(k - 1);
        for (double& v : g) v = sorted[rng.below(sorted.size())];
        return g;
    };
    auto repair = [&](std::vector<double>& g) { repair_cuts(g, cfg.epsilon, cfg.min_gap); };
    auto fit = [&](std::span<const double> g) { return fitness(g, sample, cfg); };

    RatingResult res;
    res.search = differential_evolution(fit, k - 1, init, repair, cfg.de);
    res.terms = fitness_terms(res.search.best, sample, cfg);
    res.scale = scale_from_cuts(res.search.best, sample);
    try {
        res.scale.check();
    } catch (const DomainError& e) {
        std::string diag = std::string("rating: optimized scale is invalid (") + e.what() + "); shares:";
        for (double sh : res.scale.class_share) diag += " " + std::to_string(sh);
        throw FitError(diag);
    }
    return res;
}

inline nlohmann::json to_json(const RatingScale& s) {
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t k = 0; k < s.classes(); ++k)
        classes.push_back({{"label", s.labels[k]},
                           {"bin_low", s.bin_low(k)},
                           {"bin_high", s.bin_high(k)},
                           {"class_pd", s.class_pd[k]},
                           {"share", s.class_share[k]}});
    return {{"format", "creditrisk.rating_scale/1"}, {"cuts", s.cuts}, {"classes", classes}};
}

inline RatingScale rating_scale_from_json(const nlohmann::json& j) {
    RatingScale s;
    s.cuts = j.at("cuts").get<std::vector<double>>();
    for (const auto& c : j.at("classes")) {
        s.labels.push_back(c.at("label").get<std::string>());
        s.class_pd.push_back(c.at("class_pd").get<double>());
        s.class_share.push_back(c.at("share").get<double>());
    }
    s.check();
    return s;
}

// Table-style CSV: label, bin_low, bin_high, class_pd, share.
inline void write_csv(std::ostream& out, const RatingScale& s) {
    out << "label,bin_low,bin_high,class_pd,share\n";
    for (std::size_t k = 0; k < s.classes(); ++k)
        out << csv::quote(s.labels[k]) << ',' << csv::format_double(s.bin_low(k)) << ','
            << csv::format_double(s.bin_high(k)) << ',' << csv::format_double(s.class_pd[k]) << ','
            << csv::format_double(s.class_share[k]) << '\n';
}

}  // namespace creditrisk
