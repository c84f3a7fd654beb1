#pragma once

// Orchestration of the full stack: prepare -> select -> train (with out-of-time
// tuning) -> calibrate -> rate -> validate -> explain. Each stage also runs on
// its own from artifacts persisted by the previous ones.
//
// The config is a JSON document; see docs/config.md for the grammar.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "creditrisk/autoenc.hpp"
#include "creditrisk/calib.hpp"
#include "creditrisk/core.hpp"
#include "creditrisk/data.hpp"
#include "creditrisk/encode.hpp"
#include "creditrisk/explain.hpp"
#include "creditrisk/gbdt.hpp"
#include "creditrisk/metrics.hpp"
#include "creditrisk/rating.hpp"
#include "creditrisk/select.hpp"
#include "creditrisk/synth.hpp"
#include "creditrisk/validate.hpp"

namespace creditrisk {

namespace fs = std::filesystem;
using nlohmann::json;

struct EmbeddingConfig {
    std::string path;
    std::string key_column;
    std::vector<std::size_t> dims{300, 128, 32, 5, 32, 128, 300};
    AutoencoderTrainOptions train;
    std::uint64_t init_seed = 1;
};

struct ExplainConfig {
    std::size_t instances = 20;
    std::size_t background = 64;
    std::size_t max_features = 15;
    std::size_t lime_instances = 5;
    LimeOptions lime;
    std::uint64_t seed = 23;
};

struct PipelineConfig {
    // Exactly one data source.
    std::string csv_path;
    std::string schema;
    std::optional<GeneratorSpec> synth;
    std::optional<EmbeddingConfig> embeddings;

    SplitSpec split;
    std::string categorical_encoding = "james_stein";
    bool select = true;
    SelectionConfig selection;
    std::vector<GbdtConfig> gbdt_grid;
    double beta = 1.0;
    std::vector<double> c_grid{0.01, 0.1, 1, 10, 100};
    DeConfig rating;
    double alpha = 0.95;
    TrafficLightParams traffic_light;
    std::size_t reliability_bins = 10;
    ExplainConfig explain;

    fs::path base_dir;  // relative paths resolve against this
};

// ----------------------------------------------------------------------------
// Config parsing
// ----------------------------------------------------------------------------

namespace detail {

inline const json& section(const json& j, const char* key, const std::string& where) {
    static const json empty = json::object();
    if (!j.contains(key)) return empty;
    const json& s = j.at(key);
    if (!s.is_object()) throw ConfigError("config: '" + where + key + "' must be an object");
    return s;
}

inline void allow_keys(const json& j, std::initializer_list<std::string_view> keys, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
            throw ConfigError("config: unknown key '" + where + it.key() + "'");
}

template <typename T>
T read(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("config: '" + where + key + "' must be a boolean");
    } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<long long>() < 0))
            throw ConfigError("config: '" + where + key + "' must be a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("config: '" + where + key + "' must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("config: '" + where + key + "' must be a string");
    }
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: '" + where + key + "' has the wrong type");
    }
}

inline std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace detail

inline std::vector<GbdtConfig> default_gbdt_grid() {
    std::vector<GbdtConfig> grid;
    for (std::size_t trees : {100, 200})
        for (std::size_t leaves : {7, 15}) {
            GbdtConfig c;
            c.n_trees = trees;
            c.max_leaves = leaves;
            grid.push_back(c);
        }
    return grid;
}

inline PipelineConfig parse_pipeline_config(const json& j, const fs::path& base_dir = {}) {
    using detail::read;
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    detail::allow_keys(j, {"data", "embeddings", "split", "encoding", "selection", "gbdt", "calibration", "rating",
                           "validation", "explain"},
                       "");
    PipelineConfig c;
    c.base_dir = base_dir;

    const json& data = detail::section(j, "data", "");
    detail::allow_keys(data, {"csv", "schema", "synth"}, "data.");
    if (data.contains("csv") == data.contains("synth"))
        throw ConfigError("config: 'data' needs exactly one of 'csv' or 'synth'");
    if (data.contains("csv")) {
        c.csv_path = read<std::string>(data, "csv", "", "data.");
        c.schema = read<std::string>(data, "schema", "", "data.");
        if (c.schema.empty()) throw ConfigError("config: 'data.schema' is required with 'data.csv'");
        parse_schema(c.schema);
    } else {
        const json& s = detail::section(data, "synth", "data.");
        detail::allow_keys(s, {"n_rows", "first_year", "last_year", "n_informative", "n_noise", "n_categorical",
                               "categorical_levels", "categorical_effect", "true_weights", "intercept",
                               "macro_drift", "seed"},
                           "data.synth.");
        GeneratorSpec g;
        const std::string w = "data.synth.";
        g.n_rows = read(s, "n_rows", g.n_rows, w);
        g.first_year = read(s, "first_year", g.first_year, w);
        g.last_year = read(s, "last_year", g.last_year, w);
        g.n_informative = read(s, "n_informative", g.n_informative, w);
        g.n_noise = read(s, "n_noise", g.n_noise, w);
        g.n_categorical = read(s, "n_categorical", g.n_categorical, w);
        g.categorical_levels = read(s, "categorical_levels", g.categorical_levels, w);
        g.categorical_effect = read(s, "categorical_effect", g.categorical_effect, w);
        g.true_weights = read(s, "true_weights", g.true_weights, w);
        g.intercept = read(s, "intercept", g.intercept, w);
        g.macro_drift = read(s, "macro_drift", g.macro_drift, w);
        g.seed = read(s, "seed", g.seed, w);
        g.check();
        c.synth = g;
    }

    if (j.contains("embeddings")) {
        const json& e = detail::section(j, "embeddings", "");
        detail::allow_keys(e, {"path", "key_column", "dims", "epochs", "batch_size", "learning_rate", "seed",
                               "init_seed"},
                           "embeddings.");
        EmbeddingConfig ec;
        ec.path = read<std::string>(e, "path", "", "embeddings.");
        ec.key_column = read<std::string>(e, "key_column", "", "embeddings.");
        if (ec.path.empty() || ec.key_column.empty())
            throw ConfigError("config: 'embeddings' needs 'path' and 'key_column'");
        ec.dims = read(e, "dims", ec.dims, "embeddings.");
        ec.train.epochs = read(e, "epochs", ec.train.epochs, "embeddings.");
        ec.train.batch_size = read(e, "batch_size", ec.train.batch_size, "embeddings.");
        ec.train.learning_rate = read(e, "learning_rate", ec.train.learning_rate, "embeddings.");
        ec.train.seed = read(e, "seed", ec.train.seed, "embeddings.");
        ec.init_seed = read(e, "init_seed", ec.init_seed, "embeddings.");
        check_autoencoder_dims(ec.dims, true);
        c.embeddings = ec;
    }

    const json& split = detail::section(j, "split", "");
    detail::allow_keys(split, {"oot_year", "test_fraction", "seed"}, "split.");
    if (!split.contains("oot_year")) throw ConfigError("config: 'split.oot_year' is required");
    c.split.oot_year = read(split, "oot_year", c.split.oot_year, "split.");
    c.split.test_fraction = read(split, "test_fraction", c.split.test_fraction, "split.");
    c.split.seed = read(split, "seed", c.split.seed, "split.");
    c.split.check();

    const json& enc = detail::section(j, "encoding", "");
    detail::allow_keys(enc, {"categorical"}, "encoding.");
    c.categorical_encoding = read(enc, "categorical", c.categorical_encoding, "encoding.");
    if (c.categorical_encoding != "james_stein" && c.categorical_encoding != "label")
        throw ConfigError("config: 'encoding.categorical' must be 'james_stein' or 'label'");

    const json& sel = detail::section(j, "selection", "");
    detail::allow_keys(sel, {"enabled", "n_final", "k_per_method", "chi2_bins", "rfe_step", "rfe_c", "l1_c",
                             "tree_count", "tree_seed"},
                       "selection.");
    c.select = read(sel, "enabled", c.select, "selection.");
    auto& sc = c.selection;
    sc.n_final = read(sel, "n_final", sc.n_final, "selection.");
    sc.k_per_method = read(sel, "k_per_method", sc.k_per_method, "selection.");
    sc.chi2_bins = read(sel, "chi2_bins", sc.chi2_bins, "selection.");
    sc.rfe_step = read(sel, "rfe_step", sc.rfe_step, "selection.");
    sc.rfe_c = read(sel, "rfe_c", sc.rfe_c, "selection.");
    sc.l1_c = read(sel, "l1_c", sc.l1_c, "selection.");
    sc.trees.n_trees = read(sel, "tree_count", sc.trees.n_trees, "selection.");
    sc.trees.seed = read(sel, "tree_seed", sc.trees.seed, "selection.");
    if (sc.chi2_bins == 0 || sc.rfe_step == 0 || !(sc.rfe_c > 0) || !(sc.l1_c > 0))
        throw ConfigError("config: selection parameters must be positive");

    const json& gb = detail::section(j, "gbdt", "");
    detail::allow_keys(gb, {"base", "grid", "candidates", "beta"}, "gbdt.");
    c.beta = read(gb, "beta", c.beta, "gbdt.");
    if (!(c.beta > 0) || !std::isfinite(c.beta)) throw ConfigError("config: 'gbdt.beta' must be finite and > 0");
    if (gb.contains("candidates")) {
        // Explicit list, as echoed in config.json.
        if (gb.contains("base") || gb.contains("grid"))
            throw ConfigError("config: 'gbdt.candidates' excludes 'gbdt.base' and 'gbdt.grid'");
        const json& list = gb.at("candidates");
        if (!list.is_array() || list.empty()) throw ConfigError("config: 'gbdt.candidates' must be a non-empty array");
        for (std::size_t i = 0; i < list.size(); ++i) {
            const std::string prefix = "gbdt.candidates[" + std::to_string(i) + "].";
            if (!list[i].is_object()) throw ConfigError("config: '" + prefix.substr(0, prefix.size() - 1) + "' must be an object");
            detail::allow_keys(list[i], {"n_trees", "max_leaves", "min_samples_leaf", "learning_rate",
                                         "subsample_fraction", "scale_pos_weight", "auto_scale_pos_weight",
                                         "min_gain", "lambda", "seed"},
                               prefix);
            try {
                c.gbdt_grid.push_back(gbdt_config_from_json(list[i]));
            } catch (const json::exception& e) {
                throw ConfigError("config: '" + prefix.substr(0, prefix.size() - 1) + "': " + e.what());
            }
        }
    } else if (gb.contains("base") || gb.contains("grid")) {
        const json& base_j = detail::section(gb, "base", "gbdt.");
        detail::allow_keys(base_j, {"n_trees", "max_leaves", "min_samples_leaf", "learning_rate",
                                    "subsample_fraction", "scale_pos_weight", "auto_scale_pos_weight", "min_gain",
                                    "lambda", "seed"},
                           "gbdt.base.");
        GbdtConfig base;
        try {
            base = gbdt_config_from_json(base_j);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config: 'gbdt.base': ") + e.what());
        }
        const json& grid_j = detail::section(gb, "grid", "gbdt.");
        detail::allow_keys(grid_j, {"n_trees", "max_leaves", "min_samples_leaf", "learning_rate"}, "gbdt.grid.");
        auto axis = [&](const char* key, auto fallback) {
            using T = decltype(fallback);
            std::vector<T> v = read(grid_j, key, std::vector<T>{fallback}, "gbdt.grid.");
            if (v.empty()) throw ConfigError(std::string("config: 'gbdt.grid.") + key + "' is empty");
            return v;
        };
        const auto trees = axis("n_trees", base.n_trees);
        const auto leaves = axis("max_leaves", base.max_leaves);
        const auto min_leaf = axis("min_samples_leaf", base.min_samples_leaf);
        const auto lr = axis("learning_rate", base.learning_rate);
        for (auto t : trees)
            for (auto l : leaves)
                for (auto m : min_leaf)
                    for (auto r : lr) {
                        GbdtConfig g = base;
                        g.n_trees = t;
                        g.max_leaves = l;
                        g.min_samples_leaf = m;
                        g.learning_rate = r;
                        g.check();
                        c.gbdt_grid.push_back(g);
                    }
    } else {
        c.gbdt_grid = default_gbdt_grid();
    }

    const json& cal = detail::section(j, "calibration", "");
    detail::allow_keys(cal, {"c_grid"}, "calibration.");
    c.c_grid = read(cal, "c_grid", c.c_grid, "calibration.");
    if (c.c_grid.empty()) throw ConfigError("config: 'calibration.c_grid' is empty");
    for (double v : c.c_grid)
        if (!(v > 0)) throw ConfigError("config: 'calibration.c_grid' values must be > 0");

    const json& rt = detail::section(j, "rating", "");
    detail::allow_keys(rt, {"classes", "population", "generations", "weight", "crossover", "seed", "min_share",
                            "max_share", "weights"},
                       "rating.");
    auto& r = c.rating;
    r.classes = read(rt, "classes", r.classes, "rating.");
    r.de.population = read(rt, "population", r.de.population, "rating.");
    r.de.generations = read(rt, "generations", r.de.generations, "rating.");
    r.de.weight = read(rt, "weight", r.de.weight, "rating.");
    r.de.crossover = read(rt, "crossover", r.de.crossover, "rating.");
    r.de.seed = read(rt, "seed", r.de.seed, "rating.");
    r.min_share = read(rt, "min_share", r.min_share, "rating.");
    r.max_share = read(rt, "max_share", r.max_share, "rating.");
    const json& fw = detail::section(rt, "weights", "rating.");
    detail::allow_keys(fw, {"brier", "cohesion", "separation", "size", "monotonicity"}, "rating.weights.");
    r.weights.brier = read(fw, "brier", r.weights.brier, "rating.weights.");
    r.weights.cohesion = read(fw, "cohesion", r.weights.cohesion, "rating.weights.");
    r.weights.separation = read(fw, "separation", r.weights.separation, "rating.weights.");
    r.weights.size = read(fw, "size", r.weights.size, "rating.weights.");
    r.weights.monotonicity = read(fw, "monotonicity", r.weights.monotonicity, "rating.weights.");
    if (r.de.population < 4) throw ConfigError("config: 'rating.population' must be >= 4");
    r.check();

    const json& va = detail::section(j, "validation", "");
    detail::allow_keys(va, {"alpha", "k_yellow", "k_orange", "reliability_bins"}, "validation.");
    c.alpha = read(va, "alpha", c.alpha, "validation.");
    c.traffic_light.k_yellow = read(va, "k_yellow", c.traffic_light.k_yellow, "validation.");
    c.traffic_light.k_orange = read(va, "k_orange", c.traffic_light.k_orange, "validation.");
    c.reliability_bins = read(va, "reliability_bins", c.reliability_bins, "validation.");
    if (!(c.alpha > 0 && c.alpha < 1)) throw ConfigError("config: 'validation.alpha' must lie in (0, 1)");
    if (c.reliability_bins == 0) throw ConfigError("config: 'validation.reliability_bins' must be >= 1");
    c.traffic_light.check();

    const json& ex = detail::section(j, "explain", "");
    detail::allow_keys(ex, {"instances", "background", "max_features", "lime_instances", "lime_samples",
                            "lime_top_k", "kernel_width", "seed"},
                       "explain.");
    auto& e = c.explain;
    e.instances = read(ex, "instances", e.instances, "explain.");
    e.background = read(ex, "background", e.background, "explain.");
    e.max_features = read(ex, "max_features", e.max_features, "explain.");
    e.lime_instances = read(ex, "lime_instances", e.lime_instances, "explain.");
    e.lime.n_samples = read(ex, "lime_samples", e.lime.n_samples, "explain.");
    e.lime.top_k = read(ex, "lime_top_k", e.lime.top_k, "explain.");
    e.lime.kernel_width = read(ex, "kernel_width", e.lime.kernel_width, "explain.");
    e.seed = read(ex, "seed", e.seed, "explain.");
    e.lime.seed = Rng::derive(e.seed, 1);
    if (e.background == 0) throw ConfigError("config: 'explain.background' must be >= 1");
    if (e.max_features > 24) throw ConfigError("config: 'explain.max_features' above 24 is not enumerable");
    return c;
}

inline PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_pipeline_config(j, fs::path(path).parent_path());
}

// Canonical echo of the effective config, defaults included.
inline json to_json(const PipelineConfig& c) {
    json j;
    if (c.synth) {
        const auto& g = *c.synth;
        j["data"]["synth"] = {{"n_rows", g.n_rows},
                              {"first_year", g.first_year},
                              {"last_year", g.last_year},
                              {"n_informative", g.n_informative},
                              {"n_noise", g.n_noise},
                              {"n_categorical", g.n_categorical},
                              {"categorical_levels", g.categorical_levels},
                              {"categorical_effect", g.categorical_effect},
                              {"true_weights", g.weights()},
                              {"intercept", g.intercept},
                              {"macro_drift", g.drift()},
                              {"seed", g.seed}};
    } else {
        j["data"] = {{"csv", c.csv_path}, {"schema", c.schema}};
    }
    if (c.embeddings) {
        const auto& e = *c.embeddings;
        j["embeddings"] = {{"path", e.path},
                           {"key_column", e.key_column},
                           {"dims", e.dims},
                           {"epochs", e.train.epochs},
                           {"batch_size", e.train.batch_size},
                           {"learning_rate", e.train.learning_rate},
                           {"seed", e.train.seed},
                           {"init_seed", e.init_seed}};
    }
    j["split"] = {{"oot_year", c.split.oot_year}, {"test_fraction", c.split.test_fraction}, {"seed", c.split.seed}};
    j["encoding"] = {{"categorical", c.categorical_encoding}};
    j["selection"] = to_json(c.selection);
    j["selection"]["enabled"] = c.select;
    json grid = json::array();
    for (const auto& g : c.gbdt_grid) grid.push_back(to_json(g));
    j["gbdt"] = {{"candidates", grid}, {"beta", c.beta}};
    j["calibration"] = {{"c_grid", c.c_grid}};
    const auto& r = c.rating;
    j["rating"] = {{"classes", r.classes},
                   {"population", r.de.population},
                   {"generations", r.de.generations},
                   {"weight", r.de.weight},
                   {"crossover", r.de.crossover},
                   {"seed", r.de.seed},
                   {"min_share", r.min_share},
                   {"max_share", r.max_share},
                   {"weights",
                    {{"brier", r.weights.brier},
                     {"cohesion", r.weights.cohesion},
                     {"separation", r.weights.separation},
                     {"size", r.weights.size},
                     {"monotonicity", r.weights.monotonicity}}}};
    j["validation"] = {{"alpha", c.alpha},
                       {"k_yellow", c.traffic_light.k_yellow},
                       {"k_orange", c.traffic_light.k_orange},
                       {"reliability_bins", c.reliability_bins}};
    const auto& e = c.explain;
    j["explain"] = {{"instances", e.instances},       {"background", e.background},
                    {"max_features", e.max_features}, {"lime_instances", e.lime_instances},
                    {"lime_samples", e.lime.n_samples}, {"lime_top_k", e.lime.top_k},
                    {"kernel_width", e.lime.kernel_width}, {"seed", e.seed}};
    return j;
}

inline std::string config_hash(const PipelineConfig& c) { return detail::fnv1a_hex(to_json(c).dump()); }

inline json config_seeds(const PipelineConfig& c) {
    json gbdt = json::array();
    for (const auto& g : c.gbdt_grid) gbdt.push_back(g.seed);
    json s = {{"split", c.split.seed},
              {"selection_trees", c.selection.trees.seed},
              {"gbdt", gbdt},
              {"rating", c.rating.de.seed},
              {"explain", c.explain.seed}};
    if (c.synth) s["synth"] = c.synth->seed;
    if (c.embeddings) s["autoencoder"] = {{"init", c.embeddings->init_seed}, {"train", c.embeddings->train.seed}};
    return s;
}

// ----------------------------------------------------------------------------
// Artifacts
// ----------------------------------------------------------------------------

// Writes JSON/CSV artifacts under one directory, stamping each with the config
// hash and seeds, and keeps a manifest of what was written.
class ArtifactStore {
public:
    ArtifactStore(fs::path dir, const PipelineConfig& cfg)
        : dir_(std::move(dir)), hash_(config_hash(cfg)), seeds_(config_seeds(cfg)) {
        fs::create_directories(dir_);
    }

    const fs::path& dir() const noexcept { return dir_; }
    const std::string& hash() const noexcept { return hash_; }
    fs::path path(const std::string& name) const { return dir_ / name; }
    const std::vector<std::string>& written() const noexcept { return written_; }

    void write_json(const std::string& name, json body) {
        body["provenance"] = {{"config_hash", hash_}, {"seeds", seeds_}};
        std::ofstream out = open(name);
        out << body.dump(2) << '\n';
        finish(name, out);
    }

    template <typename Fn>
    void write_csv(const std::string& name, Fn&& fill) {
        std::ofstream out = open(name);
        out << "# config_hash=" << hash_ << " seeds=" << seeds_.dump() << '\n';
        fill(out);
        finish(name, out);
    }

    void write_manifest(const std::string& status, const std::string& failed_stage = {},
                        const std::string& cause = {}) {
        json m = {{"status", status}, {"artifacts", written_}};
        if (!failed_stage.empty()) m["failed_stage"] = failed_stage;
        if (!cause.empty()) m["cause"] = cause;
        write_json("manifest.json", std::move(m));
        written_.pop_back();
    }

private:
    std::ofstream open(const std::string& name) {
        const fs::path p = dir_ / name;
        fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary);
        if (!out) throw Error("artifacts: cannot write '" + p.string() + "'");
        return out;
    }

    void finish(const std::string& name, std::ofstream& out) {
        out.flush();
        if (!out) throw Error("artifacts: write to '" + name + "' failed");
        written_.push_back(name);
    }

    fs::path dir_;
    std::string hash_;
    json seeds_;
    std::vector<std::string> written_;
};

inline json read_json_artifact(const fs::path& p, const std::string& produced_by) {
    std::ifstream in(p);
    if (!in)
        throw ConfigError("missing upstream artifact '" + p.string() + "'; run `" + produced_by + "` first");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DomainError("artifact '" + p.string() + "' is not valid JSON: " + e.what());
    }
}

// ----------------------------------------------------------------------------
// Stages
// ----------------------------------------------------------------------------

class StageError : public Error {
public:
    StageError(std::string stage, const std::string& cause)
        : Error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)), cause_(cause) {}
    const std::string& stage() const noexcept { return stage_; }
    const std::string& cause() const noexcept { return cause_; }

private:
    std::string stage_;
    std::string cause_;
};

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

struct PreparedData {
    Dataset train;  // boosted-tree fit rows
    Dataset calib;  // calibrator fit rows, stratified holdout of the development years
    Dataset oot;    // out-of-time evaluation year
    std::vector<std::string> warnings;
    json encoders = json::object();
    std::optional<AutoencoderParams> autoencoder;
    std::optional<TrainLog> autoencoder_log;
    std::vector<double> true_pd;  // indexed by row_id; synthetic data only
};

inline fs::path resolve(const PipelineConfig& c, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() || c.base_dir.empty() ? path : c.base_dir / path;
}

inline Dataset load_source(const PipelineConfig& c, std::vector<double>* true_pd = nullptr) {
    if (c.synth) {
        SyntheticData s = generate(*c.synth);
        if (true_pd) *true_pd = std::move(s.true_pd);
        return std::move(s.data);
    }
    return load_csv(resolve(c, c.csv_path).string(), parse_schema(c.schema));
}

// Throws when two partitions share a row. This is the leakage guard between
// the boosted-tree fit rows and the calibrator fit rows.
inline void assert_disjoint(const Dataset& a, const Dataset& b, const std::string& what) {
    std::vector<std::uint64_t> ia(a.row_id), ib(b.row_id);
    std::sort(ia.begin(), ia.end());
    std::sort(ib.begin(), ib.end());
    std::vector<std::uint64_t> both;
    std::set_intersection(ia.begin(), ia.end(), ib.begin(), ib.end(), std::back_inserter(both));
    if (!both.empty())
        throw Error("leakage guard: " + what + " share " + std::to_string(both.size()) + " rows (first row_id " +
                    std::to_string(both.front()) + ")");
}

// Replaces each categorical column by its encoding. James-Stein statistics
// come from `fit` alone.
inline json encode_categoricals(const std::string& method, Dataset& fit, std::vector<Dataset*> others) {
    json out = json::object();
    for (std::size_t j = 0; j < fit.n_cols(); ++j) {
        if (fit.feature_kinds[j] != FeatureKind::Categorical) continue;
        const auto dict = fit.dictionaries[j];
        if (method == "james_stein") {
            const auto enc = fit_james_stein(fit.features.column(j), fit.target);
            auto apply = [&](Dataset& d) {
                for (std::size_t r = 0; r < d.n_rows(); ++r) d.features(r, j) = enc.encode(d.features(r, j));
                d.feature_kinds[j] = FeatureKind::Numeric;
                d.dictionaries[j].clear();
            };
            apply(fit);
            for (Dataset* d : others) apply(*d);
            json cats = json::object();
            for (const auto& [code, cs] : enc.categories())
                cats[dict[static_cast<std::size_t>(code)]] = {
                    {"count", cs.count}, {"target_mean", cs.target_mean}, {"weight", cs.weight}, {"encoded", cs.encoded}};
            out[fit.feature_names[j]] = {{"method", "james_stein"},
                                         {"global_mean", enc.global_mean()},
                                         {"target_variance", enc.target_variance()},
                                         {"between_variance", enc.between_variance()},
                                         {"fitted_rows", enc.fitted_rows()},
                                         {"categories", cats}};
        } else {
            for (Dataset* d : others)
                if (d->dictionaries[j] != dict)
                    throw DomainError("label encoding: partitions disagree on the categories of '" +
                                      fit.feature_names[j] + "'");
            out[fit.feature_names[j]] = {{"method", "label"}, {"dictionary", dict}};
            others.push_back(&fit);
            for (Dataset* d : others) {
                d->feature_kinds[j] = FeatureKind::Numeric;
                d->dictionaries[j].clear();
            }
            others.pop_back();
        }
    }
    return out;
}

inline PreparedData prepare(const PipelineConfig& c) {
    PreparedData p;
    Dataset ds = load_source(c, &p.true_pd);
    if (c.embeddings) {
        const auto& e = *c.embeddings;
        EmbeddingLoad load = load_embeddings(resolve(c, e.path).string());
        p.warnings.insert(p.warnings.end(), load.warnings.begin(), load.warnings.end());
        auto params = init_autoencoder(e.dims, e.init_seed);
        auto [trained, log] = train_autoencoder(std::move(params), load.table.as_matrix(), e.train);
        add_embedding_columns(ds, e.key_column, trained, load.table);
        p.autoencoder = std::move(trained);
        p.autoencoder_log = std::move(log);
    }
    Split oot = split_out_of_time(ds, c.split.oot_year);
    p.warnings.insert(p.warnings.end(), oot.warnings.begin(), oot.warnings.end());
    Split dev = stratified_split(oot.first, c.split.test_fraction, c.split.seed);
    p.warnings.insert(p.warnings.end(), dev.warnings.begin(), dev.warnings.end());
    p.train = std::move(dev.first);
    p.calib = std::move(dev.second);
    p.oot = std::move(oot.second);
    p.encoders = encode_categoricals(c.categorical_encoding, p.train, {&p.calib, &p.oot});
    return p;
}

// Keeps the named columns, in the dataset's own column order.
inline Dataset keep_columns(const Dataset& d, const std::vector<std::string>& names) {
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < d.n_cols(); ++j)
        if (std::find(names.begin(), names.end(), d.feature_names[j]) != names.end()) idx.push_back(j);
    if (idx.size() != names.size()) throw DomainError("keep_columns: some selected columns are absent");
    return d.select_columns(std::span<const std::size_t>(idx));
}

struct TrainedModel {
    CvResult cv;
    GbdtModel model;
};

inline TrainedModel train_stage(const PipelineConfig& c, const Dataset& train, unsigned threads) {
    TrainedModel t;
    t.cv = oot_cv_tune(train, c.gbdt_grid, c.beta, threads);
    t.model = fit_gbdt(train, t.cv.best, threads);
    return t;
}

// The c grid is scored out of time inside the calibration rows: fit on their
// earlier years, score on their last year. The chosen c is then refit on all
// calibration rows.
inline Calibrator calibrate_stage(const PipelineConfig& c, const GbdtModel& model, const Dataset& train,
                                  const Dataset& calib) {
    assert_disjoint(train, calib, "boosted-tree fit rows and calibrator fit rows");
    const int last = *std::max_element(calib.year.begin(), calib.year.end());
    std::vector<std::size_t> early, late;
    for (std::size_t r = 0; r < calib.n_rows(); ++r) (calib.year[r] < last ? early : late).push_back(r);
    Dataset fit_part, hold_part;
    auto has_both = [](const Dataset& d) { return d.positives() > 0 && d.positives() < d.n_rows(); };
    fit_part = calib.subset(early);
    hold_part = calib.subset(late);
    if (!has_both(fit_part) || !has_both(hold_part)) {
        Split s = stratified_split(calib, 0.5, Rng::derive(c.split.seed, 7));
        fit_part = std::move(s.first);
        hold_part = std::move(s.second);
    }
    Calibrator scored = fit_calibrator(model, {fit_part.features, fit_part.target}, c.c_grid,
                                       {hold_part.features, hold_part.target});
    const std::array<double, 1> chosen{scored.c};
    Calibrator final_cal =
        fit_calibrator(model, {calib.features, calib.target}, chosen, {hold_part.features, hold_part.target});
    final_cal.c_scores = scored.c_scores;
    return final_cal;
}

inline RatingResult rate_stage(const PipelineConfig& c, const GbdtModel& model, const Calibrator& cal,
                               const Dataset& train, const Dataset& calib, unsigned threads) {
    const Dataset dev = concat(train, calib);
    const auto pd = calibrated_pd(cal, model, dev.features);
    DeConfig cfg = c.rating;
    cfg.de.threads = threads;
    return de_optimize(pd, dev.target, cfg);
}

struct Explanations {
    std::vector<std::size_t> instances;  // rows of the explained dataset
    std::vector<ShapExplanation> shap;
    std::vector<LimeExplanation> lime;
    ShapSummary summary;
};

inline Explanations explain_stage(const PipelineConfig& c, const GbdtModel& model, const Dataset& background_src,
                                  const Dataset& target, unsigned threads) {
    const auto& e = c.explain;
    if (model.n_features > e.max_features)
        throw ConfigError("explain: model has " + std::to_string(model.n_features) +
                          " features, above the exact Shapley cap of " + std::to_string(e.max_features) +
                          "; enable feature selection with selection.n_final <= " + std::to_string(e.max_features));
    Rng rng(e.seed);
    std::vector<std::size_t> bg_rows(background_src.n_rows());
    std::iota(bg_rows.begin(), bg_rows.end(), std::size_t{0});
    rng.shuffle(bg_rows);
    bg_rows.resize(std::min(e.background, bg_rows.size()));
    std::sort(bg_rows.begin(), bg_rows.end());
    const Matrix background = background_src.features.select_rows(bg_rows);

    Explanations out;
    std::vector<std::size_t> rows(target.n_rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    rng.shuffle(rows);
    rows.resize(std::min(e.instances, rows.size()));
    std::sort(rows.begin(), rows.end());
    out.instances = rows;
    out.shap.resize(rows.size());
    parallel_for(rows.size(), threads, [&](std::size_t i) {
        out.shap[i] = exact_shapley(model, target.features.row(rows[i]), background, e.max_features);
    });
    const ScoreFunction score = [&](std::span<const double> x) { return model.raw_score(x); };
    const std::size_t n_lime = std::min(e.lime_instances, rows.size());
    out.lime.resize(n_lime);
    parallel_for(n_lime, threads, [&](std::size_t i) {
        LimeOptions opt = e.lime;
        opt.seed = Rng::derive(e.lime.seed, i);
        out.lime[i] = lime_explain(score, target.features.row(rows[i]), background, opt);
    });
    if (!out.shap.empty()) out.summary = summary_stats(out.shap);
    return out;
}

// ----------------------------------------------------------------------------
// Artifact emitters shared by the pipeline and the subcommands
// ----------------------------------------------------------------------------

namespace artifact {
inline constexpr const char* kTrainData = "data/train.csv";
inline constexpr const char* kCalibData = "data/calib.csv";
inline constexpr const char* kOotData = "data/oot.csv";
inline constexpr const char* kSchema = "data/schema.txt";
inline constexpr const char* kModel = "gbdt_model.json";
inline constexpr const char* kCalibrator = "calibrator.json";
inline constexpr const char* kScale = "rating_scale.json";
}  // namespace artifact

inline void emit_prepared(ArtifactStore& store, const PreparedData& p, const SelectionReport* selection) {
    store.write_csv(artifact::kTrainData, [&](std::ostream& o) { write_csv(o, p.train, true); });
    store.write_csv(artifact::kCalibData, [&](std::ostream& o) { write_csv(o, p.calib, true); });
    store.write_csv(artifact::kOotData, [&](std::ostream& o) { write_csv(o, p.oot, true); });
    {
        std::ofstream out(store.path(artifact::kSchema), std::ios::binary);
        out << schema_to_string(schema_of(p.train, true)) << '\n';
    }
    store.write_json("encoders.json", {{"format", "creditrisk.encoders/1"}, {"columns", p.encoders}});
    if (p.autoencoder) {
        json j = to_json(*p.autoencoder);
        j["train_log"] = {{"mse", p.autoencoder_log->mse}, {"epochs", p.autoencoder_log->epochs},
                          {"seed", p.autoencoder_log->seed}};
        store.write_json("autoencoder.json", j);
    }
    if (selection) store.write_json("selection.json", to_json(*selection));
    if (!p.warnings.empty()) store.write_json("prepare_warnings.json", {{"warnings", p.warnings}});
}

inline void emit_training(ArtifactStore& store, const TrainedModel& t, const std::vector<GbdtConfig>& grid) {
    store.write_json(artifact::kModel, to_json(t.model));
    json cands = json::array();
    for (std::size_t i = 0; i < grid.size(); ++i)
        cands.push_back({{"index", i},
                         {"config", to_json(grid[i])},
                         {"mean_fbeta", detail::nullable(t.cv.mean_fbeta[i])}});
    store.write_json("cv.json", {{"format", "creditrisk.cv/1"},
                                 {"best_index", t.cv.best_index},
                                 {"candidates", cands},
                                 {"notes", t.cv.notes}});
    store.write_csv("cv_folds.csv", [&](std::ostream& o) {
        o << "candidate,test_year,n_train,n_test,specificity,recall,fbeta\n";
        for (const auto& f : t.cv.folds)
            o << f.candidate << ',' << f.test_year << ',' << f.n_train << ',' << f.n_test << ','
              << csv::format_double(f.specificity) << ',' << csv::format_double(f.recall) << ','
              << csv::format_double(f.fbeta) << '\n';
    });
}

inline void emit_roc(ArtifactStore& store, const std::string& name, const RocCurve& roc) {
    store.write_csv(name, [&](std::ostream& o) {
        o << "threshold,fpr,tpr\n";
        for (const auto& p : roc.points)
            o << csv::format_double(p.threshold) << ',' << csv::format_double(p.fpr) << ','
              << csv::format_double(p.tpr) << '\n';
    });
}

struct ValidationOutputs {
    ValidationReport report;
    std::vector<double> raw_pd;
    std::vector<double> calibrated;
    json metrics;
};

inline ValidationOutputs validate_stage(const PipelineConfig& c, const GbdtModel& model, const Calibrator& cal,
                                        const RatingScale& scale, const Dataset& oot,
                                        const std::vector<double>& true_pd = {}) {
    ValidationOutputs v;
    v.raw_pd = predict_proba(model, oot.features);
    v.calibrated = calibrated_pd(cal, model, oot.features);
    v.report = validate_scale(scale, v.calibrated, oot.target, c.alpha, c.traffic_light, c.reliability_bins);
    const bool both = oot.positives() > 0 && oot.positives() < oot.n_rows();
    json m = {{"n", oot.n_rows()}, {"defaults", oot.positives()}};
    m["brier_raw"] = brier(v.raw_pd, oot.target);
    m["brier_calibrated"] = brier(v.calibrated, oot.target);
    m["log_loss_calibrated"] = log_loss(v.calibrated, oot.target);
    if (both) {
        const RocCurve raw = roc_auc(v.raw_pd, oot.target);
        const RocCurve calr = roc_auc(v.calibrated, oot.target);
        m["auroc_raw"] = raw.auc;
        m["auroc_calibrated"] = calr.auc;
        const RocPoint yj = youden_threshold(calr);
        m["youden_threshold"] = yj.threshold;
        m["youden_tpr"] = yj.tpr;
        m["youden_fpr"] = yj.fpr;
    }
    const auto cm = confusion(v.raw_pd, oot.target, 0.5);
    m["classifier_at_0.5"] = {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
    if (!true_pd.empty() && both) {
        std::vector<double> tp;
        for (auto id : oot.row_id) tp.push_back(true_pd.at(id));
        const BayesMetrics b = bayes_metrics(tp, oot.target);
        m["bayes_auroc"] = b.auroc;
        m["irreducible_brier"] = b.irreducible_brier;
        m["true_pd_brier"] = b.brier;
    }
    v.metrics = m;
    return v;
}

inline void emit_validation(ArtifactStore& store, const ValidationOutputs& v, const Dataset& oot) {
    store.write_json("validation.json", to_json(v.report));
    store.write_csv("validation.csv", [&](std::ostream& o) { write_csv(o, v.report); });
    store.write_csv("reliability.csv", [&](std::ostream& o) { write_csv(o, v.report.reliability); });
    store.write_json("metrics.json", {{"format", "creditrisk.metrics/1"}, {"oot", v.metrics}});
    if (oot.positives() > 0 && oot.positives() < oot.n_rows()) {
        emit_roc(store, "roc_calibrated.csv", roc_auc(v.calibrated, oot.target));
        emit_roc(store, "roc_raw.csv", roc_auc(v.raw_pd, oot.target));
    }
}

inline void emit_explanations(ArtifactStore& store, const Explanations& ex, const Dataset& target) {
    const auto& names = target.feature_names;
    json shap = json::array();
    for (std::size_t i = 0; i < ex.shap.size(); ++i) {
        json e = to_json(ex.shap[i], names);
        e["row_id"] = target.row_id[ex.instances[i]];
        shap.push_back(e);
    }
    json lime = json::array();
    for (std::size_t i = 0; i < ex.lime.size(); ++i) {
        json e = to_json(ex.lime[i], names);
        e["row_id"] = target.row_id[ex.instances[i]];
        lime.push_back(e);
    }
    store.write_json("explanations.json", {{"format", "creditrisk.explanations/1"},
                                           {"output", "raw log-odds score"},
                                           {"shap", shap},
                                           {"lime", lime}});
    if (ex.shap.empty()) return;
    store.write_csv("shap_summary.csv", [&](std::ostream& o) { write_summary_csv(o, ex.summary, names); });
    store.write_csv("shap_ranking.csv", [&](std::ostream& o) { write_ranking_csv(o, ex.summary, names); });
    store.write_csv("shap_waterfall.csv",
                    [&](std::ostream& o) { write_waterfall_csv(o, ex.summary, ex.shap, names); });
}

// ----------------------------------------------------------------------------
// Full run
// ----------------------------------------------------------------------------

struct PipelineResult {
    PreparedData data;
    std::optional<SelectionReport> selection;
    TrainedModel trained;
    Calibrator calibrator;
    RatingResult rating;
    ValidationOutputs validation;
    Explanations explanations;
    std::vector<std::string> artifacts;
    std::string config_hash;
};

// Runs every stage and writes all artifacts to out_dir. On failure the
// manifest records the stage, the cause and the artifacts written so far,
// and a StageError is rethrown.
inline PipelineResult run_pipeline(const PipelineConfig& c, const fs::path& out_dir, unsigned threads = 1) {
    ArtifactStore store(out_dir, c);
    PipelineResult res;
    res.config_hash = store.hash();
    try {
        store.write_json("config.json", {{"format", "creditrisk.config/1"}, {"config", to_json(c)}});
        res.data = run_stage("prepare", [&] { return prepare(c); });
        if (c.select) {
            res.selection = run_stage("select", [&] {
                return select_features(res.data.train.features, res.data.train.target, res.data.train.feature_names,
                                       c.selection, threads);
            });
            run_stage("select", [&] {
                res.data.train = keep_columns(res.data.train, res.selection->selected);
                res.data.calib = keep_columns(res.data.calib, res.selection->selected);
                res.data.oot = keep_columns(res.data.oot, res.selection->selected);
            });
        }
        emit_prepared(store, res.data, res.selection ? &*res.selection : nullptr);
        res.trained = run_stage("train", [&] { return train_stage(c, res.data.train, threads); });
        emit_training(store, res.trained, c.gbdt_grid);
        res.calibrator = run_stage(
            "calibrate", [&] { return calibrate_stage(c, res.trained.model, res.data.train, res.data.calib); });
        store.write_json(artifact::kCalibrator, to_json(res.calibrator));
        res.rating = run_stage("rate", [&] {
            return rate_stage(c, res.trained.model, res.calibrator, res.data.train, res.data.calib, threads);
        });
        store.write_json(artifact::kScale, to_json(res.rating.scale));
        store.write_csv("rating_scale.csv", [&](std::ostream& o) { write_csv(o, res.rating.scale); });
        res.validation = run_stage("validate", [&] {
            return validate_stage(c, res.trained.model, res.calibrator, res.rating.scale, res.data.oot,
                                  res.data.true_pd);
        });
        emit_validation(store, res.validation, res.data.oot);
        res.explanations = run_stage(
            "explain", [&] { return explain_stage(c, res.trained.model, res.data.train, res.data.oot, threads); });
        emit_explanations(store, res.explanations, res.data.oot);
    } catch (const StageError& e) {
        store.write_manifest("failed", e.stage(), e.cause());
        throw;
    } catch (const std::exception& e) {
        store.write_manifest("failed", "artifacts", e.what());
        throw StageError("artifacts", e.what());
    }
    store.write_manifest("ok");
    res.artifacts = store.written();
    return res;
}

}  // namespace creditrisk
