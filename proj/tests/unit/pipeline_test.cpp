#include <cstdio>
#include <cstdlib>
#include <sstream>

#include <gtest/gtest.h>

#include "creditrisk/pipeline.hpp"
#include "test_util.hpp"

namespace cr = creditrisk;
using nlohmann::json;

namespace {

json small_config() {
    return json::parse(R"({
      "data": { "synth": { "n_rows": 6000, "n_informative": 5, "n_noise": 5, "n_categorical": 2,
                           "intercept": -3.5, "seed": 9 } },
      "split": { "oot_year": 2017, "test_fraction": 0.25, "seed": 3 },
      "encoding": { "categorical": "james_stein" },
      "selection": { "n_final": 8, "tree_count": 10 },
      "gbdt": { "base": { "min_samples_leaf": 20, "seed": 7 },
                "grid": { "n_trees": [15, 30], "max_leaves": [5] }, "beta": 1.0 },
      "calibration": { "c_grid": [0.1, 1, 10] },
      "rating": { "classes": 5, "population": 20, "generations": 40, "seed": 11 },
      "validation": { "alpha": 0.95 },
      "explain": { "instances": 4, "background": 16, "lime_instances": 2, "seed": 23 }
    })");
}

int run_cli(const std::string& args, std::string* output = nullptr) {
    const std::string cmd = std::string(CREDITRISK_CLI) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return -1;
    std::string out;
    char buf[512];
    while (std::fgets(buf, sizeof buf, pipe)) out += buf;
    const int status = pclose(pipe);
    if (output) *output = out;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(PipelineConfig, MissingOotYearIsAConfigError) {
    auto j = small_config();
    j["split"].erase("oot_year");
    EXPECT_THROW(cr::parse_pipeline_config(j), cr::ConfigError);
}

TEST(PipelineConfig, UnknownKeysAreRejectedByName) {
    auto j = small_config();
    j["gbdt"]["learning_rat"] = 0.1;
    try {
        cr::parse_pipeline_config(j);
        FAIL() << "expected ConfigError";
    } catch (const cr::ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("gbdt.learning_rat"), std::string::npos);
    }
}

TEST(PipelineConfig, DataNeedsExactlyOneSource) {
    auto j = small_config();
    j["data"]["csv"] = "x.csv";
    EXPECT_THROW(cr::parse_pipeline_config(j), cr::ConfigError);
}

TEST(PipelineConfig, RoundTripKeepsTheHash) {
    const auto c = cr::parse_pipeline_config(small_config());
    const auto again = cr::parse_pipeline_config(cr::to_json(c));
    EXPECT_EQ(cr::config_hash(c), cr::config_hash(again));
    auto j = small_config();
    j["rating"]["seed"] = 12;
    EXPECT_NE(cr::config_hash(cr::parse_pipeline_config(j)), cr::config_hash(c));
    // The echoed candidate list cannot be mixed with a grid.
    auto mixed = cr::to_json(c);
    mixed["gbdt"]["grid"] = {{"n_trees", {5}}};
    EXPECT_THROW(cr::parse_pipeline_config(mixed), cr::ConfigError);
}

TEST(LeakageGuard, OverlappingRowIdsThrow) {
    const auto c = cr::parse_pipeline_config(small_config());
    const auto p = cr::prepare(c);
    EXPECT_NO_THROW(cr::assert_disjoint(p.train, p.calib, "train/calib"));
    EXPECT_NO_THROW(cr::assert_disjoint(p.train, p.oot, "train/oot"));
    auto leaked = p.calib;
    leaked.row_id[0] = p.train.row_id[5];
    EXPECT_THROW(cr::assert_disjoint(p.train, leaked, "train/calib"), cr::Error);
}

TEST(LeakageGuard, JamesSteinStatisticsIgnoreHeldOutTargets) {
    const auto c = cr::parse_pipeline_config(small_config());
    cr::Dataset raw = cr::generate(*c.synth).data;
    const auto oot = cr::split_out_of_time(raw, 2017);
    const auto dev = cr::stratified_split(oot.first, 0.25, 3);
    auto encode = [&](bool flip) {
        cr::Dataset fit = dev.first, calib = dev.second, test = oot.second;
        if (flip) {
            for (int& y : calib.target) y = 1 - y;
            for (int& y : test.target) y = 1 - y;
        }
        cr::encode_categoricals("james_stein", fit, {&calib, &test});
        return std::make_tuple(fit.features.data(), calib.features.data(), test.features.data());
    };
    EXPECT_EQ(encode(false), encode(true));
}

TEST(Pipeline, ExplainCapNamesTheFix) {
    auto j = small_config();
    j["selection"]["enabled"] = false;
    j["explain"]["max_features"] = 8;
    const auto c = cr::parse_pipeline_config(j);
    testutil::TempDir dir("explain_cap");
    try {
        cr::run_pipeline(c, dir.path());
        FAIL() << "expected StageError";
    } catch (const cr::StageError& e) {
        EXPECT_EQ(e.stage(), "explain");
        EXPECT_NE(e.cause().find("selection.n_final"), std::string::npos);
    }
    const auto manifest = json::parse(testutil::slurp(dir / "manifest.json"));
    EXPECT_EQ(manifest["status"], "failed");
    EXPECT_EQ(manifest["failed_stage"], "explain");
}

TEST(Pipeline, RepeatedRunsWriteIdenticalArtifacts) {
    const auto c = cr::parse_pipeline_config(small_config());
    testutil::TempDir a("det_a"), b("det_b");
    const auto ra = cr::run_pipeline(c, a.path(), 1);
    const auto rb = cr::run_pipeline(c, b.path(), 3);
    ASSERT_EQ(ra.artifacts, rb.artifacts);
    for (const auto& name : ra.artifacts) EXPECT_EQ(testutil::slurp(a / name), testutil::slurp(b / name)) << name;
    EXPECT_EQ(testutil::slurp(a / "manifest.json"), testutil::slurp(b / "manifest.json"));
}

TEST(Pipeline, ArtifactsCarryProvenance) {
    const auto c = cr::parse_pipeline_config(small_config());
    testutil::TempDir dir("provenance");
    const auto res = cr::run_pipeline(c, dir.path());
    for (const auto& name : res.artifacts) {
        const auto text = testutil::slurp(dir / name);
        if (name.ends_with(".json")) {
            EXPECT_EQ(json::parse(text)["provenance"]["config_hash"], res.config_hash) << name;
        } else if (name.ends_with(".csv")) {
            EXPECT_EQ(text.rfind("# config_hash=" + res.config_hash, 0), 0u) << name;
        }
    }
    EXPECT_NO_THROW(res.rating.scale.check());
    EXPECT_LE(res.trained.model.n_features, 8u);
}

#ifdef CREDITRISK_CLI

TEST(Cli, ConfigErrorsExitWithTwo) {
    testutil::TempDir dir("cli_cfg");
    auto j = small_config();
    j["split"].erase("oot_year");
    testutil::spit(dir / "bad.json", j.dump());
    std::string out;
    EXPECT_EQ(run_cli("run --config " + (dir / "bad.json").string() + " --out " + (dir / "run").string(), &out), 2);
    EXPECT_NE(out.find("split.oot_year"), std::string::npos);
}

TEST(Cli, MissingUpstreamArtifactNamesTheStage) {
    testutil::TempDir dir("cli_missing");
    std::string out;
    EXPECT_NE(run_cli("rate --out " + dir.path().string(), &out), 0);
    EXPECT_NE(out.find("run `train` first"), std::string::npos);
}

TEST(Cli, SynthOutputLoadsWithThePrintedSchema) {
    testutil::TempDir dir("cli_synth");
    testutil::spit(dir / "cfg.json", small_config().dump());
    std::string out;
    ASSERT_EQ(run_cli("synth --config " + (dir / "cfg.json").string() + " --out " + (dir / "d.csv").string(), &out), 0);
    const auto pos = out.find("schema: ");
    ASSERT_NE(pos, std::string::npos);
    const std::string schema = out.substr(pos + 8, out.find('\n', pos) - pos - 8);
    const auto ds = cr::load_csv((dir / "d.csv").string(), cr::parse_schema(schema));
    EXPECT_EQ(ds.n_rows(), 6000u);
}

TEST(Cli, StageSubcommandsReproduceTheFullRun) {
    testutil::TempDir dir("cli_stages");
    const auto cfg = (dir / "cfg.json").string();
    testutil::spit(dir / "cfg.json", small_config().dump());
    const auto full = (dir / "full").string(), staged = (dir / "staged").string();
    ASSERT_EQ(run_cli("run --config " + cfg + " --out " + full), 0);
    for (const char* sub : {"train", "calibrate", "rate", "validate", "explain"})
        ASSERT_EQ(run_cli(std::string(sub) + " --config " + cfg + " --out " + staged), 0) << sub;
    for (const char* name : {"gbdt_model.json", "calibrator.json", "rating_scale.json", "validation.json"})
        EXPECT_EQ(testutil::slurp(testutil::fs::path(full) / name), testutil::slurp(testutil::fs::path(staged) / name)) << name;
}

#endif
