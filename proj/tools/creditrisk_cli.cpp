// creditrisk: command-line front end for the rating pipeline.
//
//   creditrisk run       --config cfg.json --out run/
//   creditrisk synth     --config cfg.json --out data.csv [--truth pd.csv]
//   creditrisk train     --config cfg.json --out run/
//   creditrisk calibrate --out run/ [--model ... --train-data ... --calib-data ...]
//   creditrisk rate      --out run/ [--model ... --calibrator ...]
//   creditrisk validate  --out run/ [--scale ... --data ...]
//   creditrisk explain   --out run/ [--model ... --data ... --background-data ...]
//
// Stage subcommands read the artifacts a previous stage left in --out unless
// explicit paths are given.

#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "creditrisk/pipeline.hpp"

namespace cr = creditrisk;
namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::string out = "creditrisk_out";
    unsigned threads = 1;
    std::string model, calibrator, scale, train_data, calib_data, data, background_data, schema, truth;
};

cr::PipelineConfig config_or_default(const Options& o) {
    if (!o.config.empty()) return cr::load_pipeline_config(o.config);
    cr::PipelineConfig c;
    c.gbdt_grid = cr::default_gbdt_grid();
    return c;
}

std::string or_default(const std::string& given, const fs::path& dir, const char* name) {
    return given.empty() ? (dir / name).string() : given;
}

// Prepared CSVs are read with the schema stored next to them unless one is given.
cr::Dataset load_prepared(const std::string& path, const Options& o, const char* produced_by) {
    if (!fs::exists(path))
        throw cr::ConfigError("missing upstream artifact '" + path + "'; run `" + produced_by + "` first");
    std::string schema = o.schema;
    if (schema.empty()) {
        const fs::path sidecar = fs::path(path).parent_path() / "schema.txt";
        std::ifstream in(sidecar);
        if (!in || !std::getline(in, schema))
            throw cr::ConfigError("no schema for '" + path + "': pass --schema or keep schema.txt beside it");
    }
    return cr::load_csv(path, cr::parse_schema(schema));
}

cr::GbdtModel load_model(const std::string& p) {
    return cr::gbdt_from_json(cr::read_json_artifact(p, "train"));
}

cr::Calibrator load_calibrator(const std::string& p) {
    return cr::calibrator_from_json(cr::read_json_artifact(p, "calibrate"));
}

int cmd_run(const Options& o) {
    const auto cfg = cr::load_pipeline_config(o.config);
    const auto res = cr::run_pipeline(cfg, o.out, o.threads);
    std::cout << "config hash " << res.config_hash << ", " << res.artifacts.size() << " artifacts in " << o.out
              << '\n';
    const auto& m = res.validation.metrics;
    if (m.contains("auroc_calibrated"))
        std::cout << "out-of-time AUROC " << m["auroc_calibrated"].get<double>() << ", Brier "
                  << m["brier_calibrated"].get<double>() << '\n';
    return 0;
}

int cmd_synth(const Options& o) {
    auto cfg = config_or_default(o);
    const cr::GeneratorSpec spec = cfg.synth ? *cfg.synth : cr::GeneratorSpec{};
    const auto s = cr::generate(spec);
    std::ofstream out(o.out, std::ios::binary);
    if (!out) throw cr::Error("cannot write '" + o.out + "'");
    cr::write_csv(out, s.data);
    if (!o.truth.empty()) {
        std::ofstream t(o.truth, std::ios::binary);
        t << "row,true_pd\n";
        for (std::size_t r = 0; r < s.true_pd.size(); ++r) t << r << ',' << cr::csv::format_double(s.true_pd[r]) << '\n';
    }
    std::cout << "schema: " << cr::schema_to_string(cr::schema_of(s.data)) << '\n';
    std::cout << s.data.n_rows() << " rows, " << s.data.positives() << " defaults\n";
    return 0;
}

int cmd_train(const Options& o) {
    const auto cfg = cr::load_pipeline_config(o.config);
    cr::ArtifactStore store(o.out, cfg);
    store.write_json("config.json", {{"format", "creditrisk.config/1"}, {"config", cr::to_json(cfg)}});
    auto data = cr::run_stage("prepare", [&] { return cr::prepare(cfg); });
    std::optional<cr::SelectionReport> sel;
    if (cfg.select) {
        sel = cr::run_stage("select", [&] {
            return cr::select_features(data.train.features, data.train.target, data.train.feature_names,
                                       cfg.selection, o.threads);
        });
        data.train = cr::keep_columns(data.train, sel->selected);
        data.calib = cr::keep_columns(data.calib, sel->selected);
        data.oot = cr::keep_columns(data.oot, sel->selected);
    }
    cr::emit_prepared(store, data, sel ? &*sel : nullptr);
    const auto trained = cr::run_stage("train", [&] { return cr::train_stage(cfg, data.train, o.threads); });
    cr::emit_training(store, trained, cfg.gbdt_grid);
    std::cout << "selected candidate " << trained.cv.best_index << ", " << trained.model.trees.size() << " trees\n";
    return 0;
}

int cmd_calibrate(const Options& o) {
    const auto cfg = config_or_default(o);
    const fs::path dir = o.out;
    const auto model = load_model(or_default(o.model, dir, cr::artifact::kModel));
    const auto train = load_prepared(or_default(o.train_data, dir, cr::artifact::kTrainData), o, "train");
    const auto calib = load_prepared(or_default(o.calib_data, dir, cr::artifact::kCalibData), o, "train");
    const auto cal = cr::run_stage("calibrate", [&] { return cr::calibrate_stage(cfg, model, train, calib); });
    cr::ArtifactStore store(dir, cfg);
    store.write_json(cr::artifact::kCalibrator, cr::to_json(cal));
    std::cout << "calibrator c = " << cal.c << '\n';
    return 0;
}

int cmd_rate(const Options& o) {
    const auto cfg = config_or_default(o);
    const fs::path dir = o.out;
    const auto model = load_model(or_default(o.model, dir, cr::artifact::kModel));
    const auto cal = load_calibrator(or_default(o.calibrator, dir, cr::artifact::kCalibrator));
    const auto train = load_prepared(or_default(o.train_data, dir, cr::artifact::kTrainData), o, "train");
    const auto calib = load_prepared(or_default(o.calib_data, dir, cr::artifact::kCalibData), o, "train");
    const auto res = cr::run_stage("rate", [&] { return cr::rate_stage(cfg, model, cal, train, calib, o.threads); });
    cr::ArtifactStore store(dir, cfg);
    store.write_json(cr::artifact::kScale, cr::to_json(res.scale));
    store.write_csv("rating_scale.csv", [&](std::ostream& out) { cr::write_csv(out, res.scale); });
    cr::write_csv(std::cout, res.scale);
    return 0;
}

int cmd_validate(const Options& o) {
    const auto cfg = config_or_default(o);
    const fs::path dir = o.out;
    const auto scale = cr::rating_scale_from_json(cr::read_json_artifact(or_default(o.scale, dir, cr::artifact::kScale), "rate"));
    const auto model = load_model(or_default(o.model, dir, cr::artifact::kModel));
    const auto cal = load_calibrator(or_default(o.calibrator, dir, cr::artifact::kCalibrator));
    const auto oot = load_prepared(or_default(o.data, dir, cr::artifact::kOotData), o, "train");
    std::vector<double> truth;
    if (cfg.synth) truth = cr::generate(*cfg.synth).true_pd;
    const auto v = cr::run_stage("validate", [&] { return cr::validate_stage(cfg, model, cal, scale, oot, truth); });
    cr::ArtifactStore store(dir, cfg);
    cr::emit_validation(store, v, oot);
    cr::write_csv(std::cout, v.report);
    return 0;
}

int cmd_explain(const Options& o) {
    const auto cfg = config_or_default(o);
    const fs::path dir = o.out;
    const auto model = load_model(or_default(o.model, dir, cr::artifact::kModel));
    const auto target = load_prepared(or_default(o.data, dir, cr::artifact::kOotData), o, "train");
    const auto background = load_prepared(or_default(o.background_data, dir, cr::artifact::kTrainData), o, "train");
    const auto ex = cr::run_stage("explain", [&] { return cr::explain_stage(cfg, model, background, target, o.threads); });
    cr::ArtifactStore store(dir, cfg);
    cr::emit_explanations(store, ex, target);
    std::cout << ex.shap.size() << " Shapley and " << ex.lime.size() << " LIME explanations written\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Credit-rating pipeline: boosted trees, leaf calibration, rating scale, back-testing"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", o.config, "pipeline config (JSON)");
        if (needs_config) c->required();
        sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--out", o.out, "output directory");
        return sub;
    };

    auto* run = common(app.add_subcommand("run", "full pipeline"), true);
    auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
    synth->add_option("--config", o.config, "pipeline config; its data.synth section is used");
    synth->add_option("--out", o.out, "output CSV")->required();
    synth->add_option("--truth", o.truth, "also write the latent PD per row");
    auto* train = common(app.add_subcommand("train", "prepare data, select features, tune and fit the model"), true);
    auto* calibrate = common(app.add_subcommand("calibrate", "fit the leaf-based calibrator"), false);
    auto* rate = common(app.add_subcommand("rate", "optimize the rating scale"), false);
    auto* validate = common(app.add_subcommand("validate", "back-test the scale on out-of-time data"), false);
    auto* explain = common(app.add_subcommand("explain", "Shapley and LIME explanations"), false);

    for (auto* sub : {calibrate, rate, validate, explain}) {
        sub->add_option("--model", o.model, "boosted-tree model JSON");
        sub->add_option("--schema", o.schema, "schema for the data CSVs (name:kind,...)");
    }
    for (auto* sub : {rate, validate}) sub->add_option("--calibrator", o.calibrator, "calibrator JSON");
    for (auto* sub : {calibrate, rate}) {
        sub->add_option("--train-data", o.train_data, "boosted-tree fit rows (CSV)");
        sub->add_option("--calib-data", o.calib_data, "calibrator fit rows (CSV)");
    }
    validate->add_option("--scale", o.scale, "rating scale JSON");
    validate->add_option("--data", o.data, "out-of-time rows (CSV)");
    explain->add_option("--data", o.data, "rows to explain (CSV)");
    explain->add_option("--background-data", o.background_data, "background sample source (CSV)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(o);
        if (synth->parsed()) return cmd_synth(o);
        if (train->parsed()) return cmd_train(o);
        if (calibrate->parsed()) return cmd_calibrate(o);
        if (rate->parsed()) return cmd_rate(o);
        if (validate->parsed()) return cmd_validate(o);
        if (explain->parsed()) return cmd_explain(o);
    } catch (const cr::StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const cr::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
