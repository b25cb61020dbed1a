#include "alf/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <random>

#include "alf/binio.hpp"
#include "alf/checkpoint.hpp"
#include "alf/config.hpp"
#include "alf/cost_model.hpp"
#include "alf/deploy.hpp"
#include "alf/factorizer.hpp"
#include "alf/log.hpp"
#include "alf/trainer.hpp"

namespace alf {

namespace {

struct CliOpts {
    std::string config_path;
    std::string out_dir;
    std::string checkpoint;
    std::string container;
    std::string dataset_kind;
    std::string data_path;
    std::int64_t seed = -1;
    std::int64_t epochs = -1;
    std::int64_t m = -1;
    double pr = -1.0;
    double lambda_rec = -1.0;
};

// Loading and flag overrides together define the run; any failure in here is
// a configuration problem (exit 3), not a runtime one.
RunConfig effective_config(const CliOpts& o) {
    RunConfig cfg;
    try {
        cfg = load_run_config(o.config_path);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config: cannot load '") + o.config_path +
                          "': " + e.what());
    }
    if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
    if (o.seed >= 0) {
        cfg.train.seed = static_cast<unsigned>(o.seed);
        cfg.dataset.seed = static_cast<unsigned>(o.seed);
    }
    if (o.epochs >= 0) cfg.train.epochs = o.epochs;
    if (o.m >= 0) cfg.train.m = o.m;
    if (o.pr >= 0.0) cfg.train.pr = o.pr;
    if (o.lambda_rec >= 0.0) cfg.train.lambda_rec = o.lambda_rec;
    if (!o.dataset_kind.empty()) cfg.dataset.kind = o.dataset_kind;
    if (!o.data_path.empty()) cfg.dataset.path = o.data_path;
    validate_run_config(cfg);
    return cfg;
}

std::string artifact_path(const RunConfig& cfg, const char* name) {
    return (std::filesystem::path(cfg.out_dir) / name).string();
}

void ensure_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());
    }
}

int run_train(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    Dataset train = load_dataset(cfg.dataset, true);
    Dataset test = load_dataset(cfg.dataset, false);

    std::mt19937 rng(cfg.train.seed);
    Model model = init_model<float>(cfg.arch, rng);
    Metrics metrics = train_loop(model, train, test, cfg.train);

    write_file(artifact_path(cfg, "metrics.csv"), to_csv(metrics));
    save_checkpoint(model, artifact_path(cfg, "model.alfckpt"));
    if (!metrics.rows.empty()) {
        std::printf("%.9f\n", metrics.rows.back().accuracy);
    }
    log_info("cli", "train: wrote metrics.csv and model.alfckpt under %s", cfg.out_dir.c_str());
    return 0;
}

Model checkpoint_for(const RunConfig& cfg, const CliOpts& o) {
    const std::string path =
        o.checkpoint.empty() ? artifact_path(cfg, "model.alfckpt") : o.checkpoint;
    return load_checkpoint(path);
}

int run_compress(const RunConfig& cfg, const CliOpts& o) {
    ensure_out_dir(cfg);
    Model model = checkpoint_for(cfg, o);
    DeployedModel dm = compact_model(model);
    save_container(dm, artifact_path(cfg, "model.alf1"));
    CostReport report = model_cost_report(model);
    write_file(artifact_path(cfg, "cost.csv"), to_csv(report));
    std::printf("%.6f\n", report.total.gain_params.value());
    log_info("cli", "compress: wrote model.alf1 and cost.csv under %s", cfg.out_dir.c_str());
    return 0;
}

int run_export(const RunConfig& cfg, const CliOpts& o) {
    ensure_out_dir(cfg);
    Model model = checkpoint_for(cfg, o);
    save_container(compact_model(model), artifact_path(cfg, "model.alf1"));
    log_info("cli", "export: wrote model.alf1 under %s", cfg.out_dir.c_str());
    return 0;
}

// Pure cost arithmetic on the architecture: the code width every factorized
// layer would keep after the schedule settles at the configured pruning rate.
int run_analyze(const RunConfig& cfg) {
    ensure_out_dir(cfg);
    std::vector<LayerCostEntry> entries;
    for (const LayerSpec& s : cfg.arch.layers) {
        if (s.kind != LayerKind::Alf) continue;
        const std::int64_t c_code = s.co;
        const std::int64_t ce = c_code - masked_target(cfg.train.pr, c_code);
        entries.push_back(layer_cost(s.id, s.ci, s.co, s.k, s.ho, s.wo, ce));
    }
    CostReport report = make_cost_report(std::move(entries));
    const std::string csv = to_csv(report);
    write_file(artifact_path(cfg, "cost.csv"), csv);
    std::fputs(csv.c_str(), stdout);
    return 0;
}

int run_eval(const RunConfig& cfg, const CliOpts& o) {
    const std::string path =
        o.container.empty() ? artifact_path(cfg, "model.alf1") : o.container;
    DeployedModel dm = load_container(path);
    Dataset test = load_dataset(cfg.dataset, false);
    std::printf("%.9f\n", evaluate(dm, test));
    return 0;
}

void add_common(CLI::App* cmd, CliOpts& o) {
    cmd->add_option("--config", o.config_path, "run config (json)")->required();
    cmd->add_option("--out-dir", o.out_dir, "artifact directory (overrides the config)");
    cmd->add_option("--seed", o.seed, "training and dataset seed override");
    cmd->add_option("--dataset", o.dataset_kind, "dataset kind override")
        ->check(CLI::IsMember({"synthetic", "cifar10"}));
    cmd->add_option("--data-path", o.data_path, "dataset path override");
    cmd->add_option("--epochs", o.epochs, "epoch count override");
    cmd->add_option("--pr", o.pr, "pruning rate override");
    cmd->add_option("--m", o.m, "mask update period override");
    cmd->add_option("--lambda-rec", o.lambda_rec, "reconstruction loss weight override");
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
    CLI::App app{"factorized-convolution compression toolkit"};
    app.require_subcommand(1);
    CliOpts o;

    CLI::App* train_cmd = app.add_subcommand("train", "train a model per the config");
    CLI::App* compress_cmd =
        app.add_subcommand("compress", "compact a checkpoint into a container plus cost report");
    CLI::App* analyze_cmd =
        app.add_subcommand("analyze", "project costs from the architecture alone");
    CLI::App* eval_cmd = app.add_subcommand("eval", "report a container's test accuracy");
    CLI::App* export_cmd = app.add_subcommand("export", "write a container from a checkpoint");
    for (CLI::App* cmd : {train_cmd, compress_cmd, analyze_cmd, eval_cmd, export_cmd}) {
        add_common(cmd, o);
    }
    compress_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint to compact");
    export_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint to export");
    eval_cmd->add_option("--container", o.container, "container to evaluate");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("alf");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        const RunConfig cfg = effective_config(o);
        if (*train_cmd) return run_train(cfg);
        if (*compress_cmd) return run_compress(cfg, o);
        if (*analyze_cmd) return run_analyze(cfg);
        if (*eval_cmd) return run_eval(cfg, o);
        return run_export(cfg, o);
    } catch (const ConfigError& e) {
        log_error("cli", "%s", e.what());
        return 3;
    } catch (const std::exception& e) {
        log_error("cli", "%s", e.what());
        return 4;
    }
}

}  // namespace alf
