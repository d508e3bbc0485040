#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dkbo/bo.hpp"
#include "dkbo/checkpoint.hpp"
#include "dkbo/config.hpp"
#include "dkbo/dataset.hpp"
#include "dkbo/dkn.hpp"
#include "dkbo/experiment.hpp"
#include "dkbo/selftest.hpp"

namespace {

namespace fs = std::filesystem;
using namespace dkbo;

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = "out";
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config mirroring the experiment settings");
    cmd->add_option("--seed", args.seed, "master seed override");
    cmd->add_option("--out", args.out_dir, "output directory");
}

ExperimentConfig resolve_config(const CommonArgs& args) {
    ExperimentConfig cfg =
        args.config_path.empty() ? ExperimentConfig{} : load_config(args.config_path);
    if (args.seed) cfg.master_seed = *args.seed;
    return cfg;
}

fs::path ensure_out(const CommonArgs& args) {
    fs::path dir(args.out_dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<TaskDataset> generate_source(const ExperimentConfig& cfg) {
    SourceGenOptions opts;
    opts.r_bounds = cfg.r_bounds;
    opts.sim = cfg.sim;
    opts.random_points = cfg.source_random_points;
    opts.acq = cfg.acq;

    const auto thetas = sample_source_systems(cfg.n_source_tasks, cfg.theta_bounds,
                                              source_sampling_seed(cfg.master_seed));
    std::vector<TaskDataset> tasks;
    for (std::size_t k = 0; k < thetas.size(); ++k) {
        TaskDataset task = generate_source_task(thetas[k], cfg.t_k, cfg.source_strategy,
                                                source_task_seed(cfg.master_seed, k), opts);
        task.task_id = "src" + std::to_string(k);
        tasks.push_back(std::move(task));
    }
    return tasks;
}

Checkpoint train_from_source(const std::vector<TaskDataset>& source, const ExperimentConfig& cfg) {
    MetaTrainConfig meta = cfg.meta;
    meta.seed = meta_training_seed(cfg.master_seed);
    const MetaTrainResult trained = meta_train(source, meta);
    Checkpoint ckpt;
    ckpt.params = trained.params;
    ckpt.scaler = trained.scaler;
    ckpt.config = meta;
    ckpt.best_lml = trained.best_mean_lml;
    ckpt.final_lml = trained.final_mean_lml;
    std::cout << "meta-train: initial mean LML " << trained.initial_mean_lml << ", best "
              << trained.best_mean_lml << ", final " << trained.final_mean_lml << " ("
              << trained.skipped_batches << " skipped batches)\n";
    return ckpt;
}

Matrix grid_queries(const Box& bounds, std::size_t count) {
    Matrix queries(count, 1);
    for (std::size_t i = 0; i < count; ++i)
        queries(i, 0) =
            bounds.lo[0] + (bounds.hi[0] - bounds.lo[0]) * static_cast<double>(i) /
                               static_cast<double>(count - 1);
    return queries;
}

int cmd_gen_source(const CommonArgs& args) {
    const ExperimentConfig cfg = resolve_config(args);
    const auto out = ensure_out(args);
    const auto tasks = generate_source(cfg);
    const auto path = (out / "source.txt").string();
    write_datasets(path, tasks);
    std::cout << "wrote " << tasks.size() << " source tasks to " << path << "\n";
    return 0;
}

int cmd_train(const CommonArgs& args, const std::string& source_path) {
    const ExperimentConfig cfg = resolve_config(args);
    const auto out = ensure_out(args);
    const auto source = read_datasets(source_path);
    const Checkpoint ckpt = train_from_source(source, cfg);
    const auto path = (out / "checkpoint.txt").string();
    write_checkpoint(path, ckpt);
    std::cout << "wrote checkpoint to " << path << "\n";
    return 0;
}

int cmd_predict(const CommonArgs& args, const std::string& checkpoint_path,
                const std::string& target_path, std::size_t grid_size) {
    const ExperimentConfig cfg = resolve_config(args);
    const auto out = ensure_out(args);
    const Checkpoint ckpt = read_checkpoint(checkpoint_path);

    TaskDataset target;
    if (!target_path.empty()) {
        const auto tasks = read_datasets(target_path);
        if (tasks.empty()) throw std::runtime_error("predict: no task in " + target_path);
        target = tasks.front();
    }
    const Matrix queries = grid_queries(cfg.r_bounds, grid_size);
    const GpPosterior post = predict(ckpt.params, ckpt.scaler, target, queries);
    const auto path = (out / "posterior.csv").string();
    write_posterior_csv(path, queries, post);
    std::cout << "wrote posterior over " << grid_size << " query points to " << path << "\n";
    return 0;
}

int cmd_run_bo(const CommonArgs& args, const std::string& checkpoint_path, bool retrain_base) {
    const ExperimentConfig cfg = resolve_config(args);
    const auto out = ensure_out(args);
    const Checkpoint ckpt = read_checkpoint(checkpoint_path);

    auto [init_data, state] = generate_target_init(
        cfg.target_theta, cfg.t_init, repeat_seed(cfg.master_seed, 0, 0), cfg.r_bounds, cfg.sim);
    write_datasets((out / "target_init.txt").string(), {init_data});

    auto state_ptr = std::make_shared<PlantState>(state);
    const PlantParams theta = cfg.target_theta;
    const SimConfig sim = cfg.sim;
    Evaluator evaluate = [state_ptr, theta, sim](const std::vector<double>& r) {
        auto [j, next] = evaluate_performance(*state_ptr, r.at(0), theta, sim);
        *state_ptr = next;
        return j;
    };

    AcquisitionConfig acq = cfg.acq;
    acq.seed = repeat_seed(cfg.master_seed, 0, 1);
    const PlantOptimum oracle = optimal_oracle(theta, cfg.r_bounds.lo[0], cfg.r_bounds.hi[0]);
    DknBoOptions opts;
    opts.retrain_base = retrain_base;
    const BoHistory history = run_dkn_bo(ckpt.params, ckpt.scaler, evaluate, init_data,
                                         cfg.bo_budget, acq, cfg.r_bounds, oracle.j, opts);
    const auto path = (out / "history.csv").string();
    write_history_csv(path, history);
    std::cout << "DKN-BO best J " << history.best_j << " at r " << history.best_r.at(0)
              << " (oracle J* " << oracle.j << "); history in " << path << "\n";
    return 0;
}

int cmd_run_baseline(const CommonArgs& args) {
    const ExperimentConfig cfg = resolve_config(args);
    const auto out = ensure_out(args);

    auto [init_data, state] = generate_target_init(
        cfg.target_theta, cfg.t_init, repeat_seed(cfg.master_seed, 0, 0), cfg.r_bounds, cfg.sim);

    auto state_ptr = std::make_shared<PlantState>(state);
    const PlantParams theta = cfg.target_theta;
    const SimConfig sim = cfg.sim;
    Evaluator evaluate = [state_ptr, theta, sim](const std::vector<double>& r) {
        auto [j, next] = evaluate_performance(*state_ptr, r.at(0), theta, sim);
        *state_ptr = next;
        return j;
    };

    AcquisitionConfig acq = cfg.acq;
    acq.seed = repeat_seed(cfg.master_seed, 0, 2);
    const PlantOptimum oracle = optimal_oracle(theta, cfg.r_bounds.lo[0], cfg.r_bounds.hi[0]);
    const BoHistory history =
        run_gp_bo(evaluate, init_data, cfg.bo_budget, acq, cfg.baseline, cfg.r_bounds, oracle.j);
    const auto path = (out / "baseline_history.csv").string();
    write_history_csv(path, history);
    std::cout << "GP-BO best J " << history.best_j << " at r " << history.best_r.at(0)
              << " (oracle J* " << oracle.j << "); history in " << path << "\n";
    return 0;
}

int cmd_experiment(const CommonArgs& args, bool desk_scale) {
    ExperimentConfig cfg = resolve_config(args);
    if (desk_scale) {
        cfg.repeats = 20;
        cfg.bo_budget = 10;
        cfg.meta.iterations = 3000;
    }
    const auto out = ensure_out(args);

    const auto start = std::chrono::steady_clock::now();
    const ExperimentResult result = run_experiment(cfg, out.string());
    const auto elapsed =
        std::chrono::duration_cast<std::chrono::seconds>(std::chrono::steady_clock::now() - start);

    write_datasets((out / "source.txt").string(), result.source);
    Checkpoint ckpt;
    ckpt.params = result.model;
    ckpt.scaler = result.scaler;
    ckpt.config = cfg.meta;
    ckpt.config.seed = meta_training_seed(cfg.master_seed);
    ckpt.best_lml = result.best_mean_lml;
    ckpt.final_lml = result.final_mean_lml;
    write_checkpoint((out / "checkpoint.txt").string(), ckpt);
    std::cout << "meta-train mean LML: initial " << result.initial_mean_lml << ", best "
              << result.best_mean_lml << ", final " << result.final_mean_lml << "\n";

    const std::size_t at = std::min<std::size_t>(10, cfg.bo_budget);
    if (at >= 1) {
        std::cout << "median regret at iteration " << at << ": DKN-BO "
                  << result.summary.dkn.median[at - 1] << ", GP-BO "
                  << result.summary.baseline.median[at - 1] << "\n";
    }
    std::cout << "experiment finished in " << elapsed.count() << " s; summary in "
              << (out / "summary.csv").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Meta-learned Bayesian optimization with deep kernel networks "
                 "for closed-loop performance tuning"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, predict_args, bo_args, baseline_args, experiment_args;
    std::string source_path, checkpoint_path, target_path;
    std::size_t grid_size = 200;
    bool retrain_base = false;
    bool desk_scale = false;

    auto* gen = app.add_subcommand("gen-source", "Generate the source-task dataset file");
    add_common(gen, gen_args);

    auto* train = app.add_subcommand("train", "Meta-train a deep kernel network on a source file");
    add_common(train, train_args);
    train->add_option("--source", source_path, "source dataset file")->required();

    auto* predict = app.add_subcommand("predict", "Posterior mean/variance over a query grid");
    add_common(predict, predict_args);
    predict->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    predict->add_option("--target", target_path, "target dataset file (optional)");
    predict->add_option("--grid", grid_size, "number of grid points")
        ->check(CLI::Range(std::size_t{2}, std::size_t{1000000}));

    auto* runbo = app.add_subcommand("run-bo", "Run the DKN-BO loop on the benchmark target");
    add_common(runbo, bo_args);
    runbo->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
    runbo->add_flag("--retrain-base", retrain_base,
                    "refit the base kernel on target data each iteration (encoder stays fixed)");

    auto* baseline = app.add_subcommand("run-baseline", "Run the classical GP-BO baseline");
    add_common(baseline, baseline_args);

    auto* experiment =
        app.add_subcommand("experiment", "Full paired regret experiment (summary CSV)");
    add_common(experiment, experiment_args);
    experiment->add_flag("--desk", desk_scale,
                         "reduced scale: 20 repeats, 10 BO iterations, 3000 training iterations");

    auto* selftest = app.add_subcommand("selftest", "Run the library invariant suites");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_source(gen_args);
        if (train->parsed()) return cmd_train(train_args, source_path);
        if (predict->parsed()) return cmd_predict(predict_args, checkpoint_path, target_path, grid_size);
        if (runbo->parsed()) return cmd_run_bo(bo_args, checkpoint_path, retrain_base);
        if (baseline->parsed()) return cmd_run_baseline(baseline_args);
        if (experiment->parsed()) return cmd_experiment(experiment_args, desk_scale);
        if (selftest->parsed()) return run_selftest(std::cout) == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
