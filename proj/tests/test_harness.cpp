#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dkbo/checkpoint.hpp"
#include "dkbo/config.hpp"
#include "dkbo/dataset.hpp"
#include "dkbo/experiment.hpp"
#include "dkbo/random.hpp"

using namespace dkbo;

namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / name; }

ExperimentConfig micro_config() {
    ExperimentConfig cfg;
    cfg.n_source_tasks = 2;
    cfg.t_k = 10;
    cfg.t_init = 2;
    cfg.bo_budget = 1;
    cfg.repeats = 1;
    cfg.source_random_points = 4;
    cfg.meta.hidden_layers = {8};
    cfg.meta.latent_dim = 3;
    cfg.meta.iterations = 20;
    cfg.meta.batch_size = 4;
    cfg.meta.lr_schedule = {{20, 1e-3, 1e-2}};
    cfg.meta.checkpoint_every = 10;
    cfg.baseline.fit.iterations = 20;
    cfg.acq.candidate_count = 32;
    cfg.master_seed = 99;
    return cfg;
}

} // namespace

TEST_CASE("sample_source_systems stays in the box and is reproducible") {
    const Box bounds{{1.0, 1.0}, {6.0, 6.0}};
    const auto thetas = sample_source_systems(20, bounds, 123);
    REQUIRE(thetas.size() == 20);
    for (const auto& t : thetas) {
        CHECK(t.theta1 >= 1.0);
        CHECK(t.theta1 <= 6.0);
        CHECK(t.theta2 >= 1.0);
        CHECK(t.theta2 <= 6.0);
    }
    const auto again = sample_source_systems(20, bounds, 123);
    for (std::size_t i = 0; i < 20; ++i) {
        CHECK(thetas[i].theta1 == again[i].theta1);
        CHECK(thetas[i].theta2 == again[i].theta2);
    }
    // Pairwise distinct at the rejection tolerance.
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t j = 0; j < i; ++j)
            CHECK((std::fabs(thetas[i].theta1 - thetas[j].theta1) >= 1e-9 ||
                   std::fabs(thetas[i].theta2 - thetas[j].theta2) >= 1e-9));
}

TEST_CASE("sample_source_systems with a degenerate box") {
    const auto thetas = sample_source_systems(1, Box{{2.0, 5.0}, {2.0, 5.0}}, 7);
    REQUIRE(thetas.size() == 1);
    CHECK(thetas[0].theta1 == 2.0);
    CHECK(thetas[0].theta2 == 5.0);
}

TEST_CASE("generate_source_task produces exactly t_k points") {
    SourceGenOptions opts;
    opts.collector.fit.iterations = 20;
    opts.acq.candidate_count = 64;
    const TaskDataset task =
        generate_source_task(PlantParams{2.0, 5.0}, 50, SourceStrategy::Mixed, 11, opts);
    CHECK(task.points.size() == 50);
    for (const auto& obs : task.points) {
        CHECK(obs.r[0] >= -10.0);
        CHECK(obs.r[0] <= 10.0);
    }
    // The optimum is an upper bound for steady-state measurements.
    const PlantOptimum opt = optimal_oracle(PlantParams{2.0, 5.0});
    for (const auto& obs : task.points) CHECK(obs.j <= opt.j + 1e-3);
}

TEST_CASE("pure-random source tasks match the steady-state oracle") {
    const TaskDataset task =
        generate_source_task(PlantParams{3.0, 2.0}, 25, SourceStrategy::PureRandom, 13);
    REQUIRE(task.points.size() == 25);
    for (const auto& obs : task.points)
        CHECK(std::fabs(obs.j - steady_state_oracle(obs.r[0], PlantParams{3.0, 2.0}).j) < 1e-3);
}

TEST_CASE("generate_target_init: online protocol with carried state") {
    const Box bounds{{-10.0}, {10.0}};
    const SimConfig sim;
    const auto [task, state] = generate_target_init(PlantParams{2.0, 5.0}, 5, 17, bounds, sim);
    REQUIRE(task.points.size() == 5);
    CHECK(state.t == doctest::Approx(50.0)); // five 10 s windows, no reset
    const auto [task2, state2] = generate_target_init(PlantParams{2.0, 5.0}, 5, 18, bounds, sim);
    bool any_different = false;
    for (std::size_t i = 0; i < 5; ++i)
        if (task.points[i].r != task2.points[i].r) any_different = true;
    CHECK(any_different);

    // Transients can only undershoot the optimal steady-state value materially;
    // log instead of asserting per the documented empirical bound.
    const PlantOptimum opt = optimal_oracle(PlantParams{2.0, 5.0});
    for (const auto& obs : task.points) {
        if (obs.j > opt.j + 1e-2)
            MESSAGE("target init J ", obs.j, " exceeded J* + 1e-2 at r=", obs.r[0]);
    }
}

TEST_CASE("regret_stats: nearest-rank order statistics") {
    const RegretQuantiles single = regret_stats({{0.5, 0.25}});
    CHECK(single.median == std::vector<double>{0.5, 0.25});
    CHECK(single.p05 == std::vector<double>{0.5, 0.25});
    CHECK(single.p95 == std::vector<double>{0.5, 0.25});

    const RegretQuantiles three = regret_stats({{1.0}, {2.0}, {3.0}});
    CHECK(three.median[0] == 2.0);
    CHECK(three.p05[0] == 1.0);
    CHECK(three.p95[0] == 3.0);

    std::vector<std::vector<double>> constant(100, std::vector<double>{0.7});
    const RegretQuantiles c = regret_stats(constant);
    CHECK(c.median[0] == 0.7);
    CHECK(c.p05[0] == 0.7);
    CHECK(c.p95[0] == 0.7);
}

TEST_CASE("regret_stats rejects empty or ragged input") {
    CHECK_THROWS_AS(regret_stats({}), LengthMismatch);
    CHECK_THROWS_AS(regret_stats({{1.0, 2.0}, {1.0}}), LengthMismatch);
}

TEST_CASE("dataset file round trip is exact") {
    Rng rng(8001);
    std::vector<TaskDataset> tasks;
    for (int t = 0; t < 3; ++t) {
        TaskDataset task;
        task.task_id = "task" + std::to_string(t);
        if (t != 1) task.theta = PlantParams{rng.uniform(1.0, 6.0), rng.uniform(1.0, 6.0)};
        for (int i = 0; i < 6; ++i)
            task.points.push_back(
                Observation{{rng.uniform(-10.0, 10.0)}, rng.uniform(-120.0, 10.0)});
        tasks.push_back(std::move(task));
    }
    // Values that stress the 17-significant-digit format.
    tasks[0].points[0].j = 0.1 + 0.2;
    tasks[0].points[1].j = -1.0 / 3.0;

    const auto path = temp_file("dkbo_test_dataset.txt");
    write_datasets(path.string(), tasks);
    const auto back = read_datasets(path.string());
    fs::remove(path);

    REQUIRE(back.size() == tasks.size());
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        CHECK(back[t].task_id == tasks[t].task_id);
        CHECK(back[t].theta.has_value() == tasks[t].theta.has_value());
        if (tasks[t].theta) {
            CHECK(back[t].theta->theta1 == tasks[t].theta->theta1);
            CHECK(back[t].theta->theta2 == tasks[t].theta->theta2);
        }
        REQUIRE(back[t].points.size() == tasks[t].points.size());
        for (std::size_t i = 0; i < tasks[t].points.size(); ++i) {
            CHECK(back[t].points[i].r == tasks[t].points[i].r);
            CHECK(back[t].points[i].j == tasks[t].points[i].j);
        }
    }
}

TEST_CASE("dataset reader rejects malformed files") {
    const auto path = temp_file("dkbo_test_bad_dataset.txt");
    {
        std::ofstream out(path);
        out << "not-a-header\n";
    }
    CHECK_THROWS(read_datasets(path.string()));
    fs::remove(path);
    CHECK_THROWS(read_datasets((temp_file("dkbo_does_not_exist.txt")).string()));
}

TEST_CASE("checkpoint round trip is exact") {
    Checkpoint c;
    c.params.encoder = init_params({1, 16, 8, 4}, 19);
    c.params.base = make_hyperparams(KernelKind::Matern32, 0.831, 1.77, 0.0123, -0.456);
    c.scaler = LabelScaler(-109.3341, 8.2217);
    c.config.iterations = 3000;
    c.config.lr_schedule = {{2000, 1e-3, 1e-2}, {3000, 1e-4, 1e-3}};
    c.best_lml = -12.345678901234567;
    c.final_lml = -13.875;

    const auto path = temp_file("dkbo_test_checkpoint.txt");
    write_checkpoint(path.string(), c);
    const Checkpoint back = read_checkpoint(path.string());
    fs::remove(path);

    CHECK(flatten(back.params.encoder) == flatten(c.params.encoder));
    CHECK(back.params.encoder.layer_sizes == c.params.encoder.layer_sizes);
    CHECK(raw_vector(back.params.base) == raw_vector(c.params.base));
    CHECK(back.scaler.j_min() == c.scaler.j_min());
    CHECK(back.scaler.j_max() == c.scaler.j_max());
    CHECK(back.best_lml == c.best_lml);
    CHECK(back.config.iterations == 3000);
    REQUIRE(back.config.lr_schedule.size() == 2);
    CHECK(back.config.lr_schedule[1].until_iteration == 3000);
    CHECK(back.config.lr_schedule[1].beta_base == 1e-3);
}

TEST_CASE("run_experiment: single repeat, single iteration") {
    const ExperimentConfig cfg = micro_config();
    const ExperimentResult result = run_experiment(cfg);
    REQUIRE(result.summary.dkn.median.size() == 1);
    REQUIRE(result.summary.baseline.median.size() == 1);
    CHECK(result.summary.dkn.median[0] >= -1e-9);
    CHECK(result.summary.baseline.median[0] >= -1e-9);
    REQUIRE(result.dkn_histories.size() == 1);
    CHECK(result.dkn_histories[0].records.size() == 1);
    for (const auto& rec : result.dkn_histories[0].records) {
        CHECK(rec.r[0] >= cfg.r_bounds.lo[0]);
        CHECK(rec.r[0] <= cfg.r_bounds.hi[0]);
    }
}

TEST_CASE("run_experiment writes identical summary files for one master seed") {
    const ExperimentConfig cfg = micro_config();
    const auto dir_a = temp_file("dkbo_exp_a");
    const auto dir_b = temp_file("dkbo_exp_b");
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    run_experiment(cfg, dir_a.string());
    run_experiment(cfg, dir_b.string());

    const auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    };
    const std::string a = slurp(dir_a / "summary.csv");
    const std::string b = slurp(dir_b / "summary.csv");
    CHECK(!a.empty());
    CHECK(a == b);
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("summary and history CSV shapes") {
    BoHistory h;
    h.best_j = 1.0;
    h.best_r = {0.5};
    h.records.push_back(BoRecord{1, {0.5}, 1.0, 1.0, 0.2});
    h.records.push_back(BoRecord{2, {0.7}, 0.9, 1.0, 0.2});
    const auto path = temp_file("dkbo_test_history.csv");
    write_history_csv(path.string(), h);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header == "iteration,r,J,best_J,regret");
    std::string line;
    int rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
    in.close();
    fs::remove(path);

    RegretSummary summary;
    summary.dkn = RegretQuantiles{{0.5, 0.4}, {0.1, 0.1}, {0.9, 0.8}};
    summary.baseline = RegretQuantiles{{1.5, 1.4}, {1.1, 1.1}, {1.9, 1.8}};
    const auto spath = temp_file("dkbo_test_summary.csv");
    write_summary_csv(spath.string(), summary);
    std::ifstream sin(spath);
    std::getline(sin, header);
    CHECK(header == "iteration,method,regret_median,regret_p05,regret_p95");
    rows = 0;
    while (std::getline(sin, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 4);
    sin.close();
    fs::remove(spath);
}

TEST_CASE("seed derivation is stable and collision-free across purposes") {
    CHECK(source_sampling_seed(42) == source_sampling_seed(42));
    CHECK(source_sampling_seed(42) != source_sampling_seed(43));
    CHECK(meta_training_seed(42) != source_sampling_seed(42));
    CHECK(repeat_seed(42, 0, 0) != repeat_seed(42, 0, 1));
    CHECK(repeat_seed(42, 0, 0) != repeat_seed(42, 1, 0));
}

TEST_CASE("JSON config round trip preserves the experiment settings") {
    ExperimentConfig cfg;
    cfg.n_source_tasks = 7;
    cfg.t_k = 33;
    cfg.target_theta = PlantParams{3.5, 4.5};
    cfg.bo_budget = 12;
    cfg.meta.iterations = 1234;
    cfg.meta.latent_dim = 6;
    cfg.acq.kind = AcquisitionKind::UpperConfidenceBound;
    cfg.acq.beta = 2.5;
    cfg.master_seed = 777;

    const ExperimentConfig back = parse_config(config_to_json(cfg));
    CHECK(back.n_source_tasks == 7);
    CHECK(back.t_k == 33);
    CHECK(back.target_theta.theta1 == 3.5);
    CHECK(back.target_theta.theta2 == 4.5);
    CHECK(back.bo_budget == 12);
    CHECK(back.meta.iterations == 1234);
    CHECK(back.meta.latent_dim == 6);
    CHECK(back.acq.kind == AcquisitionKind::UpperConfidenceBound);
    CHECK(back.acq.beta == 2.5);
    CHECK(back.master_seed == 777);

    // Defaults mirror the benchmark protocol.
    const ExperimentConfig defaults = parse_config("{}");
    CHECK(defaults.n_source_tasks == 20);
    CHECK(defaults.t_k == 50);
    CHECK(defaults.t_init == 5);
    CHECK(defaults.bo_budget == 50);
    CHECK(defaults.repeats == 100);
    CHECK(defaults.sim.t_f == 10.0);
    CHECK(defaults.sim.h == 0.01);
    CHECK(defaults.meta.iterations == 10000);
    CHECK(defaults.meta.batch_size == 8);
    CHECK(defaults.meta.latent_dim == 10);
    REQUIRE(defaults.meta.lr_schedule.size() == 2);
    CHECK(defaults.meta.lr_schedule[0].until_iteration == 2000);
    CHECK(defaults.meta.lr_schedule[0].beta_encoder == 1e-3);
    CHECK(defaults.meta.lr_schedule[0].beta_base == 1e-2);
    CHECK(defaults.r_bounds.lo[0] == -10.0);
    CHECK(defaults.r_bounds.hi[0] == 10.0);
}
