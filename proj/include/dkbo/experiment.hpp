#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dkbo/bo.hpp"
#include "dkbo/dataset.hpp"
#include "dkbo/dkn.hpp"
#include "dkbo/plant.hpp"

namespace dkbo {

enum class SourceStrategy { Mixed, PureRandom };

struct SourceGenOptions {
    Box r_bounds{{-10.0}, {10.0}};
    SimConfig sim;
    std::size_t random_points = 10; // Mixed: this many uniform draws, then GP-BO
    // Source tasks were solved offline, so the collector starts from a
    // low-noise init and concentrates near each task optimum.
    BaselineConfig collector{make_hyperparams(KernelKind::SquaredExponential, 1.0, 1.0, 0.01, 0.0),
                             {}};
    AcquisitionConfig acq;
};

// Defaults follow the benchmark protocol: 20 source systems, 50 evaluations
// per source task, a [2,5] target, 5 target init points, 100 repeats,
// 10 s settling windows at a 0.01 s step.
struct ExperimentConfig {
    std::size_t n_source_tasks = 20;
    std::size_t t_k = 50;
    PlantParams target_theta{2.0, 5.0};
    std::size_t t_init = 5;
    std::size_t bo_budget = 50;
    std::size_t repeats = 100;
    SimConfig sim;
    Box r_bounds{{-10.0}, {10.0}};
    Box theta_bounds{{1.0, 1.0}, {6.0, 6.0}};
    SourceStrategy source_strategy = SourceStrategy::Mixed;
    std::size_t source_random_points = 10;
    MetaTrainConfig meta;
    AcquisitionConfig acq;
    BaselineConfig baseline;
    std::uint64_t master_seed = 0;
};

// Unique draws (1e-9 rejection tolerance) from the uniform box.
std::vector<PlantParams> sample_source_systems(std::size_t n, const Box& theta_bounds,
                                               std::uint64_t seed);

// One source optimization trace; every evaluation restarts the plant at the
// origin. Mixed strategy: max(random_points, t_k/5) uniform draws followed by
// GP-BO for the remaining budget.
TaskDataset generate_source_task(const PlantParams& theta, std::size_t t_k,
                                 SourceStrategy strategy, std::uint64_t seed,
                                 const SourceGenOptions& opts = {});

// t uniform r draws evaluated sequentially from the origin WITHOUT resets;
// the carried-over state continues into the BO phase.
std::pair<TaskDataset, PlantState> generate_target_init(const PlantParams& theta, std::size_t t,
                                                        std::uint64_t seed, const Box& r_bounds,
                                                        const SimConfig& sim);

struct RegretQuantiles {
    std::vector<double> median;
    std::vector<double> p05;
    std::vector<double> p95;
};

// Nearest-rank per-iteration median and 5th/95th percentiles.
RegretQuantiles regret_stats(const std::vector<std::vector<double>>& regret_per_repeat);

struct RegretSummary {
    RegretQuantiles dkn;
    RegretQuantiles baseline;
};

struct ExperimentResult {
    RegretSummary summary;
    std::vector<BoHistory> dkn_histories;
    std::vector<BoHistory> baseline_histories;
    DknParameters model;
    LabelScaler scaler = LabelScaler::identity();
    std::vector<TaskDataset> source;
    double oracle_best = 0.0;
    double initial_mean_lml = 0.0;
    double best_mean_lml = 0.0;
    double final_mean_lml = 0.0;
};

// Full pipeline: sample systems, generate source data, meta-train once, then
// paired DKN-BO / GP-BO repeats on fresh target inits. When out_dir is given,
// per-repeat histories are flushed as they complete.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir = "");

// Per-component sub-seeds derived from the master seed.
std::uint64_t source_sampling_seed(std::uint64_t master);
std::uint64_t source_task_seed(std::uint64_t master, std::size_t task_index);
std::uint64_t meta_training_seed(std::uint64_t master);
std::uint64_t repeat_seed(std::uint64_t master, std::size_t repeat, std::size_t purpose);

// CSV emission (all reals at 17 significant digits).
void write_history_csv(const std::string& path, const BoHistory& history);
void write_summary_csv(const std::string& path, const RegretSummary& summary);
void write_posterior_csv(const std::string& path, const Matrix& queries, const GpPosterior& post);

} // namespace dkbo
