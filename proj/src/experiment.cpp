#include "dkbo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "dkbo/random.hpp"

namespace dkbo {

std::uint64_t source_sampling_seed(std::uint64_t master) { return derive_seed(master, 0); }
std::uint64_t meta_training_seed(std::uint64_t master) { return derive_seed(master, 1); }
std::uint64_t source_task_seed(std::uint64_t master, std::size_t task_index) {
    return derive_seed(master, 100 + task_index);
}
std::uint64_t repeat_seed(std::uint64_t master, std::size_t repeat, std::size_t purpose) {
    return derive_seed(master, 1000 + 3 * repeat + purpose);
}

std::vector<PlantParams> sample_source_systems(std::size_t n, const Box& theta_bounds,
                                               std::uint64_t seed) {
    if (n == 0) throw std::invalid_argument("sample_source_systems: n must be >= 1");
    if (theta_bounds.dim() != 2)
        throw DimensionMismatch("sample_source_systems: theta box must be 2-D");

    Rng rng(seed);
    std::vector<PlantParams> out;
    out.reserve(n);
    while (out.size() < n) {
        PlantParams candidate{rng.uniform(theta_bounds.lo[0], theta_bounds.hi[0]),
                              rng.uniform(theta_bounds.lo[1], theta_bounds.hi[1])};
        bool duplicate = false;
        for (const auto& seen : out) {
            if (std::fabs(seen.theta1 - candidate.theta1) < 1e-9 &&
                std::fabs(seen.theta2 - candidate.theta2) < 1e-9) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) out.push_back(candidate);
    }
    return out;
}

namespace {

Evaluator make_resetting_evaluator(const PlantParams& theta, const SimConfig& sim) {
    return [theta, sim](const std::vector<double>& r) {
        return evaluate_performance(PlantState{}, r.at(0), theta, sim).first;
    };
}

Evaluator make_online_evaluator(PlantState start, const PlantParams& theta, const SimConfig& sim) {
    auto state = std::make_shared<PlantState>(start);
    return [state, theta, sim](const std::vector<double>& r) {
        auto [j, next] = evaluate_performance(*state, r.at(0), theta, sim);
        *state = next;
        return j;
    };
}

} // namespace

TaskDataset generate_source_task(const PlantParams& theta, std::size_t t_k,
                                 SourceStrategy strategy, std::uint64_t seed,
                                 const SourceGenOptions& opts) {
    if (t_k == 0) throw std::invalid_argument("generate_source_task: t_k must be >= 1");

    TaskDataset task;
    task.theta = theta;

    Rng rng(derive_seed(seed, 0));
    const Evaluator evaluate = make_resetting_evaluator(theta, opts.sim);

    std::size_t random_count = t_k;
    if (strategy == SourceStrategy::Mixed) {
        random_count = std::max(opts.random_points, t_k / 5);
        random_count = std::min(random_count, t_k);
    }
    for (std::size_t i = 0; i < random_count; ++i) {
        std::vector<double> r(opts.r_bounds.dim());
        for (std::size_t k = 0; k < r.size(); ++k)
            r[k] = rng.uniform(opts.r_bounds.lo[k], opts.r_bounds.hi[k]);
        const double j = evaluate(r);
        task.points.push_back(Observation{std::move(r), j});
    }

    if (strategy == SourceStrategy::Mixed && t_k > random_count) {
        AcquisitionConfig acq = opts.acq;
        acq.seed = derive_seed(seed, 1);
        const BoHistory bo = run_gp_bo(evaluate, task, t_k - random_count, acq, opts.collector,
                                       opts.r_bounds);
        for (const auto& rec : bo.records) task.points.push_back(Observation{rec.r, rec.j});
    }
    return task;
}

std::pair<TaskDataset, PlantState> generate_target_init(const PlantParams& theta, std::size_t t,
                                                        std::uint64_t seed, const Box& r_bounds,
                                                        const SimConfig& sim) {
    if (t == 0) throw std::invalid_argument("generate_target_init: t must be >= 1");
    Rng rng(seed);
    TaskDataset task;
    task.task_id = "target";
    task.theta = theta;
    PlantState state; // origin
    for (std::size_t i = 0; i < t; ++i) {
        std::vector<double> r(r_bounds.dim());
        for (std::size_t k = 0; k < r.size(); ++k)
            r[k] = rng.uniform(r_bounds.lo[k], r_bounds.hi[k]);
        auto [j, next] = evaluate_performance(state, r.at(0), theta, sim);
        state = next;
        task.points.push_back(Observation{std::move(r), j});
    }
    return {std::move(task), state};
}

RegretQuantiles regret_stats(const std::vector<std::vector<double>>& regret_per_repeat) {
    if (regret_per_repeat.empty()) throw LengthMismatch("regret_stats: no histories");
    const std::size_t iters = regret_per_repeat.front().size();
    for (const auto& r : regret_per_repeat)
        if (r.size() != iters) throw LengthMismatch("regret_stats: unequal history lengths");

    const auto nearest_rank = [](std::vector<double>& sorted, double pct) {
        std::sort(sorted.begin(), sorted.end());
        const double n = static_cast<double>(sorted.size());
        std::size_t rank = static_cast<std::size_t>(std::ceil(pct / 100.0 * n));
        if (rank == 0) rank = 1;
        if (rank > sorted.size()) rank = sorted.size();
        return sorted[rank - 1];
    };

    RegretQuantiles q;
    q.median.resize(iters);
    q.p05.resize(iters);
    q.p95.resize(iters);
    for (std::size_t i = 0; i < iters; ++i) {
        std::vector<double> column(regret_per_repeat.size());
        for (std::size_t rep = 0; rep < regret_per_repeat.size(); ++rep)
            column[rep] = regret_per_repeat[rep][i];
        std::vector<double> tmp = column;
        q.median[i] = nearest_rank(tmp, 50.0);
        tmp = column;
        q.p05[i] = nearest_rank(tmp, 5.0);
        tmp = column;
        q.p95[i] = nearest_rank(tmp, 95.0);
    }
    return q;
}

namespace {

void validate(const ExperimentConfig& cfg) {
    if (cfg.n_source_tasks == 0 || cfg.t_k == 0 || cfg.t_init == 0 || cfg.repeats == 0)
        throw std::invalid_argument("run_experiment: counts must be >= 1");
    for (std::size_t k = 0; k < cfg.r_bounds.dim(); ++k)
        if (!(cfg.r_bounds.lo[k] < cfg.r_bounds.hi[k]))
            throw std::invalid_argument("run_experiment: r_bounds not ordered");
    for (std::size_t k = 0; k < cfg.theta_bounds.dim(); ++k)
        if (!(cfg.theta_bounds.lo[k] <= cfg.theta_bounds.hi[k]))
            throw std::invalid_argument("run_experiment: theta_bounds not ordered");
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
    validate(cfg);
    const bool flush = !out_dir.empty();
    if (flush) std::filesystem::create_directories(std::filesystem::path(out_dir) / "repeats");

    SourceGenOptions source_opts;
    source_opts.r_bounds = cfg.r_bounds;
    source_opts.sim = cfg.sim;
    source_opts.random_points = cfg.source_random_points;
    source_opts.acq = cfg.acq;

    const auto thetas =
        sample_source_systems(cfg.n_source_tasks, cfg.theta_bounds, source_sampling_seed(cfg.master_seed));

    std::vector<TaskDataset> source;
    source.reserve(thetas.size());
    for (std::size_t k = 0; k < thetas.size(); ++k) {
        TaskDataset task = generate_source_task(thetas[k], cfg.t_k, cfg.source_strategy,
                                                source_task_seed(cfg.master_seed, k), source_opts);
        task.task_id = "src" + std::to_string(k);
        source.push_back(std::move(task));
    }

    MetaTrainConfig meta = cfg.meta;
    meta.seed = meta_training_seed(cfg.master_seed);
    MetaTrainResult trained = meta_train(source, meta);

    const PlantOptimum oracle =
        optimal_oracle(cfg.target_theta, cfg.r_bounds.lo[0], cfg.r_bounds.hi[0]);

    ExperimentResult result;
    result.model = trained.params;
    result.scaler = trained.scaler;
    result.source = std::move(source);
    result.oracle_best = oracle.j;
    result.initial_mean_lml = trained.initial_mean_lml;
    result.best_mean_lml = trained.best_mean_lml;
    result.final_mean_lml = trained.final_mean_lml;

    std::vector<std::vector<double>> dkn_regrets;
    std::vector<std::vector<double>> gp_regrets;
    for (std::size_t rep = 0; rep < cfg.repeats; ++rep) {
        auto [init_data, end_state] =
            generate_target_init(cfg.target_theta, cfg.t_init, repeat_seed(cfg.master_seed, rep, 0),
                                 cfg.r_bounds, cfg.sim);

        AcquisitionConfig acq_dkn = cfg.acq;
        acq_dkn.seed = repeat_seed(cfg.master_seed, rep, 1);
        AcquisitionConfig acq_gp = cfg.acq;
        acq_gp.seed = repeat_seed(cfg.master_seed, rep, 2);

        BoHistory dkn_history =
            run_dkn_bo(result.model, result.scaler,
                       make_online_evaluator(end_state, cfg.target_theta, cfg.sim), init_data,
                       cfg.bo_budget, acq_dkn, cfg.r_bounds, oracle.j);
        BoHistory gp_history =
            run_gp_bo(make_online_evaluator(end_state, cfg.target_theta, cfg.sim), init_data,
                      cfg.bo_budget, acq_gp, cfg.baseline, cfg.r_bounds, oracle.j);

        if (flush) {
            const auto dir = std::filesystem::path(out_dir) / "repeats";
            write_history_csv((dir / ("dkn_" + std::to_string(rep) + ".csv")).string(), dkn_history);
            write_history_csv((dir / ("gp_" + std::to_string(rep) + ".csv")).string(), gp_history);
        }

        dkn_regrets.push_back(dkn_history.regrets());
        gp_regrets.push_back(gp_history.regrets());
        result.dkn_histories.push_back(std::move(dkn_history));
        result.baseline_histories.push_back(std::move(gp_history));
    }

    result.summary.dkn = regret_stats(dkn_regrets);
    result.summary.baseline = regret_stats(gp_regrets);
    if (flush)
        write_summary_csv((std::filesystem::path(out_dir) / "summary.csv").string(), result.summary);
    return result;
}

void write_history_csv(const std::string& path, const BoHistory& history) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_history_csv: cannot open " + path);
    const std::size_t dim = history.records.empty() ? 1 : history.records.front().r.size();
    out << "iteration";
    if (dim == 1) {
        out << ",r";
    } else {
        for (std::size_t k = 0; k < dim; ++k) out << ",r" << k;
    }
    out << ",J,best_J,regret\n";
    for (const auto& rec : history.records) {
        out << rec.iteration;
        for (double v : rec.r) out << ',' << format_real(v);
        out << ',' << format_real(rec.j) << ',' << format_real(rec.best_j) << ',';
        if (std::isfinite(rec.regret)) out << format_real(rec.regret);
        out << "\n";
    }
}

void write_summary_csv(const std::string& path, const RegretSummary& summary) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_summary_csv: cannot open " + path);
    out << "iteration,method,regret_median,regret_p05,regret_p95\n";
    const auto emit = [&](const char* method, const RegretQuantiles& q) {
        for (std::size_t i = 0; i < q.median.size(); ++i) {
            out << (i + 1) << ',' << method << ',' << format_real(q.median[i]) << ','
                << format_real(q.p05[i]) << ',' << format_real(q.p95[i]) << "\n";
        }
    };
    emit("dkn-bo", summary.dkn);
    emit("gp-bo", summary.baseline);
}

void write_posterior_csv(const std::string& path, const Matrix& queries, const GpPosterior& post) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_posterior_csv: cannot open " + path);
    const std::size_t dim = queries.cols();
    if (dim == 1) {
        out << "r";
    } else {
        out << "r0";
        for (std::size_t k = 1; k < dim; ++k) out << ",r" << k;
    }
    out << ",mean,variance\n";
    for (std::size_t i = 0; i < queries.rows(); ++i) {
        for (std::size_t k = 0; k < dim; ++k) {
            if (k > 0) out << ',';
            out << format_real(queries(i, k));
        }
        out << ',' << format_real(post.mean[i]) << ',' << format_real(post.variance[i]) << "\n";
    }
}

} // namespace dkbo
