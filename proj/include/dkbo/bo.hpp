#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "dkbo/dataset.hpp"
#include "dkbo/dkn.hpp"
#include "dkbo/gp.hpp"

namespace dkbo {

enum class AcquisitionKind { ExpectedImprovement, UpperConfidenceBound };

struct AcquisitionConfig {
    AcquisitionKind kind = AcquisitionKind::ExpectedImprovement;
    double xi = 0.01;                 // EI exploration offset
    double beta = 4.0;                // UCB weight
    std::size_t candidate_count = 512;
    std::uint64_t seed = 0;
};

double normal_pdf(double z);
double normal_cdf(double z);

// Maximization form: z = (mean - best - xi)/std,
// EI = (mean - best - xi)*Phi(z) + std*phi(z); the std = 0 limit is
// max(mean - best - xi, 0). Never negative.
double expected_improvement(double mean, double stddev, double best_so_far, double xi);

double ucb(double mean, double stddev, double beta);

// Axis-aligned box; the admissible control-parameter set.
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;
    std::size_t dim() const { return lo.size(); }
    bool contains(const std::vector<double>& x) const;
};

std::vector<double> acquisition_values(const GpPosterior& post, const AcquisitionConfig& acq,
                                       double best_so_far);

// Candidate with the largest acquisition value; ties go to the lowest index.
std::size_t propose_index(const GpPosterior& post, const AcquisitionConfig& acq,
                          double best_so_far);
std::vector<double> propose_next(const GpPosterior& post, const Matrix& candidates,
                                 const AcquisitionConfig& acq, double best_so_far);

struct BoRecord {
    std::size_t iteration; // 1-based evaluation count
    std::vector<double> r;
    double j;
    double best_j;
    double regret; // NaN when no oracle value was supplied
};

struct BoHistory {
    std::vector<BoRecord> records;
    std::vector<double> best_r;
    double best_j;

    std::vector<double> regrets() const;
};

using Evaluator = std::function<double(const std::vector<double>&)>;

struct DknBoOptions {
    // Off by default: refit the base-kernel group on the target data each
    // iteration while keeping the encoder fixed.
    bool retrain_base = false;
    std::size_t retrain_iterations = 100;
    double retrain_lr = 0.05;
};

// Few-shot BO loop: fresh uniform candidates each iteration, deep-kernel
// posterior conditioned on everything observed so far, acquisition argmax,
// evaluation, append. The meta-learned parameters are never updated (unless
// retrain_base is set, which touches only the base kernel).
BoHistory run_dkn_bo(const DknParameters& p, const LabelScaler& s, const Evaluator& evaluate,
                     const TaskDataset& init_target, std::size_t budget,
                     const AcquisitionConfig& acq, const Box& bounds,
                     std::optional<double> oracle_best = std::nullopt,
                     const DknBoOptions& opts = {});

struct BaselineConfig {
    // Raw-zero init: every scale starts at softplus(0) plus its floor, the
    // stock initialization of the toolkit GPs this baseline mirrors.
    KernelHyperparams init{KernelKind::SquaredExponential, 0.0, 0.0, 0.0, 0.0};
    GpFitConfig fit; // 200 Adam steps at 0.05, refit from `init` every iteration
};

// Classical GP-BO: every iteration refits the squared-exponential
// hyperparameters on all target data from the same fixed init, then
// proposes as above.
BoHistory run_gp_bo(const Evaluator& evaluate, const TaskDataset& init_target, std::size_t budget,
                    const AcquisitionConfig& acq, const BaselineConfig& baseline, const Box& bounds,
                    std::optional<double> oracle_best = std::nullopt);

} // namespace dkbo
