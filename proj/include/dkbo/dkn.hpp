#pragma once

#include <cstdint>
#include <vector>

#include "dkbo/dataset.hpp"
#include "dkbo/gp.hpp"
#include "dkbo/kernels.hpp"
#include "dkbo/mlp.hpp"

namespace dkbo {

// Deep kernel state: the task-independent encoder weights plus the base
// kernel hyperparameters that act on the latent space.
struct DknParameters {
    MlpParameters encoder;
    KernelHyperparams base;
};

// Affine label map onto [0,1] built from the source-task extremes. Target
// labels pass through the same map and may land outside [0,1].
class LabelScaler {
public:
    LabelScaler(double j_min, double j_max); // throws DegenerateScale
    static LabelScaler identity() { return LabelScaler(0.0, 1.0); }

    double j_min() const { return j_min_; }
    double j_max() const { return j_max_; }
    double width() const { return j_max_ - j_min_; }

    double rescale(double j) const { return (j - j_min_) / width(); }
    std::pair<double, double> unscale(double mean, double variance) const {
        return {mean * width() + j_min_, variance * width() * width()};
    }

private:
    double j_min_;
    double j_max_;
};

LabelScaler scaler_from_tasks(const std::vector<TaskDataset>& tasks);

struct LrSegment {
    std::size_t until_iteration; // exclusive upper bound
    double beta_encoder;         // step size for the encoder weights
    double beta_base;            // step size for the base-kernel group
};

enum class MetaOptimizer { Adam, Sgd };

struct MetaTrainConfig {
    std::vector<std::size_t> hidden_layers{100, 100, 100, 100};
    std::size_t latent_dim = 10;
    KernelKind kernel = KernelKind::Matern32;
    std::size_t iterations = 10000;
    std::size_t batch_size = 8;
    std::vector<LrSegment> lr_schedule{{2000, 1e-3, 1e-2}, {10000, 1e-4, 1e-3}};
    std::size_t checkpoint_every = 100;
    std::uint64_t seed = 0;
    MetaOptimizer optimizer = MetaOptimizer::Adam;
    bool rescale_labels = true;
};

struct DeepKernelResult {
    Matrix k;          // n x m
    Matrix latent_r;   // encoded first inputs
    Matrix latent_r2;  // encoded second inputs
    ForwardCache cache_r;
    ForwardCache cache_r2;
};

// Base kernel applied to encoder outputs; caches kept for backprop.
DeepKernelResult deep_kernel_matrix(const DknParameters& p, const Matrix& r, const Matrix& r2);

struct DknLossGrads {
    double loss = 0.0;            // negative log-marginal likelihood of the batch
    MlpParameters encoder_grads;  // dloss/domega
    HyperGradients base_grads;    // dloss/dgamma (raw parameterization)
};

// Single-task mini-batch loss and exact gradients, chained through the
// encoder and the kernel hyperparameters. Labels must already be rescaled.
DknLossGrads dkn_loss_and_grads(const DknParameters& p, const Matrix& r_batch,
                                const std::vector<double>& j_batch_scaled);

struct MetaTrainResult {
    DknParameters params;          // best-scoring parameters
    LabelScaler scaler;
    std::vector<double> loss_trace; // per-iteration mini-batch loss (NaN where skipped)
    double initial_mean_lml = 0.0;
    double best_mean_lml = 0.0;
    double final_mean_lml = 0.0;
    std::size_t skipped_batches = 0;
};

// Algorithm: per iteration pick a source task uniformly at random, sample a
// without-replacement mini-batch, take one step on the encoder and one on the
// base-kernel group at the scheduled rates. Every checkpoint_every iterations
// the full-source mean per-task LML is evaluated and the best parameters are
// retained.
MetaTrainResult meta_train(const std::vector<TaskDataset>& source, const MetaTrainConfig& cfg);

// Mean over tasks of the full-dataset LML under the deep kernel (labels
// rescaled through the given scaler).
double mean_task_lml(const DknParameters& p, const std::vector<TaskDataset>& tasks,
                     const LabelScaler& scaler);

// Few-shot posterior over the queries, conditioned on the target data with
// omega and gamma held fixed; outputs are mapped back to J units.
GpPosterior predict(const DknParameters& p, const LabelScaler& s, const TaskDataset& target,
                    const Matrix& queries);

} // namespace dkbo
