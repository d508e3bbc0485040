#include "dkbo/dkn.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "dkbo/random.hpp"

namespace dkbo {

LabelScaler::LabelScaler(double j_min, double j_max) : j_min_(j_min), j_max_(j_max) {
    if (!(j_max - j_min >= 1e-12))
        throw DegenerateScale("LabelScaler: j_max - j_min = " + std::to_string(j_max - j_min));
}

LabelScaler scaler_from_tasks(const std::vector<TaskDataset>& tasks) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& task : tasks) {
        for (const auto& obs : task.points) {
            lo = std::min(lo, obs.j);
            hi = std::max(hi, obs.j);
        }
    }
    return LabelScaler(lo, hi);
}

DeepKernelResult deep_kernel_matrix(const DknParameters& p, const Matrix& r, const Matrix& r2) {
    DeepKernelResult out;
    auto fwd = forward(p.encoder, r);
    out.latent_r = std::move(fwd.first);
    out.cache_r = std::move(fwd.second);
    auto fwd2 = forward(p.encoder, r2);
    out.latent_r2 = std::move(fwd2.first);
    out.cache_r2 = std::move(fwd2.second);
    out.k = kernel_matrix(p.base, out.latent_r, out.latent_r2);
    return out;
}

DknLossGrads dkn_loss_and_grads(const DknParameters& p, const Matrix& r_batch,
                                const std::vector<double>& j_batch_scaled) {
    auto [latent, cache] = forward(p.encoder, r_batch);
    auto [lml, grads] = lml_value_and_gradients(p.base, latent, j_batch_scaled);

    DknLossGrads out;
    out.loss = -lml;
    out.base_grads.raw_lengthscale = -grads.hyper.raw_lengthscale;
    out.base_grads.raw_outputscale = -grads.hyper.raw_outputscale;
    out.base_grads.raw_noise = -grads.hyper.raw_noise;
    out.base_grads.constant_mean = -grads.hyper.constant_mean;

    Matrix upstream = grads.inputs; // dLML/dlatent
    for (std::size_t i = 0; i < upstream.rows() * upstream.cols(); ++i)
        upstream.data()[i] = -upstream.data()[i];
    out.encoder_grads = backward(p.encoder, cache, upstream).grads;
    return out;
}

namespace {

void validate_config(const std::vector<TaskDataset>& source, const MetaTrainConfig& cfg) {
    if (source.empty()) throw std::invalid_argument("meta_train: no source tasks");
    if (cfg.batch_size < 2) throw std::invalid_argument("meta_train: batch_size must be >= 2");
    if (cfg.latent_dim == 0) throw InvalidArchitecture("meta_train: zero latent dimension");
    const std::size_t dim = source.front().input_dim();
    for (const auto& task : source) {
        if (task.points.size() < cfg.batch_size)
            throw std::invalid_argument("meta_train: task " + task.task_id +
                                        " smaller than batch_size");
        if (task.input_dim() != dim)
            throw DimensionMismatch("meta_train: inconsistent input dims across tasks");
    }
    if (cfg.lr_schedule.empty())
        throw std::invalid_argument("meta_train: empty learning-rate schedule");
    std::size_t prev = 0;
    for (const auto& seg : cfg.lr_schedule) {
        if (seg.until_iteration <= prev)
            throw std::invalid_argument("meta_train: schedule not increasing");
        if (seg.beta_encoder <= 0.0 || seg.beta_base <= 0.0)
            throw std::invalid_argument("meta_train: non-positive step size");
        prev = seg.until_iteration;
    }
    if (prev < cfg.iterations)
        throw std::invalid_argument("meta_train: schedule does not cover all iterations");
}

LrSegment segment_at(const std::vector<LrSegment>& schedule, std::size_t iteration) {
    for (const auto& seg : schedule)
        if (iteration < seg.until_iteration) return seg;
    return schedule.back();
}

} // namespace

double mean_task_lml(const DknParameters& p, const std::vector<TaskDataset>& tasks,
                     const LabelScaler& scaler) {
    double sum = 0.0;
    for (const auto& task : tasks) {
        auto [latent, cache] = forward(p.encoder, task.inputs());
        (void)cache;
        std::vector<double> y = task.labels();
        for (double& v : y) v = scaler.rescale(v);
        sum += log_marginal_likelihood(p.base, latent, y);
    }
    return sum / static_cast<double>(tasks.size());
}

MetaTrainResult meta_train(const std::vector<TaskDataset>& source, const MetaTrainConfig& cfg) {
    validate_config(source, cfg);

    LabelScaler scaler = cfg.rescale_labels ? scaler_from_tasks(source) : LabelScaler::identity();

    // Pre-rescale every task once.
    std::vector<Matrix> task_inputs;
    std::vector<std::vector<double>> task_labels;
    task_inputs.reserve(source.size());
    for (const auto& task : source) {
        task_inputs.push_back(task.inputs());
        std::vector<double> y = task.labels();
        for (double& v : y) v = scaler.rescale(v);
        task_labels.push_back(std::move(y));
    }

    std::vector<std::size_t> layer_sizes;
    layer_sizes.push_back(source.front().input_dim());
    layer_sizes.insert(layer_sizes.end(), cfg.hidden_layers.begin(), cfg.hidden_layers.end());
    layer_sizes.push_back(cfg.latent_dim);

    DknParameters params;
    params.encoder = init_params(layer_sizes, derive_seed(cfg.seed, 1));
    // Unit scales, near-floor noise: the source evaluations are noiseless and
    // a large initial noise stalls the first training segment.
    params.base = make_hyperparams(cfg.kernel, 0.3, 1.0, 1e-3, 0.0);

    MetaTrainResult result{params, scaler, {}, 0.0, 0.0, 0.0, 0};
    if (cfg.iterations == 0) {
        const double score = mean_task_lml(params, source, scaler);
        result.initial_mean_lml = result.best_mean_lml = result.final_mean_lml = score;
        return result;
    }

    Rng rng(derive_seed(cfg.seed, 2));
    AdamState adam_encoder = make_adam_state(params.encoder.parameter_count());
    AdamState adam_base = make_adam_state(4);

    const double initial_score = mean_task_lml(params, source, scaler);
    DknParameters best = params;
    double best_score = initial_score;
    result.initial_mean_lml = initial_score;
    result.loss_trace.reserve(cfg.iterations);

    std::vector<double> encoder_flat = flatten(params.encoder);
    std::vector<double> base_raw = raw_vector(params.base);

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const LrSegment seg = segment_at(cfg.lr_schedule, it);
        const std::size_t task_idx = rng.uniform_index(source.size());
        const auto rows = rng.sample_without_replacement(task_labels[task_idx].size(), cfg.batch_size);

        Matrix r_batch(rows.size(), task_inputs[task_idx].cols());
        std::vector<double> j_batch(rows.size());
        for (std::size_t b = 0; b < rows.size(); ++b) {
            for (std::size_t k = 0; k < r_batch.cols(); ++k)
                r_batch(b, k) = task_inputs[task_idx](rows[b], k);
            j_batch[b] = task_labels[task_idx][rows[b]];
        }

        DknLossGrads lg;
        try {
            lg = dkn_loss_and_grads(params, r_batch, j_batch);
        } catch (const NotPositiveDefinite&) {
            ++result.skipped_batches;
            result.loss_trace.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        result.loss_trace.push_back(lg.loss);

        const std::vector<double> encoder_grads = flatten(lg.encoder_grads);
        const std::vector<double> base_grads = to_vector(lg.base_grads);
        if (cfg.optimizer == MetaOptimizer::Adam) {
            adam_update(adam_encoder, encoder_flat, encoder_grads, seg.beta_encoder);
            adam_update(adam_base, base_raw, base_grads, seg.beta_base);
        } else {
            for (std::size_t i = 0; i < encoder_flat.size(); ++i) {
                if (!std::isfinite(encoder_grads[i]))
                    throw NonFiniteGradient("meta_train: non-finite encoder gradient");
                encoder_flat[i] -= seg.beta_encoder * encoder_grads[i];
            }
            for (std::size_t i = 0; i < base_raw.size(); ++i) {
                if (!std::isfinite(base_grads[i]))
                    throw NonFiniteGradient("meta_train: non-finite kernel gradient");
                base_raw[i] -= seg.beta_base * base_grads[i];
            }
        }
        params.encoder = unflatten(layer_sizes, encoder_flat);
        params.base = with_raw_vector(params.base, base_raw);

        if ((it + 1) % cfg.checkpoint_every == 0) {
            try {
                const double score = mean_task_lml(params, source, scaler);
                if (score > best_score) {
                    best_score = score;
                    best = params;
                }
            } catch (const NotPositiveDefinite&) {
                // Unscorable checkpoint; keep the previous best.
            }
        }
    }

    try {
        const double final_score = mean_task_lml(params, source, scaler);
        result.final_mean_lml = final_score;
        if (final_score > best_score) {
            best_score = final_score;
            best = params;
        }
    } catch (const NotPositiveDefinite&) {
        result.final_mean_lml = std::numeric_limits<double>::quiet_NaN();
    }

    if (result.skipped_batches * 100 > cfg.iterations)
        throw TrainingFailed("meta_train: " + std::to_string(result.skipped_batches) +
                             " of " + std::to_string(cfg.iterations) + " batches skipped");

    result.params = std::move(best);
    result.best_mean_lml = best_score;
    return result;
}

GpPosterior predict(const DknParameters& p, const LabelScaler& s, const TaskDataset& target,
                    const Matrix& queries) {
    Matrix latent_train;
    std::vector<double> y_scaled;
    if (target.size() > 0) {
        latent_train = forward(p.encoder, target.inputs()).first;
        y_scaled = target.labels();
        for (double& v : y_scaled) v = s.rescale(v);
    }
    const Matrix latent_query = forward(p.encoder, queries).first;

    GpPosterior post = posterior(p.base, latent_train, y_scaled, latent_query);
    for (std::size_t q = 0; q < post.mean.size(); ++q) {
        auto [mean, variance] = s.unscale(post.mean[q], post.variance[q]);
        post.mean[q] = mean;
        post.variance[q] = variance;
    }
    return post;
}

} // namespace dkbo
