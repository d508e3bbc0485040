#include "dkbo/bo.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "dkbo/random.hpp"

namespace dkbo {

namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014327;
constexpr double kInvSqrt2 = 0.7071067811865475;

Matrix draw_candidates(Rng& rng, const Box& bounds, std::size_t count) {
    Matrix c(count, bounds.dim());
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t k = 0; k < bounds.dim(); ++k)
            c(i, k) = rng.uniform(bounds.lo[k], bounds.hi[k]);
    return c;
}

double evaluate_with_context(const Evaluator& evaluate, const std::vector<double>& r,
                             std::size_t iteration) {
    try {
        return evaluate(r);
    } catch (const std::exception& e) {
        throw std::runtime_error("bo iteration " + std::to_string(iteration) +
                                 ": evaluator failed: " + e.what());
    }
}

void append_record(BoHistory& history, std::size_t iteration, std::vector<double> r, double j,
                   const std::optional<double>& oracle_best) {
    if (j > history.best_j) {
        history.best_j = j;
        history.best_r = r;
    }
    BoRecord rec;
    rec.iteration = iteration;
    rec.r = std::move(r);
    rec.j = j;
    rec.best_j = history.best_j;
    rec.regret = oracle_best ? *oracle_best - history.best_j
                             : std::numeric_limits<double>::quiet_NaN();
    history.records.push_back(std::move(rec));
}

BoHistory init_history(const TaskDataset& init_target) {
    BoHistory history;
    history.best_j = -std::numeric_limits<double>::infinity();
    for (const auto& obs : init_target.points) {
        if (obs.j > history.best_j) {
            history.best_j = obs.j;
            history.best_r = obs.r;
        }
    }
    return history;
}

} // namespace

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

double expected_improvement(double mean, double stddev, double best_so_far, double xi) {
    const double gain = mean - best_so_far - xi;
    if (stddev <= 0.0) return gain > 0.0 ? gain : 0.0;
    const double z = gain / stddev;
    const double ei = gain * normal_cdf(z) + stddev * normal_pdf(z);
    return ei > 0.0 ? ei : 0.0;
}

double ucb(double mean, double stddev, double beta) { return mean + std::sqrt(beta) * stddev; }

bool Box::contains(const std::vector<double>& x) const {
    if (x.size() != dim()) return false;
    for (std::size_t k = 0; k < dim(); ++k)
        if (x[k] < lo[k] || x[k] > hi[k]) return false;
    return true;
}

std::vector<double> acquisition_values(const GpPosterior& post, const AcquisitionConfig& acq,
                                       double best_so_far) {
    std::vector<double> values(post.mean.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double sd = std::sqrt(post.variance[i] > 0.0 ? post.variance[i] : 0.0);
        values[i] = acq.kind == AcquisitionKind::ExpectedImprovement
                        ? expected_improvement(post.mean[i], sd, best_so_far, acq.xi)
                        : ucb(post.mean[i], sd, acq.beta);
    }
    return values;
}

std::size_t propose_index(const GpPosterior& post, const AcquisitionConfig& acq,
                          double best_so_far) {
    if (post.mean.empty()) throw EmptyCandidates("propose_index: no candidates");
    const std::vector<double> values = acquisition_values(post, acq, best_so_far);
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

std::vector<double> propose_next(const GpPosterior& post, const Matrix& candidates,
                                 const AcquisitionConfig& acq, double best_so_far) {
    if (candidates.rows() == 0) throw EmptyCandidates("propose_next: no candidates");
    if (candidates.rows() != post.mean.size())
        throw DimensionMismatch("propose_next: posterior/candidate mismatch");
    return candidates.row(propose_index(post, acq, best_so_far));
}

std::vector<double> BoHistory::regrets() const {
    std::vector<double> out(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) out[i] = records[i].regret;
    return out;
}

BoHistory run_dkn_bo(const DknParameters& p, const LabelScaler& s, const Evaluator& evaluate,
                     const TaskDataset& init_target, std::size_t budget,
                     const AcquisitionConfig& acq, const Box& bounds,
                     std::optional<double> oracle_best, const DknBoOptions& opts) {
    if (acq.candidate_count < 2)
        throw std::invalid_argument("run_dkn_bo: candidate_count must be >= 2");

    DknParameters model = p;
    TaskDataset target = init_target;
    BoHistory history = init_history(init_target);
    Rng rng(acq.seed);

    for (std::size_t it = 1; it <= budget; ++it) {
        const Matrix candidates = draw_candidates(rng, bounds, acq.candidate_count);
        const GpPosterior post = predict(model, s, target, candidates);
        std::vector<double> r_next = propose_next(post, candidates, acq, history.best_j);
        const double j = evaluate_with_context(evaluate, r_next, it);

        target.points.push_back(Observation{r_next, j});
        append_record(history, it, std::move(r_next), j, oracle_best);

        if (opts.retrain_base && target.size() >= 2) {
            const Matrix latent = forward(model.encoder, target.inputs()).first;
            std::vector<double> y = target.labels();
            for (double& v : y) v = s.rescale(v);
            GpFitConfig fit;
            fit.iterations = opts.retrain_iterations;
            fit.learning_rate = opts.retrain_lr;
            model.base = fit_hyperparameters(latent, y, p.base, fit);
        }
    }
    return history;
}

BoHistory run_gp_bo(const Evaluator& evaluate, const TaskDataset& init_target, std::size_t budget,
                    const AcquisitionConfig& acq, const BaselineConfig& baseline, const Box& bounds,
                    std::optional<double> oracle_best) {
    if (budget > 0 && init_target.size() < 2)
        throw std::invalid_argument("run_gp_bo: need at least 2 initial points");
    if (acq.candidate_count < 2)
        throw std::invalid_argument("run_gp_bo: candidate_count must be >= 2");

    TaskDataset target = init_target;
    BoHistory history = init_history(init_target);
    Rng rng(acq.seed);

    for (std::size_t it = 1; it <= budget; ++it) {
        const KernelHyperparams fitted =
            fit_hyperparameters(target.inputs(), target.labels(), baseline.init, baseline.fit);
        const Matrix candidates = draw_candidates(rng, bounds, acq.candidate_count);
        const GpPosterior post =
            posterior(fitted, target.inputs(), target.labels(), candidates);
        std::vector<double> r_next = propose_next(post, candidates, acq, history.best_j);
        const double j = evaluate_with_context(evaluate, r_next, it);

        target.points.push_back(Observation{r_next, j});
        append_record(history, it, std::move(r_next), j, oracle_best);
    }
    return history;
}

} // namespace dkbo
