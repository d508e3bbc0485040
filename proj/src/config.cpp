#include "dkbo/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace dkbo {

namespace {

using nlohmann::json;

Box box_from_json(const json& j, const Box& fallback) {
    // Either [lo, hi] for one dimension or [[lo0, hi0], [lo1, hi1], ...].
    if (!j.is_array() || j.empty()) return fallback;
    Box box;
    if (j.front().is_array()) {
        for (const auto& pair : j) {
            box.lo.push_back(pair.at(0).get<double>());
            box.hi.push_back(pair.at(1).get<double>());
        }
    } else {
        box.lo.push_back(j.at(0).get<double>());
        box.hi.push_back(j.at(1).get<double>());
    }
    return box;
}

json box_to_json(const Box& box) {
    if (box.dim() == 1) return json::array({box.lo[0], box.hi[0]});
    json out = json::array();
    for (std::size_t k = 0; k < box.dim(); ++k) out.push_back(json::array({box.lo[k], box.hi[k]}));
    return out;
}

void parse_meta(const json& j, MetaTrainConfig& meta) {
    if (j.contains("hidden_layers"))
        meta.hidden_layers = j.at("hidden_layers").get<std::vector<std::size_t>>();
    meta.latent_dim = j.value("latent_dim", meta.latent_dim);
    if (j.contains("kernel")) {
        const std::string kind = j.at("kernel").get<std::string>();
        if (kind == "matern32")
            meta.kernel = KernelKind::Matern32;
        else if (kind == "squared_exponential")
            meta.kernel = KernelKind::SquaredExponential;
        else
            throw std::runtime_error("config: unknown kernel '" + kind + "'");
    }
    meta.iterations = j.value("iterations", meta.iterations);
    meta.batch_size = j.value("batch_size", meta.batch_size);
    meta.checkpoint_every = j.value("checkpoint_every", meta.checkpoint_every);
    meta.seed = j.value("seed", meta.seed);
    if (j.contains("optimizer")) {
        const std::string opt = j.at("optimizer").get<std::string>();
        if (opt == "adam")
            meta.optimizer = MetaOptimizer::Adam;
        else if (opt == "sgd")
            meta.optimizer = MetaOptimizer::Sgd;
        else
            throw std::runtime_error("config: unknown optimizer '" + opt + "'");
    }
    meta.rescale_labels = j.value("rescale_labels", meta.rescale_labels);
    if (j.contains("lr_schedule")) {
        meta.lr_schedule.clear();
        for (const auto& seg : j.at("lr_schedule"))
            meta.lr_schedule.push_back(LrSegment{seg.at(0).get<std::size_t>(),
                                                 seg.at(1).get<double>(), seg.at(2).get<double>()});
    }
}

void parse_acq(const json& j, AcquisitionConfig& acq) {
    if (j.contains("kind")) {
        const std::string kind = j.at("kind").get<std::string>();
        if (kind == "ei")
            acq.kind = AcquisitionKind::ExpectedImprovement;
        else if (kind == "ucb")
            acq.kind = AcquisitionKind::UpperConfidenceBound;
        else
            throw std::runtime_error("config: unknown acquisition '" + kind + "'");
    }
    acq.xi = j.value("xi", acq.xi);
    acq.beta = j.value("beta", acq.beta);
    acq.candidate_count = j.value("candidate_count", acq.candidate_count);
}

} // namespace

ExperimentConfig parse_config(const std::string& json_text) {
    const json j = json::parse(json_text);
    ExperimentConfig cfg;
    cfg.n_source_tasks = j.value("n_source_tasks", cfg.n_source_tasks);
    cfg.t_k = j.value("t_k", cfg.t_k);
    if (j.contains("target_theta")) {
        const auto& theta = j.at("target_theta");
        cfg.target_theta = PlantParams{theta.at(0).get<double>(), theta.at(1).get<double>()};
    }
    cfg.t_init = j.value("t_init", cfg.t_init);
    cfg.bo_budget = j.value("bo_budget", cfg.bo_budget);
    cfg.repeats = j.value("repeats", cfg.repeats);
    cfg.sim.t_f = j.value("t_f", cfg.sim.t_f);
    cfg.sim.h = j.value("h", cfg.sim.h);
    cfg.sim.noise_std = j.value("noise_std", cfg.sim.noise_std);
    if (j.contains("r_bounds")) cfg.r_bounds = box_from_json(j.at("r_bounds"), cfg.r_bounds);
    if (j.contains("theta_bounds"))
        cfg.theta_bounds = box_from_json(j.at("theta_bounds"), cfg.theta_bounds);
    if (j.contains("source_strategy")) {
        const std::string s = j.at("source_strategy").get<std::string>();
        if (s == "mixed")
            cfg.source_strategy = SourceStrategy::Mixed;
        else if (s == "random")
            cfg.source_strategy = SourceStrategy::PureRandom;
        else
            throw std::runtime_error("config: unknown source_strategy '" + s + "'");
    }
    cfg.source_random_points = j.value("source_random_points", cfg.source_random_points);
    cfg.master_seed = j.value("master_seed", cfg.master_seed);
    if (j.contains("meta")) parse_meta(j.at("meta"), cfg.meta);
    if (j.contains("acq")) parse_acq(j.at("acq"), cfg.acq);
    if (j.contains("baseline")) {
        const auto& b = j.at("baseline");
        cfg.baseline.fit.iterations = b.value("fit_iterations", cfg.baseline.fit.iterations);
        cfg.baseline.fit.learning_rate = b.value("fit_lr", cfg.baseline.fit.learning_rate);
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["n_source_tasks"] = cfg.n_source_tasks;
    j["t_k"] = cfg.t_k;
    j["target_theta"] = json::array({cfg.target_theta.theta1, cfg.target_theta.theta2});
    j["t_init"] = cfg.t_init;
    j["bo_budget"] = cfg.bo_budget;
    j["repeats"] = cfg.repeats;
    j["t_f"] = cfg.sim.t_f;
    j["h"] = cfg.sim.h;
    j["noise_std"] = cfg.sim.noise_std;
    j["r_bounds"] = box_to_json(cfg.r_bounds);
    j["theta_bounds"] = box_to_json(cfg.theta_bounds);
    j["source_strategy"] = cfg.source_strategy == SourceStrategy::Mixed ? "mixed" : "random";
    j["source_random_points"] = cfg.source_random_points;
    j["master_seed"] = cfg.master_seed;

    json meta;
    meta["hidden_layers"] = cfg.meta.hidden_layers;
    meta["latent_dim"] = cfg.meta.latent_dim;
    meta["kernel"] = cfg.meta.kernel == KernelKind::Matern32 ? "matern32" : "squared_exponential";
    meta["iterations"] = cfg.meta.iterations;
    meta["batch_size"] = cfg.meta.batch_size;
    json schedule = json::array();
    for (const auto& seg : cfg.meta.lr_schedule)
        schedule.push_back(json::array({seg.until_iteration, seg.beta_encoder, seg.beta_base}));
    meta["lr_schedule"] = schedule;
    meta["checkpoint_every"] = cfg.meta.checkpoint_every;
    meta["optimizer"] = cfg.meta.optimizer == MetaOptimizer::Adam ? "adam" : "sgd";
    meta["rescale_labels"] = cfg.meta.rescale_labels;
    j["meta"] = meta;

    json acq;
    acq["kind"] = cfg.acq.kind == AcquisitionKind::ExpectedImprovement ? "ei" : "ucb";
    acq["xi"] = cfg.acq.xi;
    acq["beta"] = cfg.acq.beta;
    acq["candidate_count"] = cfg.acq.candidate_count;
    j["acq"] = acq;

    json baseline;
    baseline["fit_iterations"] = cfg.baseline.fit.iterations;
    baseline["fit_lr"] = cfg.baseline.fit.learning_rate;
    j["baseline"] = baseline;
    return j.dump(2);
}

} // namespace dkbo
