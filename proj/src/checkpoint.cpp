#include "dkbo/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "dkbo/dataset.hpp"

namespace dkbo {

namespace {

constexpr const char* kHeader = "dkbo-checkpoint v1";

std::string join_reals(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i > 0) out += ' ';
        out += format_real(v[i]);
    }
    return out;
}

std::vector<double> parse_reals(const std::string& s) {
    std::vector<double> out;
    std::istringstream in(s);
    double v;
    while (in >> v) out.push_back(v);
    return out;
}

const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::runtime_error("checkpoint: missing key " + key);
    return it->second;
}

} // namespace

void write_checkpoint(const std::string& path, const Checkpoint& c) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_checkpoint: cannot open " + path);
    out << kHeader << "\n";

    out << "layer_sizes ";
    for (std::size_t i = 0; i < c.params.encoder.layer_sizes.size(); ++i) {
        if (i > 0) out << ',';
        out << c.params.encoder.layer_sizes[i];
    }
    out << "\n";
    out << "kernel " << (c.params.base.kind == KernelKind::Matern32 ? "matern32" : "squared_exponential")
        << "\n";
    out << "raw_lengthscale " << format_real(c.params.base.raw_lengthscale) << "\n";
    out << "raw_outputscale " << format_real(c.params.base.raw_outputscale) << "\n";
    out << "raw_noise " << format_real(c.params.base.raw_noise) << "\n";
    out << "constant_mean " << format_real(c.params.base.constant_mean) << "\n";
    out << "j_min " << format_real(c.scaler.j_min()) << "\n";
    out << "j_max " << format_real(c.scaler.j_max()) << "\n";
    out << "best_lml " << format_real(c.best_lml) << "\n";
    out << "final_lml " << format_real(c.final_lml) << "\n";
    out << "iterations " << c.config.iterations << "\n";
    out << "batch_size " << c.config.batch_size << "\n";
    out << "checkpoint_every " << c.config.checkpoint_every << "\n";
    out << "seed " << c.config.seed << "\n";
    out << "optimizer " << (c.config.optimizer == MetaOptimizer::Adam ? "adam" : "sgd") << "\n";
    out << "rescale_labels " << (c.config.rescale_labels ? 1 : 0) << "\n";
    out << "lr_schedule";
    for (const auto& seg : c.config.lr_schedule)
        out << ' ' << seg.until_iteration << ':' << format_real(seg.beta_encoder) << ':'
            << format_real(seg.beta_base);
    out << "\n";
    out << "encoder " << join_reals(flatten(c.params.encoder)) << "\n";
    if (!out) throw std::runtime_error("write_checkpoint: write failed for " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_checkpoint: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kHeader)
        throw std::runtime_error("read_checkpoint: bad header in " + path);

    std::map<std::string, std::string> kv;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto pos = line.find(' ');
        if (pos == std::string::npos)
            throw std::runtime_error("read_checkpoint: malformed line '" + line + "'");
        kv[line.substr(0, pos)] = line.substr(pos + 1);
    }

    Checkpoint c;
    std::vector<std::size_t> layer_sizes;
    {
        std::istringstream sizes(require(kv, "layer_sizes"));
        std::string tok;
        while (std::getline(sizes, tok, ',')) layer_sizes.push_back(std::stoul(tok));
    }
    c.params.base.kind = require(kv, "kernel") == "matern32" ? KernelKind::Matern32
                                                             : KernelKind::SquaredExponential;
    c.params.base.raw_lengthscale = std::stod(require(kv, "raw_lengthscale"));
    c.params.base.raw_outputscale = std::stod(require(kv, "raw_outputscale"));
    c.params.base.raw_noise = std::stod(require(kv, "raw_noise"));
    c.params.base.constant_mean = std::stod(require(kv, "constant_mean"));
    c.scaler = LabelScaler(std::stod(require(kv, "j_min")), std::stod(require(kv, "j_max")));
    c.best_lml = std::stod(require(kv, "best_lml"));
    c.final_lml = std::stod(require(kv, "final_lml"));
    c.config.iterations = std::stoul(require(kv, "iterations"));
    c.config.batch_size = std::stoul(require(kv, "batch_size"));
    c.config.checkpoint_every = std::stoul(require(kv, "checkpoint_every"));
    c.config.seed = std::stoull(require(kv, "seed"));
    c.config.optimizer =
        require(kv, "optimizer") == "sgd" ? MetaOptimizer::Sgd : MetaOptimizer::Adam;
    c.config.rescale_labels = require(kv, "rescale_labels") == "1";
    {
        c.config.lr_schedule.clear();
        std::istringstream sched(require(kv, "lr_schedule"));
        std::string tok;
        while (sched >> tok) {
            const auto c1 = tok.find(':');
            const auto c2 = tok.find(':', c1 + 1);
            if (c1 == std::string::npos || c2 == std::string::npos)
                throw std::runtime_error("read_checkpoint: bad schedule token '" + tok + "'");
            c.config.lr_schedule.push_back(LrSegment{std::stoul(tok.substr(0, c1)),
                                                     std::stod(tok.substr(c1 + 1, c2 - c1 - 1)),
                                                     std::stod(tok.substr(c2 + 1))});
        }
    }
    c.config.kernel = c.params.base.kind;
    if (layer_sizes.size() >= 2) {
        c.config.latent_dim = layer_sizes.back();
        c.config.hidden_layers.assign(layer_sizes.begin() + 1, layer_sizes.end() - 1);
    }
    c.params.encoder = unflatten(layer_sizes, parse_reals(require(kv, "encoder")));
    return c;
}

} // namespace dkbo
