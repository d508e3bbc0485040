#pragma once

#include <string>

#include "dkbo/dkn.hpp"

namespace dkbo {

struct Checkpoint {
    DknParameters params;
    LabelScaler scaler = LabelScaler::identity();
    MetaTrainConfig config;
    double best_lml = 0.0;
    double final_lml = 0.0;
};

// Self-describing key/value text file. The encoder weights are stored as one
// flat vector in the documented flatten order (layer-major, weights before
// biases, row-major); every real is written at 17 significant digits, so a
// round trip reproduces the exact doubles.
void write_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::string& path);

} // namespace dkbo
