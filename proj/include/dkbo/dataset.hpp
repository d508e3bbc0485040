#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dkbo/numerics.hpp"
#include "dkbo/plant.hpp"

namespace dkbo {

struct Observation {
    std::vector<double> r;
    double j = 0.0;
};

// Ordered (r, J) evaluations from one source or target task. theta is
// provenance only; nothing in training or inference reads it.
struct TaskDataset {
    std::string task_id;
    std::optional<PlantParams> theta;
    std::vector<Observation> points;

    std::size_t size() const { return points.size(); }
    std::size_t input_dim() const { return points.empty() ? 0 : points.front().r.size(); }
    Matrix inputs() const;
    std::vector<double> labels() const;
};

// Line-delimited dataset file. First line is "dkbo-dataset v1"; each record
// line is task_id|theta1,theta2|r_0,...,r_{d-1}|J with "-" for a missing
// theta. Reals are written at 17 significant digits so a round trip is exact.
void write_datasets(const std::string& path, const std::vector<TaskDataset>& tasks);
std::vector<TaskDataset> read_datasets(const std::string& path);

// %.17g formatting used by every emitted file.
std::string format_real(double v);

} // namespace dkbo
