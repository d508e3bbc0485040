#include "dkbo/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace dkbo {

Matrix TaskDataset::inputs() const {
    if (points.empty()) return Matrix();
    Matrix x(points.size(), points.front().r.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].r.size() != x.cols())
            throw DimensionMismatch("TaskDataset: ragged input row in " + task_id);
        for (std::size_t k = 0; k < x.cols(); ++k) x(i, k) = points[i].r[k];
    }
    return x;
}

std::vector<double> TaskDataset::labels() const {
    std::vector<double> y(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) y[i] = points[i].j;
    return y;
}

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

constexpr const char* kDatasetHeader = "dkbo-dataset v1";

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string::size_type start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        if (pos == std::string::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double parse_real(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::runtime_error("dataset: bad real '" + s + "'");
    return v;
}

} // namespace

void write_datasets(const std::string& path, const std::vector<TaskDataset>& tasks) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_datasets: cannot open " + path);
    out << kDatasetHeader << "\n";
    for (const auto& task : tasks) {
        for (const auto& obs : task.points) {
            out << task.task_id << '|';
            if (task.theta)
                out << format_real(task.theta->theta1) << ',' << format_real(task.theta->theta2);
            else
                out << '-';
            out << '|';
            for (std::size_t k = 0; k < obs.r.size(); ++k) {
                if (k > 0) out << ',';
                out << format_real(obs.r[k]);
            }
            out << '|' << format_real(obs.j) << "\n";
        }
    }
    if (!out) throw std::runtime_error("write_datasets: write failed for " + path);
}

std::vector<TaskDataset> read_datasets(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_datasets: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kDatasetHeader)
        throw std::runtime_error("read_datasets: bad header in " + path);

    std::vector<TaskDataset> tasks;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split(line, '|');
        if (fields.size() != 4)
            throw std::runtime_error("read_datasets: malformed record '" + line + "'");

        TaskDataset* task = nullptr;
        for (auto& t : tasks)
            if (t.task_id == fields[0]) task = &t;
        if (task == nullptr) {
            tasks.emplace_back();
            task = &tasks.back();
            task->task_id = fields[0];
            if (fields[1] != "-") {
                const auto parts = split(fields[1], ',');
                if (parts.size() != 2)
                    throw std::runtime_error("read_datasets: bad theta '" + fields[1] + "'");
                task->theta = PlantParams{parse_real(parts[0]), parse_real(parts[1])};
            }
        }

        Observation obs;
        for (const auto& part : split(fields[2], ',')) obs.r.push_back(parse_real(part));
        obs.j = parse_real(fields[3]);
        task->points.push_back(std::move(obs));
    }
    return tasks;
}

} // namespace dkbo
