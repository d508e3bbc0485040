#pragma once

#include <stdexcept>
#include <string>

namespace dkbo {

struct DimensionMismatch : std::runtime_error {
    explicit DimensionMismatch(const std::string& what) : std::runtime_error(what) {}
};

struct NotPositiveDefinite : std::runtime_error {
    explicit NotPositiveDefinite(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidArchitecture : std::runtime_error {
    explicit InvalidArchitecture(const std::string& what) : std::runtime_error(what) {}
};

struct NonFiniteGradient : std::runtime_error {
    explicit NonFiniteGradient(const std::string& what) : std::runtime_error(what) {}
};

struct NonFiniteState : std::runtime_error {
    explicit NonFiniteState(const std::string& what) : std::runtime_error(what) {}
};

struct TrainingFailed : std::runtime_error {
    explicit TrainingFailed(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyCandidates : std::runtime_error {
    explicit EmptyCandidates(const std::string& what) : std::runtime_error(what) {}
};

struct DegenerateScale : std::runtime_error {
    explicit DegenerateScale(const std::string& what) : std::runtime_error(what) {}
};

struct LengthMismatch : std::runtime_error {
    explicit LengthMismatch(const std::string& what) : std::runtime_error(what) {}
};

} // namespace dkbo
