#pragma once

#include <utility>

#include "dkbo/errors.hpp"
#include "dkbo/random.hpp"

namespace dkbo {

// Benchmark closed loop:
//   x1' = x2 - theta1*x1
//   x2' = -theta2*x1^2 + kappa(x, r)
//   J   = 1 - theta1*x1 - theta2*x1^2
// with the stabilizing policy
//   kappa(x, r) = -6*x1 + (theta1-5)*(x2 - theta1*x1) + theta2*x1^2 + r.
struct PlantParams {
    double theta1 = 2.0;
    double theta2 = 5.0;
};

struct PlantState {
    double x1 = 0.0;
    double x2 = 0.0;
    double t = 0.0; // elapsed seconds
};

struct PlantDerivatives {
    double dx1 = 0.0;
    double dx2 = 0.0;
};

double control_policy(const PlantState& s, double r, const PlantParams& p);
PlantDerivatives derivatives(const PlantState& s, double r, const PlantParams& p);

// Classical RK4 with r held constant over the step. Throws NonFiniteState if
// the state overflows.
PlantState rk4_step(const PlantState& s, double r, const PlantParams& p, double h);

struct SimConfig {
    double t_f = 10.0;      // settling window per performance measurement
    double h = 0.01;        // RK4 step; the step count is round(t_f/h)
    double noise_std = 0.0; // measurement noise on J
};

// Integrates t_f seconds from the given state (no reset) and measures
// J = 1 - theta1*x1 - theta2*x1^2 (+ Gaussian noise when configured).
// Returns the measurement and the carried-over state.
std::pair<double, PlantState> evaluate_performance(PlantState state, double r,
                                                   const PlantParams& p, const SimConfig& sim,
                                                   Rng* noise_rng = nullptr);

struct SteadyState {
    double x1;
    double x2;
    double j;
};

// Closed-form equilibrium: x1 = r/6, x2 = theta1*r/6,
// J = 1 - theta1*r/6 - theta2*r^2/36.
SteadyState steady_state_oracle(double r, const PlantParams& p);

struct PlantOptimum {
    double r;
    double j;
};

// Maximizer of the steady-state J over [r_lo, r_hi]: r* = -3*theta1/theta2
// clamped to the box; J* = 1 + theta1^2/(4*theta2) when unclamped, otherwise
// the steady-state J at the clamp.
PlantOptimum optimal_oracle(const PlantParams& p, double r_lo = -10.0, double r_hi = 10.0);

} // namespace dkbo
