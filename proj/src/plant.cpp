#include "dkbo/plant.hpp"

#include <cmath>
#include <string>

namespace dkbo {

double control_policy(const PlantState& s, double r, const PlantParams& p) {
    return -6.0 * s.x1 + (p.theta1 - 5.0) * (s.x2 - p.theta1 * s.x1) + p.theta2 * s.x1 * s.x1 + r;
}

PlantDerivatives derivatives(const PlantState& s, double r, const PlantParams& p) {
    PlantDerivatives d;
    d.dx1 = s.x2 - p.theta1 * s.x1;
    d.dx2 = -p.theta2 * s.x1 * s.x1 + control_policy(s, r, p);
    return d;
}

PlantState rk4_step(const PlantState& s, double r, const PlantParams& p, double h) {
    const auto eval = [&](double x1, double x2) {
        PlantState probe{x1, x2, s.t};
        return derivatives(probe, r, p);
    };
    const PlantDerivatives k1 = eval(s.x1, s.x2);
    const PlantDerivatives k2 = eval(s.x1 + 0.5 * h * k1.dx1, s.x2 + 0.5 * h * k1.dx2);
    const PlantDerivatives k3 = eval(s.x1 + 0.5 * h * k2.dx1, s.x2 + 0.5 * h * k2.dx2);
    const PlantDerivatives k4 = eval(s.x1 + h * k3.dx1, s.x2 + h * k3.dx2);

    PlantState next;
    next.x1 = s.x1 + h / 6.0 * (k1.dx1 + 2.0 * k2.dx1 + 2.0 * k3.dx1 + k4.dx1);
    next.x2 = s.x2 + h / 6.0 * (k1.dx2 + 2.0 * k2.dx2 + 2.0 * k3.dx2 + k4.dx2);
    next.t = s.t + h;
    if (!std::isfinite(next.x1) || !std::isfinite(next.x2))
        throw NonFiniteState("rk4_step: state overflow at t=" + std::to_string(next.t));
    return next;
}

std::pair<double, PlantState> evaluate_performance(PlantState state, double r,
                                                   const PlantParams& p, const SimConfig& sim,
                                                   Rng* noise_rng) {
    const long long steps = std::llround(sim.t_f / sim.h);
    for (long long i = 0; i < steps; ++i) state = rk4_step(state, r, p, sim.h);
    double j = 1.0 - p.theta1 * state.x1 - p.theta2 * state.x1 * state.x1;
    if (sim.noise_std > 0.0 && noise_rng != nullptr) j += sim.noise_std * noise_rng->normal();
    if (!std::isfinite(j)) throw NonFiniteState("evaluate_performance: non-finite J");
    return {j, state};
}

SteadyState steady_state_oracle(double r, const PlantParams& p) {
    SteadyState s;
    s.x1 = r / 6.0;
    s.x2 = p.theta1 * r / 6.0;
    s.j = 1.0 - p.theta1 * s.x1 - p.theta2 * s.x1 * s.x1;
    return s;
}

PlantOptimum optimal_oracle(const PlantParams& p, double r_lo, double r_hi) {
    double r_star = -3.0 * p.theta1 / p.theta2;
    if (r_star < r_lo) r_star = r_lo;
    if (r_star > r_hi) r_star = r_hi;
    return {r_star, steady_state_oracle(r_star, p).j};
}

} // namespace dkbo
