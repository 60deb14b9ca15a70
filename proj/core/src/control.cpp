#include "gcvae/control.hpp"

#include <algorithm>
#include <cmath>

#include "gcvae/errors.hpp"

namespace gcvae::control {

PidStep pid_step(const ControllerState& state, double actual) {
  PidStep step{state, state.set_point - actual, 0.0};
  ControllerState& next = step.state;
  next.integral = state.integral + step.error;
  if (next.gains.integral_cap) {
    const double cap = *next.gains.integral_cap;
    next.integral = std::clamp(next.integral, -cap, cap);
  }
  const double logistic = next.gains.kp / (1.0 + std::exp(std::clamp(step.error, -50.0, 50.0)));
  double weight = logistic - next.gains.ki * next.integral + next.gains.min_value;
  weight = std::min(std::max(weight, next.gains.min_value), 1.0);
  next.last_output = weight;
  step.weight = weight;
  return step;
}

WeightTriple clamp_weights(const WeightTriple& raw) {
  WeightTriple w{std::clamp(raw.alpha, 0.0, 1.0), std::clamp(raw.beta, 0.0, 1.0), std::clamp(raw.gamma, 0.0, 1.0)};
  const double sum = w.alpha + w.beta;
  if (sum > 1.0) {
    w.alpha /= sum;
    w.beta /= sum;
    // Rounding can leave the sum one ulp above 1; shave beta so the result is a fixed point.
    while (w.alpha + w.beta > 1.0) w.beta = std::nextafter(w.beta, 0.0);
  }
  return w;
}

bool stopping_check(double alpha_t, double alpha_prev, double beta_t, double beta_prev, double eps_a, double eps_b) {
  if (!(eps_a > 0.0) || !(eps_b > 0.0)) throw ContractError("stopping_check: thresholds must be positive");
  return std::abs(alpha_t - alpha_prev) < eps_a && std::abs(beta_t - beta_prev) < eps_b;
}

}  // namespace gcvae::control
