#pragma once

#include <optional>

namespace gcvae::control {

struct PidGains {
  double kp = 0.01;
  double ki = 1e-4;
  double min_value = 0.0;
  /// Optional bound on |integral|; unset means the integral is the exact error sum.
  std::optional<double> integral_cap;
};

/// One nonlinear PI controller for a Lagrangian weight.
struct ControllerState {
  PidGains gains;
  double set_point = 0.0;
  double integral = 0.0;
  double last_output = 0.0;
};

struct PidStep {
  ControllerState state;
  double error = 0.0;
  double weight = 0.0;
};

/// e = set_point - actual; integral += e;
/// weight = kp / (1 + exp(e)) - ki * integral + min_value, floored at min_value and capped at 1.
/// exp(e) is evaluated with e clamped to [-50, 50].
PidStep pid_step(const ControllerState& state, double actual);

struct WeightTriple {
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.0;

  friend bool operator==(const WeightTriple&, const WeightTriple&) = default;
};

/// Projects onto alpha, beta, gamma in [0,1] with alpha + beta <= 1. Components are clipped,
/// then alpha and beta are rescaled by 1 / (alpha + beta) when their sum exceeds 1.
WeightTriple clamp_weights(const WeightTriple& raw);

/// True when |alpha_t - alpha_prev| < eps_a and |beta_t - beta_prev| < eps_b.
bool stopping_check(double alpha_t, double alpha_prev, double beta_t, double beta_prev, double eps_a, double eps_b);

}  // namespace gcvae::control
