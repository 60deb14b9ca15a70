#pragma once

#include <cstdint>
#include <vector>

#include "gcvae/checkpoint.hpp"

namespace gcvae {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments keyed by parameter name, plus the shared step count.
struct AdamState {
  std::uint64_t step = 0;
  NamedTensors m;
  NamedTensors v;
};

/// One bias-corrected Adam update of every tensor in `groups`. A parameter without an entry
/// in `grads` sees a zero gradient. Gradients for unknown names raise ContractError.
void adam_step(const std::vector<NamedTensors*>& groups, const NamedTensors& grads, AdamState& state,
               const AdamConfig& config);
void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state, const AdamConfig& config);

}  // namespace gcvae
