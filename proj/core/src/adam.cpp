#include "gcvae/adam.hpp"

#include <Eigen/Core>
#include <cmath>

#include "gcvae/errors.hpp"

namespace gcvae {

void adam_step(const std::vector<NamedTensors*>& groups, const NamedTensors& grads, AdamState& state,
               const AdamConfig& config) {
  if (!(config.lr > 0.0)) throw ContractError("adam: learning rate must be positive");
  std::size_t matched = 0;
  for (const NamedTensors* group : groups) {
    for (const auto& [name, value] : *group) matched += grads.count(name);
  }
  if (matched != grads.size()) throw ContractError("adam: gradient supplied for an unknown parameter");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (NamedTensors* group : groups) {
    for (auto& [name, param] : *group) {
      auto [m_it, m_new] = state.m.try_emplace(name, param.shape());
      auto [v_it, v_new] = state.v.try_emplace(name, param.shape());
      Tensor& m = m_it->second;
      Tensor& v = v_it->second;
      const auto g_it = grads.find(name);
      const Tensor* g = g_it == grads.end() ? nullptr : &g_it->second;
      if (g && g->shape() != param.shape()) {
        throw ShapeError("adam: gradient for " + name + " has shape " + shape_str(g->shape()) + ", parameter " +
                         shape_str(param.shape()));
      }
      using Array = Eigen::Map<Eigen::ArrayXd>;
      const auto n = static_cast<Eigen::Index>(param.numel());
      Array p(param.ptr(), n), mm(m.ptr(), n), vv(v.ptr(), n);
      if (g) {
        const Eigen::Map<const Eigen::ArrayXd> gg(g->ptr(), n);
        mm = config.beta1 * mm + (1.0 - config.beta1) * gg;
        vv = config.beta2 * vv + (1.0 - config.beta2) * gg.square();
      } else {
        mm *= config.beta1;
        vv *= config.beta2;
      }
      p -= config.lr * (mm / correction1) / ((vv / correction2).sqrt() + config.eps);
    }
  }
}

void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state, const AdamConfig& config) {
  adam_step(std::vector<NamedTensors*>{&params}, grads, state, config);
}

}  // namespace gcvae
