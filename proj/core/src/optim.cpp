// SPDX-License-Identifier: Apache-2.0
#include "mmfuse/optim.hpp"

#include <cmath>

#include "mmfuse/error.hpp"

namespace mmfuse {

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam or sgd)");
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "sgd";
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) {
  if (!(config_.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (config_.beta1 < 0.0 || config_.beta1 >= 1.0 || config_.beta2 < 0.0 || config_.beta2 >= 1.0) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
}

void Optimizer::update(const std::string& name, std::span<double> param,
                       std::span<const double> grad) {
  if (param.size() != grad.size()) {
    throw ShapeError("optimizer: gradient for '" + name + "' has " + std::to_string(grad.size()) +
                     " entries, parameter has " + std::to_string(param.size()));
  }
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < param.size(); ++i) param[i] -= lr * grad[i];
    return;
  }
  Slot& slot = slots_[name];
  if (slot.m.empty()) {
    slot.m.assign(param.size(), 0.0);
    slot.v.assign(param.size(), 0.0);
  }
  ++slot.step;
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(slot.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(slot.step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * grad[i];
    slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * grad[i] * grad[i];
    const double m_hat = slot.m[i] / c1;
    const double v_hat = slot.v[i] / c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
  }
}

}  // namespace mmfuse
