// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

namespace mmfuse {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

OptimizerKind parse_optimizer_kind(const std::string& name);
std::string to_string(OptimizerKind kind);

/// First-order optimizer over named flat parameter buffers. Adam moments and
/// step counts are tracked per name, so parameters may be updated on
/// different schedules.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  void update(const std::string& name, std::span<double> param, std::span<const double> grad);

  const OptimizerConfig& config() const noexcept { return config_; }

 private:
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
  };
  OptimizerConfig config_;
  std::map<std::string, Slot> slots_;
};

}  // namespace mmfuse
