#pragma once

#include <span>
#include <string>
#include <vector>

#include "addgcn/model.hpp"

namespace addgcn {

struct GroupRates {
  double head = 0.0;
  double features = 0.0;
};

/// Piecewise-constant decay: each step epoch <= `epoch` multiplies both base
/// rates by `gamma`.
GroupRates lr_schedule(std::size_t epoch, GroupRates base, std::span<const std::size_t> steps, double gamma);

/// One SGD update with momentum and L2 weight decay:
///   v <- momentum*v + (g + weight_decay*theta);  theta <- theta - lr*v
void sgd_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity, float lr,
              float momentum, float weight_decay);

/// Momentum SGD over a model's parameters with per-group learning rates.
/// Weight decay applies to every parameter, biases and adjacency included.
class Sgd {
 public:
  Sgd(std::vector<NamedParameter> params, double momentum, double weight_decay);

  void step(const GroupRates& rates);
  void zero_grad();

  const std::vector<NamedParameter>& parameters() const { return params_; }
  std::vector<std::vector<float>>& velocity() { return velocity_; }
  const std::vector<std::vector<float>>& velocity() const { return velocity_; }

 private:
  std::vector<NamedParameter> params_;
  std::vector<std::vector<float>> velocity_;
  float momentum_;
  float weight_decay_;
};

}  // namespace addgcn
