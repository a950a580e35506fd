#pragma once

#include <optional>
#include <random>

#include "addgcn/ops.hpp"

namespace addgcn {

/// Learned affine map. `weight` is [out,in], as for a 1x1 convolution.
struct Linear {
  Tensor weight;
  std::optional<Tensor> bias;

  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

/// Fan-in uniform initializer: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor init_parameter(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

Linear make_linear(std::size_t out, std::size_t in, bool with_bias, std::mt19937_64& rng);

}  // namespace addgcn
