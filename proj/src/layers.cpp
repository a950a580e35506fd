#include "addgcn/layers.hpp"

#include <cmath>

namespace addgcn {

Tensor init_parameter(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  return Tensor::parameter(Tensor::uniform(std::move(shape), bound, rng));
}

Linear make_linear(std::size_t out, std::size_t in, bool with_bias, std::mt19937_64& rng) {
  Linear l{init_parameter({out, in}, in, rng), std::nullopt};
  if (with_bias) l.bias = init_parameter({out}, in, rng);
  return l;
}

}  // namespace addgcn
