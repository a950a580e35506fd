#pragma once

#include <optional>
#include <vector>

#include "addgcn/tensor.hpp"

// Differentiable tensor operations. Every function records a backward node on
// the active tape when one of its inputs needs a gradient.

namespace addgcn {

/// Matrix product with optional batch axis on either side:
///   [m,k]·[k,n], [B,m,k]·[B,k,n], [m,k]·[B,k,n], [B,m,k]·[k,n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// Per-position channel map: x [B,D,H,W], w [D',D], bias [D'] -> [B,D',H,W].
Tensor conv1x1(const Tensor& x, const Tensor& w);
Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor conv1x1(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise (Hadamard) product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(float s, const Tensor& x) { return scale(x, s); }
inline Tensor operator*(const Tensor& x, float s) { return scale(x, s); }

/// Sigmoid with its float32 output held inside the open interval (0, 1).
/// While alive, records which side of every kink the calling thread's
/// piecewise ops (leaky_relu, max reductions) evaluated on.
class BranchLog {
 public:
  BranchLog();
  BranchLog(const BranchLog&) = delete;
  BranchLog& operator=(const BranchLog&) = delete;
  ~BranchLog();

  const std::vector<std::uint32_t>& entries() const { return entries_; }

 private:
  std::vector<std::uint32_t> entries_;
  std::vector<std::uint32_t>* previous_;
};

Tensor sigmoid(const Tensor& x);
Tensor leaky_relu(const Tensor& x, float slope);
/// Natural log; every input entry must be positive.
Tensor log(const Tensor& x);
/// log(1 + exp(x)), evaluated without overflow.
Tensor softplus(const Tensor& x);

/// Adds a vector along `axis` and broadcasts it over every other axis.
Tensor add_bias(const Tensor& x, const Tensor& bias, std::size_t axis);
/// Inserts a new axis of extent `n` at position `axis`, repeating x along it.
Tensor expand(const Tensor& x, std::size_t axis, std::size_t n);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

enum class Reduction { sum, mean, max };

/// Reduces one axis away. Max routes its gradient to the first maximal entry.
Tensor reduce(const Tensor& x, std::size_t axis, Reduction how);
inline Tensor mean(const Tensor& x, std::size_t axis) { return reduce(x, axis, Reduction::mean); }
/// Sum of all entries as a one-element tensor.
Tensor sum(const Tensor& x);

enum class PoolMode { avg, max };

/// Spatial pooling of [B,C,H,W] into [B,C].
Tensor global_pool(const Tensor& x, PoolMode mode);

/// Affine map over the last axis; `weight` is [out,in].
Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias);

}  // namespace addgcn
