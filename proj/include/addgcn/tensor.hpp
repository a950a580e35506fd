#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "addgcn/errors.hpp"

namespace addgcn {

using Shape = std::vector<std::size_t>;

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<MatrixRM>;
using ConstMatrixMap = Eigen::Map<const MatrixRM>;
using ArrayMap = Eigen::Map<Eigen::ArrayXf>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXf>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulated into
  bool requires_grad = false;
  Tape* tape = nullptr;  // set when produced by a recorded op
  std::size_t node = 0;

  bool needs_grad() const { return requires_grad || tape != nullptr; }
  std::vector<float>& ensure_grad();
};

}  // namespace detail

/// Dense row-major float32 tensor with shared storage.
///
/// Copies are handles: they alias the same buffer and gradient. Values are
/// treated as immutable once produced by an op; only leaves (parameters) are
/// written in place, by the optimizer or by tests.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from(Shape shape, std::vector<float> values);
  static Tensor scalar(float value);
  /// Square identity matrix.
  static Tensor eye(std::size_t n);
  /// Uniform in [-bound, bound] (the fan-in initializer uses 1/sqrt(fan_in)).
  static Tensor uniform(Shape shape, float bound, std::mt19937_64& rng);
  /// A trainable leaf; gradients accumulate into it on backward.
  static Tensor parameter(Tensor init);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const float> data() const&;
  std::span<const float> data() const&& = delete;
  /// Mutable view; meant for leaves only (parameter updates, test perturbation).
  std::span<float> mutable_data();

  bool has_grad() const;
  std::span<const float> grad() const&;
  std::span<const float> grad() const&& = delete;
  std::span<float> mutable_grad();
  void zero_grad();

  bool requires_grad() const;
  bool recorded() const;

  float item() const;
  float at(std::initializer_list<std::size_t> index) const;

  /// Deep copy, detached from any tape, not a parameter.
  Tensor clone() const;

  /// Rank-2 view of a rank-2 tensor.
  ConstMatrixMap matrix() const;

  detail::TensorImpl& impl() const;
  const std::shared_ptr<detail::TensorImpl>& handle() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class Tape;
  friend Tensor make_result(Shape, std::vector<float>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Wraps a freshly computed buffer as an (unrecorded) tensor.
Tensor make_result(Shape shape, std::vector<float> values);

/// Append-only record of differentiable operations for one training step.
///
/// Ops consult the thread's active tape (see TapeScope) and append a node
/// whenever one of their inputs needs a gradient. Nodes are therefore in
/// topological order by construction.
class Tape {
 public:
  struct Node {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void(const Node&)> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  std::size_t size() const { return nodes_.size(); }

  /// Runs reverse-mode accumulation from a scalar recorded on this tape.
  void backward(const Tensor& loss);

  static Tape* active();

  /// Records `output = op(inputs)` if a tape is active and any input needs a
  /// gradient. Returns `output` either way.
  static Tensor record(Tensor output, std::vector<Tensor> inputs,
                       std::function<void(const Node&)> backward);

 private:
  friend class TapeScope;
  friend class NoGradScope;
  std::vector<Node> nodes_;
};

/// Makes `tape` the active tape of the calling thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape* previous_;
};

/// Disables recording on the calling thread for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;
  ~NoGradScope();

 private:
  Tape* previous_;
};

/// Backpropagates from a scalar loss. Leaf gradients accumulate across calls
/// until zeroed.
void backward(const Tensor& loss);

}  // namespace addgcn
