#include "addgcn/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace addgcn {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<float>& detail::TensorImpl::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0f);
  return grad;
}

namespace {

void check_shape(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
}

}  // namespace

Tensor make_result(Shape shape, std::vector<float> values) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0f); }

Tensor Tensor::full(Shape shape, float value) {
  check_shape(shape);
  auto n = addgcn::numel(shape);
  return make_result(std::move(shape), std::vector<float>(n, value));
}

Tensor Tensor::from(Shape shape, std::vector<float> values) {
  check_shape(shape);
  if (addgcn::numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  return make_result(std::move(shape), std::move(values));
}

Tensor Tensor::scalar(float value) { return make_result({1}, {value}); }

Tensor Tensor::eye(std::size_t n) {
  auto t = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) t.impl().data[i * n + i] = 1.0f;
  return t;
}

Tensor Tensor::uniform(Shape shape, float bound, std::mt19937_64& rng) {
  check_shape(shape);
  std::uniform_real_distribution<float> dist(-bound, bound);
  std::vector<float> values(addgcn::numel(shape));
  for (auto& v : values) v = dist(rng);
  return make_result(std::move(shape), std::move(values));
}

Tensor Tensor::parameter(Tensor init) {
  auto t = init.clone();
  t.impl().requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return impl().data.size(); }

std::span<const float> Tensor::data() const& { return impl().data; }
std::span<float> Tensor::mutable_data() { return impl().data; }

bool Tensor::has_grad() const { return !impl().grad.empty(); }
std::span<const float> Tensor::grad() const& { return impl().grad; }
std::span<float> Tensor::mutable_grad() { return impl().ensure_grad(); }

void Tensor::zero_grad() {
  auto& g = impl().grad;
  std::fill(g.begin(), g.end(), 0.0f);
}

bool Tensor::requires_grad() const { return impl().requires_grad; }
bool Tensor::recorded() const { return impl().tape != nullptr; }

float Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return impl().data[0];
}

float Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank mismatch for " + to_string(s));
  std::size_t offset = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw DimensionError("index out of range for " + to_string(s));
    offset = offset * s[axis] + i;
    ++axis;
  }
  return impl().data[offset];
}

Tensor Tensor::clone() const { return make_result(shape(), impl().data); }

ConstMatrixMap Tensor::matrix() const {
  if (rank() != 2) throw DimensionError("matrix view needs rank 2, got " + to_string(shape()));
  return ConstMatrixMap(impl().data.data(), static_cast<Eigen::Index>(shape()[0]),
                        static_cast<Eigen::Index>(shape()[1]));
}

detail::TensorImpl& Tensor::impl() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local Tape* active_tape = nullptr;
}

Tape::~Tape() {
  for (auto& node : nodes_) {
    if (node.output && node.output->tape == this) node.output->tape = nullptr;
  }
}

Tape* Tape::active() { return active_tape; }

Tensor Tape::record(Tensor output, std::vector<Tensor> inputs,
                    std::function<void(const Node&)> backward) {
  Tape* tape = active_tape;
  if (tape == nullptr) return output;
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor& t) { return t.impl().needs_grad(); });
  if (!any) return output;

  Node node;
  node.inputs.reserve(inputs.size());
  for (auto& t : inputs) node.inputs.push_back(t.handle());
  node.output = output.handle();
  node.backward = std::move(backward);
  output.impl().tape = tape;
  output.impl().node = tape->nodes_.size();
  tape->nodes_.push_back(std::move(node));
  return output;
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  auto& root = loss.impl();
  if (root.tape != this) throw ContractError("loss was not recorded on this tape");

  for (std::size_t i = 0; i <= root.node; ++i) nodes_[i].output->grad.clear();
  root.grad.assign(1, 1.0f);

  for (std::size_t i = root.node + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (node.output->grad.empty()) continue;
    node.backward(node);
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(active_tape) { active_tape = &tape; }
TapeScope::~TapeScope() { active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(active_tape) { active_tape = nullptr; }
NoGradScope::~NoGradScope() { active_tape = previous_; }

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  Tape* tape = loss.impl().tape;
  if (tape == nullptr) throw ContractError("loss is not recorded on any tape");
  tape->backward(loss);
}

}  // namespace addgcn
