#include "addgcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace addgcn {

using Node = Tape::Node;

namespace {

using Impl = detail::TensorImpl;

void accumulate(Impl& target, const std::vector<float>& delta) {
  if (!target.needs_grad()) return;
  auto& g = target.ensure_grad();
  ArrayMap(g.data(), static_cast<Eigen::Index>(g.size())) +=
      ConstArrayMap(delta.data(), static_cast<Eigen::Index>(delta.size()));
}

std::size_t prod(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= s[i];
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

ConstMatrixMap cmap(const float* p, std::size_t r, std::size_t c) {
  return ConstMatrixMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
MatrixMap mmap(float* p, std::size_t r, std::size_t c) {
  return MatrixMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

// out[b] = a[b]·rhs[b] for b in [0, batch); a zero stride broadcasts an operand.
void gemm_batched(const float* a, std::size_t a_stride, const float* rhs, std::size_t b_stride,
                  float* out, std::size_t batch, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t b = 0; b < batch; ++b) {
    mmap(out + b * m * n, m, n).noalias() =
        cmap(a + b * a_stride, m, k) * cmap(rhs + b * b_stride, k, n);
  }
}

struct MatmulGeometry {
  std::size_t batch, m, k, n;
  bool a_batched, b_batched;
};

MatmulGeometry matmul_geometry(const Tensor& a, const Tensor& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  auto fail = [&] {
    return DimensionError("matmul: incompatible shapes " + to_string(sa) + " and " +
                          to_string(sb));
  };
  if ((sa.size() != 2 && sa.size() != 3) || (sb.size() != 2 && sb.size() != 3)) throw fail();
  MatmulGeometry g{};
  g.a_batched = sa.size() == 3;
  g.b_batched = sb.size() == 3;
  g.m = sa[sa.size() - 2];
  g.k = sa[sa.size() - 1];
  if (sb[sb.size() - 2] != g.k) throw fail();
  g.n = sb[sb.size() - 1];
  g.batch = 1;
  if (g.a_batched && g.b_batched && sa[0] != sb[0]) throw fail();
  if (g.a_batched) g.batch = sa[0];
  if (g.b_batched) g.batch = sb[0];
  return g;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto& in = x.impl().data;
  std::vector<float> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  auto result = make_result(x.shape(), std::move(out));
  return Tape::record(result, {x}, [deriv](const Node& node) {
    Impl& xi = *node.inputs[0];
    if (!xi.needs_grad()) return;
    const auto& gy = node.output->grad;
    const auto& y = node.output->data;
    auto& gx = xi.ensure_grad();
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * deriv(xi.data[i], y[i]);
  });
}

float stable_sigmoid(float x) {
  constexpr float lo = std::numeric_limits<float>::min();
  constexpr float hi = 1.0f - std::numeric_limits<float>::epsilon() / 2.0f;
  float y;
  if (x >= 0.0f) {
    y = 1.0f / (1.0f + std::exp(-x));
  } else {
    float e = std::exp(x);
    y = e / (1.0f + e);
  }
  return std::clamp(y, lo, hi);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto g = matmul_geometry(a, b);
  std::size_t a_stride = g.a_batched ? g.m * g.k : 0;
  std::size_t b_stride = g.b_batched ? g.k * g.n : 0;
  std::vector<float> out(g.batch * g.m * g.n);
  gemm_batched(a.data().data(), a_stride, b.data().data(), b_stride, out.data(), g.batch, g.m,
               g.k, g.n);
  Shape shape = (g.a_batched || g.b_batched) ? Shape{g.batch, g.m, g.n} : Shape{g.m, g.n};
  return Tape::record(make_result(std::move(shape), std::move(out)), {a, b},
                      [g, a_stride, b_stride](const Node& node) {
    Impl& ai = *node.inputs[0];
    Impl& bi = *node.inputs[1];
    const float* gc = node.output->grad.data();
    if (ai.needs_grad()) {
      auto& ga = ai.ensure_grad();
      for (std::size_t s = 0; s < g.batch; ++s) {
        mmap(ga.data() + s * a_stride, g.m, g.k).noalias() +=
            cmap(gc + s * g.m * g.n, g.m, g.n) *
            cmap(bi.data.data() + s * b_stride, g.k, g.n).transpose();
      }
    }
    if (bi.needs_grad()) {
      auto& gb = bi.ensure_grad();
      for (std::size_t s = 0; s < g.batch; ++s) {
        mmap(gb.data() + s * b_stride, g.k, g.n).noalias() +=
            cmap(ai.data.data() + s * a_stride, g.m, g.k).transpose() *
            cmap(gc + s * g.m * g.n, g.m, g.n);
      }
    }
  });
}

Tensor conv1x1(const Tensor& x, const Tensor& w) {
  if (x.rank() != 4 || w.rank() != 2 || w.dim(1) != x.dim(1)) {
    throw DimensionError("conv1x1: channel mismatch between input " + to_string(x.shape()) +
                         " and weight " + to_string(w.shape()));
  }
  const std::size_t batch = x.dim(0), in = x.dim(1), out_ch = w.dim(0);
  const std::size_t spatial = x.dim(2) * x.dim(3);
  std::vector<float> out(batch * out_ch * spatial);
  gemm_batched(w.data().data(), 0, x.data().data(), in * spatial, out.data(), batch, out_ch, in,
               spatial);
  Shape shape{batch, out_ch, x.dim(2), x.dim(3)};
  return Tape::record(make_result(std::move(shape), std::move(out)), {x, w},
                      [batch, in, out_ch, spatial](const Node& node) {
    Impl& xi = *node.inputs[0];
    Impl& wi = *node.inputs[1];
    const float* gy = node.output->grad.data();
    if (xi.needs_grad()) {
      auto& gx = xi.ensure_grad();
      for (std::size_t s = 0; s < batch; ++s) {
        mmap(gx.data() + s * in * spatial, in, spatial).noalias() +=
            cmap(wi.data.data(), out_ch, in).transpose() *
            cmap(gy + s * out_ch * spatial, out_ch, spatial);
      }
    }
    if (wi.needs_grad()) {
      auto& gw = wi.ensure_grad();
      for (std::size_t s = 0; s < batch; ++s) {
        mmap(gw.data(), out_ch, in).noalias() +=
            cmap(gy + s * out_ch * spatial, out_ch, spatial) *
            cmap(xi.data.data() + s * in * spatial, in, spatial).transpose();
      }
    }
  });
}

Tensor conv1x1(const Tensor& x, const Tensor& w, const Tensor& bias) {
  if (bias.rank() != 1 || bias.dim(0) != w.dim(0)) {
    throw DimensionError("conv1x1: bias " + to_string(bias.shape()) + " does not match weight " +
                         to_string(w.shape()));
  }
  return add_bias(conv1x1(x, w), bias, 1);
}

Tensor conv1x1(const Tensor& x, const Tensor& w, const std::optional<Tensor>& bias) {
  return bias ? conv1x1(x, w, *bias) : conv1x1(x, w);
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  ArrayMap(out.data(), static_cast<Eigen::Index>(out.size())) =
      ConstArrayMap(a.data().data(), static_cast<Eigen::Index>(out.size())) +
      ConstArrayMap(b.data().data(), static_cast<Eigen::Index>(out.size()));
  return Tape::record(make_result(a.shape(), std::move(out)), {a, b}, [](const Node& node) {
    accumulate(*node.inputs[0], node.output->grad);
    accumulate(*node.inputs[1], node.output->grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  ArrayMap(out.data(), static_cast<Eigen::Index>(out.size())) =
      ConstArrayMap(a.data().data(), static_cast<Eigen::Index>(out.size())) -
      ConstArrayMap(b.data().data(), static_cast<Eigen::Index>(out.size()));
  return Tape::record(make_result(a.shape(), std::move(out)), {a, b}, [](const Node& node) {
    accumulate(*node.inputs[0], node.output->grad);
    Impl& bi = *node.inputs[1];
    if (!bi.needs_grad()) return;
    auto& gb = bi.ensure_grad();
    const auto& gy = node.output->grad;
    for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  ArrayMap(out.data(), static_cast<Eigen::Index>(out.size())) =
      ConstArrayMap(a.data().data(), static_cast<Eigen::Index>(out.size())) *
      ConstArrayMap(b.data().data(), static_cast<Eigen::Index>(out.size()));
  return Tape::record(make_result(a.shape(), std::move(out)), {a, b}, [](const Node& node) {
    Impl& ai = *node.inputs[0];
    Impl& bi = *node.inputs[1];
    const auto& gy = node.output->grad;
    if (ai.needs_grad()) {
      auto& ga = ai.ensure_grad();
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bi.data[i];
    }
    if (bi.needs_grad()) {
      auto& gb = bi.ensure_grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * ai.data[i];
    }
  });
}

Tensor scale(const Tensor& x, float factor) {
  return unary(
      x, [factor](float v) { return v * factor; }, [factor](float, float) { return factor; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, stable_sigmoid, [](float, float y) { return y * (1.0f - y); });
}

namespace {
thread_local std::vector<std::uint32_t>* branch_log = nullptr;
}

BranchLog::BranchLog() : previous_(branch_log) { branch_log = &entries_; }
BranchLog::~BranchLog() { branch_log = previous_; }

Tensor leaky_relu(const Tensor& x, float slope) {
  if (branch_log) {
    for (float v : x.data()) branch_log->push_back(v >= 0.0f);
  }
  return unary(
      x, [slope](float v) { return v >= 0.0f ? v : slope * v; },
      [slope](float v, float) { return v >= 0.0f ? 1.0f : slope; });
}

Tensor log(const Tensor& x) {
  for (float v : x.data()) {
    if (!(v > 0.0f)) throw ContractError("log: input must be positive");
  }
  return unary(
      x, [](float v) { return std::log(v); }, [](float v, float) { return 1.0f / v; });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](float v) { return std::max(v, 0.0f) + std::log1p(std::exp(-std::fabs(v))); },
      [](float v, float) { return stable_sigmoid(v); });
}

Tensor add_bias(const Tensor& x, const Tensor& bias, std::size_t axis) {
  if (axis >= x.rank() || bias.rank() != 1 || bias.dim(0) != x.dim(axis)) {
    throw DimensionError("add_bias: bias " + to_string(bias.shape()) + " does not fit axis " +
                         std::to_string(axis) + " of " + to_string(x.shape()));
  }
  const std::size_t outer = prod(x.shape(), 0, axis);
  const std::size_t n = x.dim(axis);
  const std::size_t inner = prod(x.shape(), axis + 1, x.rank());
  std::vector<float> out(x.data().begin(), x.data().end());
  const auto bv = bias.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < n; ++c)
      for (std::size_t i = 0; i < inner; ++i) out[(o * n + c) * inner + i] += bv[c];
  return Tape::record(make_result(x.shape(), std::move(out)), {x, bias},
                      [outer, n, inner](const Node& node) {
    accumulate(*node.inputs[0], node.output->grad);
    Impl& bi = *node.inputs[1];
    if (!bi.needs_grad()) return;
    auto& gb = bi.ensure_grad();
    const auto& gy = node.output->grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t c = 0; c < n; ++c)
        for (std::size_t i = 0; i < inner; ++i) gb[c] += gy[(o * n + c) * inner + i];
  });
}

Tensor expand(const Tensor& x, std::size_t axis, std::size_t n) {
  if (axis > x.rank() || n == 0) {
    throw DimensionError("expand: invalid axis " + std::to_string(axis) + " for " +
                         to_string(x.shape()));
  }
  const std::size_t outer = prod(x.shape(), 0, axis);
  const std::size_t inner = prod(x.shape(), axis, x.rank());
  Shape shape = x.shape();
  shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(axis), n);
  std::vector<float> out(outer * n * inner);
  const auto xv = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < n; ++r)
      std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(o * inner), inner,
                  out.begin() + static_cast<std::ptrdiff_t>((o * n + r) * inner));
  return Tape::record(make_result(std::move(shape), std::move(out)), {x},
                      [outer, n, inner](const Node& node) {
    Impl& xi = *node.inputs[0];
    if (!xi.needs_grad()) return;
    auto& gx = xi.ensure_grad();
    const auto& gy = node.output->grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 0; i < inner; ++i) gx[o * inner + i] += gy[(o * n + r) * inner + i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + to_string(first));
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: shape " + to_string(s) + " incompatible with " +
                           to_string(first) + " along axis " + std::to_string(axis));
    }
    total += s[axis];
  }
  const std::size_t outer = prod(first, 0, axis);
  const std::size_t inner = prod(first, axis + 1, first.size());
  Shape shape = first;
  shape[axis] = total;
  std::vector<float> out(outer * total * inner);
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t width = p.dim(axis) * inner;
    const auto pv = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * width), width,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total * inner + offset));
    widths.push_back(width);
    offset += width;
  }
  return Tape::record(make_result(std::move(shape), std::move(out)), parts,
                      [outer, widths, row = total * inner](const Node& node) {
    const auto& gy = node.output->grad;
    std::size_t off = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      Impl& pi = *node.inputs[p];
      if (pi.needs_grad()) {
        auto& gp = pi.ensure_grad();
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[p]; ++i) gp[o * widths[p] + i] += gy[o * row + off + i];
      }
      off += widths[p];
    }
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose: needs rank >= 2, got " + to_string(x.shape()));
  const std::size_t r = x.dim(x.rank() - 2), c = x.dim(x.rank() - 1);
  const std::size_t batch = prod(x.shape(), 0, x.rank() - 2);
  Shape shape = x.shape();
  std::swap(shape[shape.size() - 2], shape[shape.size() - 1]);
  std::vector<float> out(x.numel());
  for (std::size_t s = 0; s < batch; ++s)
    mmap(out.data() + s * r * c, c, r) = cmap(x.data().data() + s * r * c, r, c).transpose();
  return Tape::record(make_result(std::move(shape), std::move(out)), {x},
                      [batch, r, c](const Node& node) {
    Impl& xi = *node.inputs[0];
    if (!xi.needs_grad()) return;
    auto& gx = xi.ensure_grad();
    for (std::size_t s = 0; s < batch; ++s)
      mmap(gx.data() + s * r * c, r, c) += cmap(node.output->grad.data() + s * r * c, c, r).transpose();
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  auto out = Tensor::from(std::move(shape), std::vector<float>(x.data().begin(), x.data().end()));
  return Tape::record(out, {x}, [](const Node& node) {
    accumulate(*node.inputs[0], node.output->grad);
  });
}

namespace {

// Reduces the middle extent of an [outer, n, inner] view.
Tensor reduce_view(const Tensor& x, Shape out_shape, std::size_t outer, std::size_t n,
                   std::size_t inner, Reduction how) {
  std::vector<float> out(outer * inner);
  std::vector<std::size_t> argmax;
  const auto xv = x.data();
  if (how == Reduction::max) argmax.resize(outer * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      if (how == Reduction::max) {
        std::size_t best = 0;
        float value = xv[base];
        for (std::size_t r = 1; r < n; ++r) {
          float v = xv[base + r * inner];
          if (v > value) {
            value = v;
            best = r;
          }
        }
        out[o * inner + i] = value;
        argmax[o * inner + i] = best;
        if (branch_log) branch_log->push_back(static_cast<std::uint32_t>(best));
      } else {
        double acc = 0.0;
        for (std::size_t r = 0; r < n; ++r) acc += xv[base + r * inner];
        out[o * inner + i] = static_cast<float>(how == Reduction::mean ? acc / static_cast<double>(n) : acc);
      }
    }
  }
  return Tape::record(make_result(std::move(out_shape), std::move(out)), {x},
                      [outer, n, inner, how, argmax = std::move(argmax)](const Node& node) {
    Impl& xi = *node.inputs[0];
    if (!xi.needs_grad()) return;
    auto& gx = xi.ensure_grad();
    const auto& gy = node.output->grad;
    const float w = how == Reduction::mean ? 1.0f / static_cast<float>(n) : 1.0f;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t base = o * n * inner + i;
        const float g = gy[o * inner + i];
        if (how == Reduction::max) {
          gx[base + argmax[o * inner + i] * inner] += g;
        } else {
          for (std::size_t r = 0; r < n; ++r) gx[base + r * inner] += g * w;
        }
      }
    }
  });
}

}  // namespace

Tensor reduce(const Tensor& x, std::size_t axis, Reduction how) {
  if (axis >= x.rank()) {
    throw DimensionError("reduce: axis " + std::to_string(axis) + " out of range for " +
                         to_string(x.shape()));
  }
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape.push_back(1);
  return reduce_view(x, std::move(shape), prod(x.shape(), 0, axis), x.dim(axis),
                     prod(x.shape(), axis + 1, x.rank()), how);
}

Tensor sum(const Tensor& x) { return reduce_view(x, {1}, 1, x.numel(), 1, Reduction::sum); }

Tensor global_pool(const Tensor& x, PoolMode mode) {
  if (x.rank() != 4) throw DimensionError("global_pool: expects [B,C,H,W], got " + to_string(x.shape()));
  return reduce_view(x, {x.dim(0), x.dim(1)}, x.dim(0) * x.dim(1), x.dim(2) * x.dim(3), 1,
                     mode == PoolMode::avg ? Reduction::mean : Reduction::max);
}

Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias) {
  if (weight.rank() != 2 || x.dim(x.rank() - 1) != weight.dim(1)) {
    throw DimensionError("linear: input " + to_string(x.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  auto y = matmul(x, transpose(weight));
  return bias ? add_bias(y, *bias, y.rank() - 1) : y;
}

}  // namespace addgcn
