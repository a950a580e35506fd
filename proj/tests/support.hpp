#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "addgcn/ops.hpp"

namespace addgcn::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, float lo = -2.0f, float hi = 2.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v));
}

inline Tensor random_parameter(Shape shape, std::mt19937_64& rng, float lo = -2.0f, float hi = 2.0f) {
  return Tensor::parameter(random_tensor(std::move(shape), rng, lo, hi));
}

using Forward = std::function<Tensor()>;

struct GradReport {
  double overall = 0.0;     // relative error of the full gradient vector
  double worst_tensor = 0.0;  // worst per-tensor relative error
  std::size_t checked = 0;
  std::size_t skipped = 0;  // entries whose +-h interval crosses a kink
};

/// Projects the output onto fixed random weights so every output entry
/// contributes, then compares tape gradients with central differences.
/// Relative error is ||a - n|| / max(||a||, ||n||). Entries whose
/// perturbation flips a leaky_relu sign or a max argmax are skipped: the
/// function is not differentiable on that interval.
inline GradReport gradient_check(const Forward& f, const std::vector<Tensor>& params, std::uint64_t seed,
                                 float h = 1e-3f) {
  std::mt19937_64 rng(seed ^ 0x5bd1e995);
  std::vector<float> proj;
  auto evaluate = [&](std::vector<std::uint32_t>& branches) {
    BranchLog log;
    auto out = f();
    branches = log.entries();
    double acc = 0.0;
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) acc += static_cast<double>(d[i]) * proj[i];
    return acc;
  };

  std::vector<std::vector<float>> analytic;
  std::vector<std::uint32_t> base;
  {
    Tape tape;
    TapeScope scope(tape);
    BranchLog log;
    auto out = f();
    base = log.entries();
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    proj.resize(out.numel());
    for (auto& p : proj) p = dist(rng);
    auto loss = sum(mul(out, Tensor::from(out.shape(), proj)));
    for (auto p : params) p.zero_grad();
    tape.backward(loss);
    for (const auto& p : params) {
      analytic.emplace_back(p.numel(), 0.0f);
      if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.back().begin());
    }
  }

  GradReport report;
  double all_diff2 = 0.0, all_a2 = 0.0, all_n2 = 0.0;
  std::vector<std::uint32_t> up_branches, down_branches;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k];
    auto data = p.mutable_data();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const float saved = data[i];
      const float hi = saved + h;
      const float lo = saved - h;
      data[i] = hi;
      const double up = evaluate(up_branches);
      data[i] = lo;
      const double down = evaluate(down_branches);
      data[i] = saved;
      if (up_branches != base || down_branches != base) {
        ++report.skipped;
        continue;
      }
      ++report.checked;
      const double numeric = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
      const double a = analytic[k][i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
    }
    const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-6});
    report.worst_tensor = std::max(report.worst_tensor, std::sqrt(diff2) / denom);
    all_diff2 += diff2;
    all_a2 += a2;
    all_n2 += n2;
  }
  report.overall = std::sqrt(all_diff2) / std::max({std::sqrt(all_a2), std::sqrt(all_n2), 1e-6});
  return report;
}

/// Worst per-tensor relative error; for single ops.
inline double gradient_error(const Forward& f, const std::vector<Tensor>& params, std::uint64_t seed,
                             float h = 1e-3f) {
  return gradient_check(f, params, seed, h).worst_tensor;
}

inline bool all_finite(const Tensor& t) {
  for (float v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace addgcn::testing
