#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "addgcn/dgcn.hpp"
#include "addgcn/metrics.hpp"

// Loop-based reference implementations, written independently of the library
// kernels.

namespace addgcn::oracle {

inline double lrelu(double x, double slope = 0.2) { return x >= 0 ? x : slope * x; }
inline double sigm(double x) { return 1.0 / (1.0 + std::exp(-x)); }

using Mat = std::vector<std::vector<double>>;

inline Mat slice(const Tensor& t, std::size_t b) {
  Mat m(t.dim(1), std::vector<double>(t.dim(2)));
  for (std::size_t i = 0; i < t.dim(1); ++i)
    for (std::size_t j = 0; j < t.dim(2); ++j) m[i][j] = t.at({b, i, j});
  return m;
}

inline Mat as_mat(const Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at({i, j});
  return m;
}

inline Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

inline Mat gcn_oracle(const Mat& adj, const Mat& v, const Mat& w, const std::optional<Tensor>& bias) {
  auto y = mm(mm(adj, v), w);
  for (auto& row : y)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = lrelu(row[j] + (bias ? bias->at({j}) : 0.0));
  return y;
}

inline Mat adjacency_oracle(const Mat& h, const DynamicGraphLayer& layer) {
  const std::size_t C = h.size(), D = h[0].size();
  std::vector<double> mean(D, 0.0), hg(D, 0.0);
  for (const auto& row : h)
    for (std::size_t d = 0; d < D; ++d) mean[d] += row[d] / double(C);
  for (std::size_t o = 0; o < D; ++o) {
    hg[o] = layer.global_conv.bias ? layer.global_conv.bias->at({o}) : 0.0;
    for (std::size_t d = 0; d < D; ++d) hg[o] += layer.global_conv.weight.at({o, d}) * mean[d];
  }
  Mat a(C, std::vector<double>(C));
  for (std::size_t i = 0; i < C; ++i)
    for (std::size_t j = 0; j < C; ++j) {
      double acc = layer.adjacency_conv.bias ? layer.adjacency_conv.bias->at({i}) : 0.0;
      for (std::size_t d = 0; d < D; ++d) {
        acc += layer.adjacency_conv.weight.at({i, d}) * h[j][d];
        acc += layer.adjacency_conv.weight.at({i, D + d}) * hg[d];
      }
      a[i][j] = sigm(acc);
    }
  return a;
}

/// v[b,c,:] = sum over positions of m[b,c,i,j] * x'[b,:,i,j]
inline std::vector<double> brute_force_eq1(const Tensor& m, const Tensor& xp) {
  const std::size_t B = m.dim(0), C = m.dim(1), H = m.dim(2), W = m.dim(3), D = xp.dim(1);
  std::vector<double> v(B * C * D, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t d = 0; d < D; ++d)
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j) v[(b * C + c) * D + d] += double(m.at({b, c, i, j})) * xp.at({b, d, i, j});
  return v;
}

// Ranked-list AP written independently: sort pairs, walk, average precisions.
inline std::optional<double> ap_oracle(std::vector<double> s, std::vector<std::uint8_t> y) {
  std::vector<std::pair<double, std::size_t>> order;
  for (std::size_t i = 0; i < s.size(); ++i) order.push_back({-s[i], i});
  std::sort(order.begin(), order.end());
  double hits = 0, total = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (y[order[k].second]) {
      hits += 1;
      total += hits / double(k + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return total / hits;
}

struct Counts {
  double tp = 0, fp = 0, fn = 0;
};

// Confusion-matrix oracle for the thresholded or top-k rule.
inline PrfSuite prf_oracle(const EvalBatch& b, bool top_k) {
  std::vector<Counts> per(b.classes);
  for (std::size_t n = 0; n < b.samples; ++n) {
    std::vector<std::size_t> idx(b.classes);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](auto i, auto j) { return b.score(n, i) > b.score(n, j); });
    for (std::size_t c = 0; c < b.classes; ++c) {
      bool predicted;
      if (top_k) {
        predicted = std::find(idx.begin(), idx.begin() + std::min<std::size_t>(3, b.classes), c) !=
                    idx.begin() + std::min<std::size_t>(3, b.classes);
      } else {
        predicted = b.score(n, c) > 0.0;
      }
      const bool y = b.label(n, c);
      if (predicted && y) per[c].tp++;
      if (predicted && !y) per[c].fp++;
      if (!predicted && y) per[c].fn++;
    }
  }
  PrfSuite s;
  double sp = 0, sr = 0, k = 0;
  Counts all;
  for (const auto& c : per) {
    all.tp += c.tp;
    all.fp += c.fp;
    all.fn += c.fn;
    if (c.tp + c.fn == 0) continue;
    k += 1;
    sp += (c.tp + c.fp) > 0 ? c.tp / (c.tp + c.fp) : 0.0;
    sr += c.tp / (c.tp + c.fn);
  }
  auto harmonic = [](double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; };
  if (k > 0) {
    s.cp = sp / k;
    s.cr = sr / k;
  }
  s.cf1 = harmonic(s.cp, s.cr);
  s.op = all.tp + all.fp > 0 ? all.tp / (all.tp + all.fp) : 0.0;
  s.orr = all.tp + all.fn > 0 ? all.tp / (all.tp + all.fn) : 0.0;
  s.of1 = harmonic(s.op, s.orr);
  return s;
}

}  // namespace addgcn::oracle
