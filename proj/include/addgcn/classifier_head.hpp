#pragma once

#include <string>
#include <vector>

#include "addgcn/layers.hpp"

namespace addgcn {

/// How Z becomes relation scores. Bi keeps one binary classifier per class;
/// the others pool Z over classes first and apply a shared C-way classifier.
enum class Aggregation { Bi, Sum, Avg, Max };

std::string to_string(Aggregation mode);
Aggregation parse_aggregation(const std::string& name);
const std::vector<Aggregation>& all_aggregations();

struct ScoreBundle {
  Tensor relation;   // s_r [B,C]
  Tensor attention;  // s_m [B,C]
  Tensor fused;      // s   [B,C]
};

/// `classifier.weight` is [C,D2] in both families: row c is class c's binary
/// classifier for Bi, or the shared classifier's output row c otherwise.
Tensor relation_scores(const Tensor& z, Aggregation mode, const Linear& classifier);

/// Elementwise mean of the two logit vectors.
Tensor fuse_scores(const Tensor& relation, const Tensor& attention);

/// Negative log-likelihood of independent Bernoulli labels given logits,
/// summed over classes and averaged over the batch. Computed as
/// softplus(s) - y*s so it stays finite for every finite logit.
Tensor bce_loss(const Tensor& scores, const Tensor& labels);

}  // namespace addgcn
