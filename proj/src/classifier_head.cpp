#include "addgcn/classifier_head.hpp"

namespace addgcn {

std::string to_string(Aggregation mode) {
  switch (mode) {
    case Aggregation::Bi: return "Bi";
    case Aggregation::Sum: return "Sum";
    case Aggregation::Avg: return "Avg";
    case Aggregation::Max: return "Max";
  }
  throw ConfigError("unknown aggregation mode");
}

Aggregation parse_aggregation(const std::string& name) {
  for (auto mode : all_aggregations()) {
    if (to_string(mode) == name) return mode;
  }
  throw ConfigError("unknown aggregation mode '" + name + "'");
}

const std::vector<Aggregation>& all_aggregations() {
  static const std::vector<Aggregation> modes{Aggregation::Sum, Aggregation::Avg, Aggregation::Max,
                                              Aggregation::Bi};
  return modes;
}

Tensor relation_scores(const Tensor& z, Aggregation mode, const Linear& classifier) {
  if (z.rank() != 3 || classifier.weight.rank() != 2 || classifier.weight.dim(1) != z.dim(2)) {
    throw DimensionError("relation_scores: Z " + to_string(z.shape()) + " vs classifier " +
                         to_string(classifier.weight.shape()));
  }
  switch (mode) {
    case Aggregation::Bi: {
      if (classifier.weight.dim(0) != z.dim(1)) {
        throw DimensionError("relation_scores: Bi needs one classifier row per class");
      }
      auto s = reduce(mul(z, expand(classifier.weight, 0, z.dim(0))), 2, Reduction::sum);
      return classifier.bias ? add_bias(s, *classifier.bias, 1) : s;
    }
    case Aggregation::Sum: return classifier(reduce(z, 1, Reduction::sum));
    case Aggregation::Avg: return classifier(reduce(z, 1, Reduction::mean));
    case Aggregation::Max: return classifier(reduce(z, 1, Reduction::max));
  }
  throw ConfigError("unknown aggregation mode");
}

Tensor fuse_scores(const Tensor& relation, const Tensor& attention) {
  if (relation.shape() != attention.shape()) {
    throw DimensionError("fuse_scores: " + to_string(relation.shape()) + " vs " +
                         to_string(attention.shape()));
  }
  return scale(add(relation, attention), 0.5f);
}

Tensor bce_loss(const Tensor& scores, const Tensor& labels) {
  if (scores.rank() != 2 || scores.shape() != labels.shape()) {
    throw DimensionError("bce_loss: scores " + to_string(scores.shape()) + " vs labels " +
                         to_string(labels.shape()));
  }
  for (float y : labels.data()) {
    if (y != 0.0f && y != 1.0f) throw ContractError("bce_loss: labels must be 0 or 1");
  }
  auto per_entry = sub(softplus(scores), mul(scores, labels));
  return scale(sum(per_entry), 1.0f / static_cast<float>(scores.dim(0)));
}

}  // namespace addgcn
