#include "addgcn/sam.hpp"

namespace addgcn {

std::string to_string(MapMode mode) {
  switch (mode) {
    case MapMode::cls_then_gmp: return "cls_then_gmp";
    case MapMode::gap_then_cls: return "gap_then_cls";
    case MapMode::gmp_then_cls: return "gmp_then_cls";
  }
  throw ConfigError("unknown map mode");
}

MapMode parse_map_mode(const std::string& name) {
  if (name == "cls_then_gmp") return MapMode::cls_then_gmp;
  if (name == "gap_then_cls") return MapMode::gap_then_cls;
  if (name == "gmp_then_cls") return MapMode::gmp_then_cls;
  throw ConfigError("unknown map mode '" + name + "'");
}

void SamConfig::validate() const {
  if (num_classes < 2) throw ConfigError("SAM needs at least 2 classes");
  if (in_channels < 1 || repr_channels < 1) throw ConfigError("SAM channel counts must be positive");
  switch (map_mode) {
    case MapMode::cls_then_gmp:
    case MapMode::gap_then_cls:
    case MapMode::gmp_then_cls: break;
    default: throw ConfigError("unknown map mode");
  }
}

SamParams init_sam(const SamConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  SamParams p;
  p.transform = make_linear(cfg.repr_channels, cfg.in_channels, cfg.use_bias, rng);
  p.classifier = make_linear(cfg.num_classes, cfg.in_channels, cfg.use_bias, rng);
  return p;
}

Tensor transform_features(const Tensor& x, const Linear& transform, float slope) {
  return leaky_relu(conv1x1(x, transform.weight, transform.bias), slope);
}

ActivationMaps activation_maps(const Tensor& x, const Linear& classifier, const SamConfig& cfg) {
  // Per-position class responses; in the CAM modes this is the classifier
  // weights convolved over X.
  Tensor responses = conv1x1(x, classifier.weight, classifier.bias);
  Tensor maps = cfg.sigmoid_maps ? sigmoid(responses) : responses;
  switch (cfg.map_mode) {
    case MapMode::cls_then_gmp:
      return {maps, global_pool(responses, cfg.score_pool)};
    case MapMode::gap_then_cls:
      return {maps, classifier(global_pool(x, PoolMode::avg))};
    case MapMode::gmp_then_cls:
      return {maps, classifier(global_pool(x, PoolMode::max))};
  }
  throw ConfigError("unknown map mode");
}

Tensor category_representations(const Tensor& maps, const Tensor& transformed) {
  if (maps.rank() != 4 || transformed.rank() != 4 || maps.dim(0) != transformed.dim(0) ||
      maps.dim(2) != transformed.dim(2) || maps.dim(3) != transformed.dim(3)) {
    throw DimensionError("category_representations: maps " + to_string(maps.shape()) +
                         " and features " + to_string(transformed.shape()) +
                         " disagree on batch or spatial extents");
  }
  const std::size_t batch = maps.dim(0), spatial = maps.dim(2) * maps.dim(3);
  auto m = reshape(maps, {batch, maps.dim(1), spatial});
  auto xt = transpose(reshape(transformed, {batch, transformed.dim(1), spatial}));
  return matmul(m, xt);
}

SamOutput sam_forward(const Tensor& x, const SamParams& params, const SamConfig& cfg) {
  if (x.rank() != 4 || x.dim(1) != cfg.in_channels) {
    throw DimensionError("SAM: input " + to_string(x.shape()) + " does not have " +
                         std::to_string(cfg.in_channels) + " channels");
  }
  auto am = activation_maps(x, params.classifier, cfg);
  auto xp = transform_features(x, params.transform, cfg.slope);
  return {am.maps, category_representations(am.maps, xp), am.scores};
}

}  // namespace addgcn
