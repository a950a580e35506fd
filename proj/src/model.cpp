#include "addgcn/model.hpp"

#include <random>

namespace addgcn {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::add_gcn: return "add_gcn";
    case ModelKind::gap_linear: return "gap_linear";
  }
  throw ConfigError("unknown model kind");
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "add_gcn") return ModelKind::add_gcn;
  if (name == "gap_linear") return ModelKind::gap_linear;
  throw ConfigError("unknown model kind '" + name + "'");
}

SamConfig ModelConfig::sam() const {
  SamConfig s;
  s.num_classes = classes;
  s.in_channels = in_channels;
  s.repr_channels = repr_channels;
  s.map_mode = map_mode;
  s.sigmoid_maps = sigmoid_maps;
  s.score_pool = score_pool;
  s.slope = slope;
  s.use_bias = use_bias;
  return s;
}

GraphHeadConfig ModelConfig::graph() const {
  GraphHeadConfig g;
  g.mode = graph_mode;
  g.num_classes = classes;
  g.repr_channels = repr_channels;
  g.hidden = hidden;
  g.out = out;
  g.slope = slope;
  g.use_bias = use_bias;
  g.static_identity_init = static_identity_init;
  return g;
}

void ModelConfig::validate() const {
  (void)to_string(kind);
  (void)to_string(aggregation);
  sam().validate();
  graph().validate();
}

AddGcnModel::AddGcnModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  sam_ = init_sam(cfg_.sam(), rng);
  if (cfg_.kind == ModelKind::add_gcn) {
    graph_ = init_graph_layers(cfg_.graph(), rng);
    classifier_ = make_linear(cfg_.classes, cfg_.out, cfg_.use_bias, rng);
  } else {
    classifier_ = make_linear(cfg_.classes, cfg_.repr_channels, cfg_.use_bias, rng);
  }
}

ModelOutput AddGcnModel::forward(const Tensor& x) const {
  ModelOutput out;
  if (cfg_.kind == ModelKind::gap_linear) {
    auto xp = transform_features(x, sam_.transform, cfg_.slope);
    auto s = classifier_(global_pool(xp, PoolMode::avg));
    out.scores = {s, Tensor{}, s};
    return out;
  }
  out.sam = sam_forward(x, sam_, cfg_.sam());
  out.graph = graph_head(out.sam->representations, cfg_.graph(), graph_);
  auto relation = relation_scores(out.graph->z, cfg_.aggregation, classifier_);
  out.scores = {relation, out.sam->scores, fuse_scores(relation, out.sam->scores)};
  return out;
}

std::vector<NamedParameter> AddGcnModel::parameters() const {
  std::vector<NamedParameter> ps;
  auto add = [&](std::string name, const Tensor& t, ParamGroup g) { ps.push_back({std::move(name), t, g}); };
  auto add_linear = [&](const std::string& name, const Linear& l, ParamGroup g) {
    add(name + ".weight", l.weight, g);
    if (l.bias) add(name + ".bias", *l.bias, g);
  };
  add_linear("sam.transform", sam_.transform, ParamGroup::features);
  if (cfg_.kind == ModelKind::gap_linear) {
    add_linear("baseline.classifier", classifier_, ParamGroup::head);
    return ps;
  }
  add_linear("sam.classifier", sam_.classifier, ParamGroup::head);
  if (graph_.static_layer) {
    const auto& s = *graph_.static_layer;
    add("graph.static.adjacency", s.adjacency, ParamGroup::head);
    add("graph.static.weight", s.weight, ParamGroup::head);
    if (s.bias) add("graph.static.bias", *s.bias, ParamGroup::head);
  }
  if (graph_.dynamic_layer) {
    const auto& d = *graph_.dynamic_layer;
    add_linear("graph.dynamic.global", d.global_conv, ParamGroup::head);
    add_linear("graph.dynamic.adjacency", d.adjacency_conv, ParamGroup::head);
    add("graph.dynamic.weight", d.weight, ParamGroup::head);
    if (d.bias) add("graph.dynamic.bias", *d.bias, ParamGroup::head);
  }
  if (graph_.fusion) add_linear("graph.fusion", *graph_.fusion, ParamGroup::head);
  add_linear("head.classifier", classifier_, ParamGroup::head);
  return ps;
}

}  // namespace addgcn
