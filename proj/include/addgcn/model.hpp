#pragma once

#include <optional>
#include <string>
#include <vector>

#include "addgcn/classifier_head.hpp"
#include "addgcn/dgcn.hpp"
#include "addgcn/sam.hpp"

namespace addgcn {

/// add_gcn: SAM -> graph head -> fused scores.
/// gap_linear: the baseline, a linear classifier on globally averaged X'.
enum class ModelKind { add_gcn, gap_linear };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);

/// Learning-rate group. `features` stands in for the backbone: the X -> X'
/// transform. Everything else is `head`.
enum class ParamGroup { head, features };

struct NamedParameter {
  std::string name;
  Tensor tensor;
  ParamGroup group;
};

struct ModelConfig {
  ModelKind kind = ModelKind::add_gcn;
  std::size_t classes = 8;
  std::size_t in_channels = 32;    // D
  std::size_t repr_channels = 64;  // D'
  std::size_t hidden = 64;         // D1
  std::size_t out = 64;            // D2
  GraphMode graph_mode = GraphMode::S_then_D;
  Aggregation aggregation = Aggregation::Bi;
  MapMode map_mode = MapMode::cls_then_gmp;
  bool sigmoid_maps = true;
  PoolMode score_pool = PoolMode::max;
  bool use_bias = true;
  float slope = 0.2f;
  bool static_identity_init = false;

  SamConfig sam() const;
  GraphHeadConfig graph() const;
  void validate() const;
};

struct ModelOutput {
  std::optional<SamOutput> sam;
  std::optional<GraphOutput> graph;
  ScoreBundle scores;
};

class AddGcnModel {
 public:
  AddGcnModel(ModelConfig cfg, std::uint64_t seed);

  ModelOutput forward(const Tensor& x) const;
  /// Fused logits only.
  Tensor logits(const Tensor& x) const { return forward(x).scores.fused; }

  /// Every trainable tensor, in a fixed order.
  std::vector<NamedParameter> parameters() const;

  const ModelConfig& config() const { return cfg_; }
  SamParams& sam_params() { return sam_; }
  GraphLayers& graph_layers() { return graph_; }
  Linear& classifier() { return classifier_; }

 private:
  ModelConfig cfg_;
  SamParams sam_;
  GraphLayers graph_;
  Linear classifier_;  // relation classifier, or the baseline classifier
};

}  // namespace addgcn
