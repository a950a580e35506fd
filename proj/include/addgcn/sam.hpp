#pragma once

#include <random>
#include <string>

#include "addgcn/layers.hpp"

// Semantic attention: decomposes a feature map into one representation per
// class, pooled under class-specific activation maps.

namespace addgcn {

/// How activation maps and attention scores are produced.
///  - cls_then_gmp: classify every position (1x1 conv), then max-pool the responses.
///  - gap_then_cls / gmp_then_cls: classical CAM; pool first, classify the pooled
///    vector, and reuse the classifier weights over the map.
enum class MapMode { cls_then_gmp, gap_then_cls, gmp_then_cls };

std::string to_string(MapMode mode);
MapMode parse_map_mode(const std::string& name);

struct SamConfig {
  std::size_t num_classes = 8;
  std::size_t in_channels = 32;
  std::size_t repr_channels = 64;
  MapMode map_mode = MapMode::cls_then_gmp;
  bool sigmoid_maps = true;
  /// Spatial pooling of the per-position responses in cls_then_gmp mode.
  PoolMode score_pool = PoolMode::max;
  float slope = 0.2f;
  bool use_bias = true;

  void validate() const;
};

struct SamParams {
  Linear transform;   // [D', D]
  Linear classifier;  // [C, D]
};

SamParams init_sam(const SamConfig& cfg, std::mt19937_64& rng);

struct SamOutput {
  Tensor maps;             // M [B,C,H,W]
  Tensor representations;  // V [B,C,D']
  Tensor scores;           // s_m [B,C], logits
};

struct ActivationMaps {
  Tensor maps;
  Tensor scores;
};

/// X -> X' as a 1x1 convolution followed by LeakyReLU.
Tensor transform_features(const Tensor& x, const Linear& transform, float slope);

ActivationMaps activation_maps(const Tensor& x, const Linear& classifier, const SamConfig& cfg);

/// v_c[b] = sum_{i,j} M[b,c,i,j] * X'[b,:,i,j]  ->  [B,C,D']
Tensor category_representations(const Tensor& maps, const Tensor& transformed);

SamOutput sam_forward(const Tensor& x, const SamParams& params, const SamConfig& cfg);

}  // namespace addgcn
