#pragma once

#include <optional>
#include <random>
#include <string>

#include "addgcn/layers.hpp"

// Graph propagation over the class nodes: a static graph shared by all
// inputs and a dynamic graph estimated per input.

namespace addgcn {

enum class GraphMode { S, D, P_add, P_mul, P_cat, D_then_S, S_then_D };

std::string to_string(GraphMode mode);
GraphMode parse_graph_mode(const std::string& name);
/// All seven combinations, in ablation-table order.
const std::vector<GraphMode>& all_graph_modes();

struct GraphHeadConfig {
  GraphMode mode = GraphMode::S_then_D;
  std::size_t num_classes = 8;
  std::size_t repr_channels = 64;  // D'
  std::size_t hidden = 64;         // D1
  std::size_t out = 64;            // D2
  float slope = 0.2f;
  bool use_bias = true;
  /// Adds the identity to the random static adjacency at initialization.
  bool static_identity_init = false;

  void validate() const;
};

struct StaticGraphLayer {
  Tensor adjacency;  // A_s [C,C], unconstrained
  Tensor weight;     // W_s [in,out]
  std::optional<Tensor> bias;
};

struct DynamicGraphLayer {
  Linear global_conv;     // [in,in], applied to the node mean
  Linear adjacency_conv;  // W_A [C, 2*in]
  Tensor weight;          // W_d [in,out]
  std::optional<Tensor> bias;
  /// Test hook: when set, replaces the estimated adjacency ([C,C], shared).
  std::optional<Tensor> adjacency_override;
};

StaticGraphLayer make_static_layer(std::size_t classes, std::size_t in, std::size_t out,
                                   bool with_bias, bool identity_init, std::mt19937_64& rng);
DynamicGraphLayer make_dynamic_layer(std::size_t classes, std::size_t in, std::size_t out,
                                     bool with_bias, std::mt19937_64& rng);

/// Layers required by one graph mode. Unused slots stay empty.
struct GraphLayers {
  std::optional<StaticGraphLayer> static_layer;
  std::optional<DynamicGraphLayer> dynamic_layer;
  std::optional<Linear> fusion;  // P_cat only: [D2, 2*D2]
};

GraphLayers init_graph_layers(const GraphHeadConfig& cfg, std::mt19937_64& rng);

/// H = LeakyReLU(A_s V W_s), per sample, A_s shared over the batch.
Tensor static_gcn(const Tensor& v, const StaticGraphLayer& layer, float slope = 0.2f);

/// h_g = conv(mean of H over the class axis)  ->  [B,D1]
Tensor global_context(const Tensor& h, const Linear& conv);

/// A_d = Sigmoid(W_A H'), H' = [(h_1;h_g),...,(h_C;h_g)]  ->  [B,C,C]
Tensor dynamic_adjacency(const Tensor& h, const DynamicGraphLayer& layer);

struct DynamicOutput {
  Tensor z;
  Tensor adjacency;
};

/// Z = LeakyReLU(A_d H W_d)
DynamicOutput dynamic_gcn_with_adjacency(const Tensor& h, const DynamicGraphLayer& layer,
                                         float slope = 0.2f);
Tensor dynamic_gcn(const Tensor& h, const DynamicGraphLayer& layer, float slope = 0.2f);

struct GraphOutput {
  Tensor z;                             // [B,C,D2]
  std::optional<Tensor> adjacency;      // A_d when a dynamic graph ran
};

GraphOutput graph_head(const Tensor& v, const GraphHeadConfig& cfg, const GraphLayers& layers);

}  // namespace addgcn
