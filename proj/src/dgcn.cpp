#include "addgcn/dgcn.hpp"

namespace addgcn {

std::string to_string(GraphMode mode) {
  switch (mode) {
    case GraphMode::S: return "S";
    case GraphMode::D: return "D";
    case GraphMode::P_add: return "P_add";
    case GraphMode::P_mul: return "P_mul";
    case GraphMode::P_cat: return "P_cat";
    case GraphMode::D_then_S: return "D_then_S";
    case GraphMode::S_then_D: return "S_then_D";
  }
  throw ConfigError("unknown graph mode");
}

GraphMode parse_graph_mode(const std::string& name) {
  for (auto mode : all_graph_modes()) {
    if (to_string(mode) == name) return mode;
  }
  throw ConfigError("unknown graph mode '" + name + "'");
}

const std::vector<GraphMode>& all_graph_modes() {
  static const std::vector<GraphMode> modes{GraphMode::S,     GraphMode::D,        GraphMode::P_add,
                                            GraphMode::P_mul, GraphMode::P_cat,    GraphMode::D_then_S,
                                            GraphMode::S_then_D};
  return modes;
}

void GraphHeadConfig::validate() const {
  (void)to_string(mode);
  if (num_classes < 1 || repr_channels < 1 || hidden < 1 || out < 1) {
    throw ConfigError("graph head dimensions must be positive");
  }
}

StaticGraphLayer make_static_layer(std::size_t classes, std::size_t in, std::size_t out,
                                   bool with_bias, bool identity_init, std::mt19937_64& rng) {
  StaticGraphLayer layer;
  layer.adjacency = init_parameter({classes, classes}, classes, rng);
  if (identity_init) {
    auto a = layer.adjacency.mutable_data();
    for (std::size_t i = 0; i < classes; ++i) a[i * classes + i] += 1.0f;
  }
  layer.weight = init_parameter({in, out}, in, rng);
  if (with_bias) layer.bias = init_parameter({out}, in, rng);
  return layer;
}

DynamicGraphLayer make_dynamic_layer(std::size_t classes, std::size_t in, std::size_t out,
                                     bool with_bias, std::mt19937_64& rng) {
  DynamicGraphLayer layer;
  layer.global_conv = make_linear(in, in, with_bias, rng);
  layer.adjacency_conv = make_linear(classes, 2 * in, with_bias, rng);
  layer.weight = init_parameter({in, out}, in, rng);
  if (with_bias) layer.bias = init_parameter({out}, in, rng);
  return layer;
}

GraphLayers init_graph_layers(const GraphHeadConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  const auto c = cfg.num_classes;
  const bool b = cfg.use_bias;
  const bool eye = cfg.static_identity_init;
  GraphLayers layers;
  switch (cfg.mode) {
    case GraphMode::S:
      layers.static_layer = make_static_layer(c, cfg.repr_channels, cfg.out, b, eye, rng);
      break;
    case GraphMode::D:
      layers.dynamic_layer = make_dynamic_layer(c, cfg.repr_channels, cfg.out, b, rng);
      break;
    case GraphMode::S_then_D:
      layers.static_layer = make_static_layer(c, cfg.repr_channels, cfg.hidden, b, eye, rng);
      layers.dynamic_layer = make_dynamic_layer(c, cfg.hidden, cfg.out, b, rng);
      break;
    case GraphMode::D_then_S:
      layers.dynamic_layer = make_dynamic_layer(c, cfg.repr_channels, cfg.hidden, b, rng);
      layers.static_layer = make_static_layer(c, cfg.hidden, cfg.out, b, eye, rng);
      break;
    case GraphMode::P_add:
    case GraphMode::P_mul:
    case GraphMode::P_cat:
      layers.static_layer = make_static_layer(c, cfg.repr_channels, cfg.out, b, eye, rng);
      layers.dynamic_layer = make_dynamic_layer(c, cfg.repr_channels, cfg.out, b, rng);
      if (cfg.mode == GraphMode::P_cat) layers.fusion = make_linear(cfg.out, 2 * cfg.out, b, rng);
      break;
  }
  return layers;
}

namespace {

void require_nodes(const Tensor& v, std::size_t classes, std::size_t channels, const char* op) {
  if (v.rank() != 3 || v.dim(1) != classes || v.dim(2) != channels) {
    throw DimensionError(std::string(op) + ": node features " + to_string(v.shape()) +
                         " do not match [B," + std::to_string(classes) + "," +
                         std::to_string(channels) + "]");
  }
}

Tensor state_update(const Tensor& propagated, const Tensor& weight, const std::optional<Tensor>& bias,
                    float slope) {
  auto y = matmul(propagated, weight);
  if (bias) y = add_bias(y, *bias, 2);
  return leaky_relu(y, slope);
}

}  // namespace

Tensor static_gcn(const Tensor& v, const StaticGraphLayer& layer, float slope) {
  require_nodes(v, layer.adjacency.dim(0), layer.weight.dim(0), "static_gcn");
  return state_update(matmul(layer.adjacency, v), layer.weight, layer.bias, slope);
}

Tensor global_context(const Tensor& h, const Linear& conv) {
  if (h.rank() != 3) throw DimensionError("global_context: expects [B,C,D], got " + to_string(h.shape()));
  return conv(mean(h, 1));
}

Tensor dynamic_adjacency(const Tensor& h, const DynamicGraphLayer& layer) {
  const std::size_t classes = layer.adjacency_conv.weight.dim(0);
  require_nodes(h, classes, layer.weight.dim(0), "dynamic_adjacency");
  auto hg = expand(global_context(h, layer.global_conv), 1, h.dim(1));
  auto h_cat = concat({h, hg}, 2);  // [B,C,2D1], node-major
  // 1-wide conv over node positions: [C,2D1] x [B,2D1,C] -> [B,C(out),C(pos)]
  auto logits = matmul(layer.adjacency_conv.weight, transpose(h_cat));
  if (layer.adjacency_conv.bias) logits = add_bias(logits, *layer.adjacency_conv.bias, 1);
  return sigmoid(logits);
}

DynamicOutput dynamic_gcn_with_adjacency(const Tensor& h, const DynamicGraphLayer& layer,
                                         float slope) {
  require_nodes(h, layer.adjacency_conv.weight.dim(0), layer.weight.dim(0), "dynamic_gcn");
  Tensor adjacency = layer.adjacency_override ? expand(*layer.adjacency_override, 0, h.dim(0))
                                              : dynamic_adjacency(h, layer);
  return {state_update(matmul(adjacency, h), layer.weight, layer.bias, slope), adjacency};
}

Tensor dynamic_gcn(const Tensor& h, const DynamicGraphLayer& layer, float slope) {
  return dynamic_gcn_with_adjacency(h, layer, slope).z;
}

GraphOutput graph_head(const Tensor& v, const GraphHeadConfig& cfg, const GraphLayers& layers) {
  auto need_static = [&]() -> const StaticGraphLayer& {
    if (!layers.static_layer) throw ConfigError(to_string(cfg.mode) + " needs a static layer");
    return *layers.static_layer;
  };
  auto need_dynamic = [&]() -> const DynamicGraphLayer& {
    if (!layers.dynamic_layer) throw ConfigError(to_string(cfg.mode) + " needs a dynamic layer");
    return *layers.dynamic_layer;
  };
  const float slope = cfg.slope;
  switch (cfg.mode) {
    case GraphMode::S:
      return {static_gcn(v, need_static(), slope), std::nullopt};
    case GraphMode::D: {
      auto d = dynamic_gcn_with_adjacency(v, need_dynamic(), slope);
      return {d.z, d.adjacency};
    }
    case GraphMode::S_then_D: {
      auto d = dynamic_gcn_with_adjacency(static_gcn(v, need_static(), slope), need_dynamic(), slope);
      return {d.z, d.adjacency};
    }
    case GraphMode::D_then_S: {
      auto d = dynamic_gcn_with_adjacency(v, need_dynamic(), slope);
      return {static_gcn(d.z, need_static(), slope), d.adjacency};
    }
    case GraphMode::P_add:
    case GraphMode::P_mul:
    case GraphMode::P_cat: {
      auto s = static_gcn(v, need_static(), slope);
      auto d = dynamic_gcn_with_adjacency(v, need_dynamic(), slope);
      if (cfg.mode == GraphMode::P_add) return {add(s, d.z), d.adjacency};
      if (cfg.mode == GraphMode::P_mul) return {mul(s, d.z), d.adjacency};
      if (!layers.fusion) throw ConfigError("P_cat needs a fusion projection");
      return {(*layers.fusion)(concat({s, d.z}, 2)), d.adjacency};
    }
  }
  throw ConfigError("unknown graph mode");
}

}  // namespace addgcn
