#include "addgcn/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

namespace addgcn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string part;
  std::istringstream is(s);
  while (std::getline(is, part, sep)) {
    part = trim(part);
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    auto n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

using Setter = std::function<void(TrainConfig&, const std::string&, const std::string&)>;
using Getter = std::function<std::string(const TrainConfig&)>;

struct Field {
  const char* key;
  Setter set;
  Getter get;
};

template <typename T>
Field size_field(const char* key, T TrainConfig::*section, std::size_t T::*member) {
  return {key, [=](TrainConfig& c, const std::string& k, const std::string& v) { (c.*section).*member = to_uint(k, v); },
          [=](const TrainConfig& c) { return std::to_string((c.*section).*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto m = &TrainConfig::model;
    auto d = &TrainConfig::data;
    f.push_back({"model", [](TrainConfig& c, auto&, auto& v) { c.model.kind = parse_model_kind(v); },
                 [](const TrainConfig& c) { return to_string(c.model.kind); }});
    f.push_back(size_field("classes", m, &ModelConfig::classes));
    f.push_back(size_field("channels", m, &ModelConfig::in_channels));
    f.push_back(size_field("repr_channels", m, &ModelConfig::repr_channels));
    f.push_back(size_field("hidden", m, &ModelConfig::hidden));
    f.push_back(size_field("out", m, &ModelConfig::out));
    f.push_back({"graph_mode", [](TrainConfig& c, auto&, auto& v) { c.model.graph_mode = parse_graph_mode(v); },
                 [](const TrainConfig& c) { return to_string(c.model.graph_mode); }});
    f.push_back({"aggregation", [](TrainConfig& c, auto&, auto& v) { c.model.aggregation = parse_aggregation(v); },
                 [](const TrainConfig& c) { return to_string(c.model.aggregation); }});
    f.push_back({"map_mode", [](TrainConfig& c, auto&, auto& v) { c.model.map_mode = parse_map_mode(v); },
                 [](const TrainConfig& c) { return to_string(c.model.map_mode); }});
    f.push_back({"sigmoid_maps", [](TrainConfig& c, auto& k, auto& v) { c.model.sigmoid_maps = to_bool(k, v); },
                 [](const TrainConfig& c) { return std::string(c.model.sigmoid_maps ? "true" : "false"); }});
    f.push_back({"score_pool",
                 [](TrainConfig& c, auto& k, auto& v) {
                   if (v == "max") c.model.score_pool = PoolMode::max;
                   else if (v == "avg") c.model.score_pool = PoolMode::avg;
                   else throw ConfigError("config: '" + k + "' expects max or avg");
                 },
                 [](const TrainConfig& c) { return std::string(c.model.score_pool == PoolMode::max ? "max" : "avg"); }});
    f.push_back({"bias", [](TrainConfig& c, auto& k, auto& v) { c.model.use_bias = to_bool(k, v); },
                 [](const TrainConfig& c) { return std::string(c.model.use_bias ? "true" : "false"); }});
    f.push_back({"slope", [](TrainConfig& c, auto& k, auto& v) { c.model.slope = static_cast<float>(to_double(k, v)); },
                 [](const TrainConfig& c) { return fmt_double(c.model.slope); }});
    f.push_back({"static_identity_init",
                 [](TrainConfig& c, auto& k, auto& v) { c.model.static_identity_init = to_bool(k, v); },
                 [](const TrainConfig& c) { return std::string(c.model.static_identity_init ? "true" : "false"); }});
    auto real = [](const char* key, double TrainConfig::*member) {
      return Field{key, [=](TrainConfig& c, const std::string& k, const std::string& v) { c.*member = to_double(k, v); },
                   [=](const TrainConfig& c) { return fmt_double(c.*member); }};
    };
    f.push_back(real("lr_head", &TrainConfig::lr_head));
    f.push_back(real("lr_features", &TrainConfig::lr_features));
    f.push_back(real("momentum", &TrainConfig::momentum));
    f.push_back(real("weight_decay", &TrainConfig::weight_decay));
    f.push_back({"epochs", [](TrainConfig& c, auto& k, auto& v) { c.epochs = to_uint(k, v); },
                 [](const TrainConfig& c) { return std::to_string(c.epochs); }});
    f.push_back({"lr_steps",
                 [](TrainConfig& c, auto& k, auto& v) {
                   c.lr_steps.clear();
                   for (const auto& s : split(v, ',')) c.lr_steps.push_back(to_uint(k, s));
                 },
                 [](const TrainConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.lr_steps.size(); ++i) s += (i ? "," : "") + std::to_string(c.lr_steps[i]);
                   return s;
                 }});
    f.push_back(real("lr_gamma", &TrainConfig::lr_gamma));
    f.push_back({"batch_size", [](TrainConfig& c, auto& k, auto& v) { c.batch_size = to_uint(k, v); },
                 [](const TrainConfig& c) { return std::to_string(c.batch_size); }});
    f.push_back({"seed", [](TrainConfig& c, auto& k, auto& v) { c.seed = to_uint(k, v); },
                 [](const TrainConfig& c) { return std::to_string(c.seed); }});
    f.push_back({"train_index", [](TrainConfig& c, auto&, auto& v) { c.data.train_index = v; },
                 [](const TrainConfig& c) { return c.data.train_index; }});
    f.push_back({"eval_index", [](TrainConfig& c, auto&, auto& v) { c.data.eval_index = v; },
                 [](const TrainConfig& c) { return c.data.eval_index; }});
    f.push_back(size_field("train_samples", d, &DataConfig::train_samples));
    f.push_back(size_field("eval_samples", d, &DataConfig::eval_samples));
    f.push_back(size_field("height", d, &DataConfig::height));
    f.push_back(size_field("width", d, &DataConfig::width));
    f.push_back({"marginal", [](TrainConfig& c, auto& k, auto& v) { c.data.marginal = to_double(k, v); },
                 [](const TrainConfig& c) { return fmt_double(c.data.marginal); }});
    f.push_back({"cooccur",
                 [](TrainConfig& c, auto& k, auto& v) {
                   c.data.pairs.clear();
                   for (const auto& item : split(v, ',')) {
                     auto parts = split(item, ':');
                     if (parts.size() != 3) throw ConfigError("config: '" + k + "' expects a:b:joint items");
                     c.data.pairs.push_back({to_uint(k, parts[0]), to_uint(k, parts[1]), to_double(k, parts[2])});
                   }
                 },
                 [](const TrainConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.data.pairs.size(); ++i) {
                     const auto& p = c.data.pairs[i];
                     s += (i ? "," : "") + std::to_string(p.a) + ":" + std::to_string(p.b) + ":" + fmt_double(p.joint);
                   }
                   return s;
                 }});
    f.push_back({"noise_sigma", [](TrainConfig& c, auto& k, auto& v) { c.data.noise_sigma = to_double(k, v); },
                 [](const TrainConfig& c) { return fmt_double(c.data.noise_sigma); }});
    f.push_back({"amplitude", [](TrainConfig& c, auto& k, auto& v) { c.data.amplitude = to_double(k, v); },
                 [](const TrainConfig& c) { return fmt_double(c.data.amplitude); }});
    f.push_back(size_field("block_h", d, &DataConfig::block_h));
    f.push_back(size_field("block_w", d, &DataConfig::block_w));
    f.push_back({"data_seed", [](TrainConfig& c, auto& k, auto& v) { c.data.seed = to_uint(k, v); },
                 [](const TrainConfig& c) { return std::to_string(c.data.seed); }});
    f.push_back({"eval_flip",
                 [](TrainConfig& c, auto& k, auto& v) {
                   auto parts = split(v, ',');
                   if (parts.empty()) {
                     c.data.eval_flip.reset();
                     return;
                   }
                   if (parts.size() != 2) throw ConfigError("config: '" + k + "' expects a,b");
                   c.data.eval_flip = std::make_pair(to_uint(k, parts[0]), to_uint(k, parts[1]));
                 },
                 [](const TrainConfig& c) {
                   return c.data.eval_flip ? std::to_string(c.data.eval_flip->first) + "," +
                                                 std::to_string(c.data.eval_flip->second)
                                           : std::string();
                 }});
    f.push_back({"top3_threshold", [](TrainConfig& c, auto& k, auto& v) { c.metrics.top_k_threshold = to_bool(k, v); },
                 [](const TrainConfig& c) { return std::string(c.metrics.top_k_threshold ? "true" : "false"); }});
    return f;
  }();
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  model.validate();
  if (!(lr_head > 0.0) || !(lr_features > 0.0)) throw ConfigError("config: learning rates must be > 0");
  if (!(momentum >= 0.0) || !(weight_decay >= 0.0) || !(lr_gamma > 0.0)) {
    throw ConfigError("config: momentum, weight_decay must be >= 0 and lr_gamma > 0");
  }
  if (epochs == 0 || batch_size == 0) throw ConfigError("config: epochs and batch_size must be positive");
  for (std::size_t i = 0; i < lr_steps.size(); ++i) {
    if (lr_steps[i] >= epochs || (i && lr_steps[i] <= lr_steps[i - 1])) {
      throw ConfigError("config: lr_steps must be ascending and below epochs");
    }
  }
}

TrainConfig parse_config(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto& table = fields();
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    it->set(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

std::uint64_t config_hash(const TrainConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : serialize_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

SyntheticSpec synthetic_spec(const TrainConfig& cfg, std::size_t samples, std::uint64_t split_seed) {
  SyntheticSpec spec;
  spec.classes = cfg.model.classes;
  spec.channels = cfg.model.in_channels;
  spec.height = cfg.data.height;
  spec.width = cfg.data.width;
  spec.prototypes = make_prototypes(spec.classes, spec.channels, cfg.data.seed);
  spec.cooccurrence = make_cooccurrence(spec.classes, cfg.data.marginal, cfg.data.pairs);
  spec.noise_sigma = cfg.data.noise_sigma;
  spec.amplitude = cfg.data.amplitude;
  spec.block_h = cfg.data.block_h;
  spec.block_w = cfg.data.block_w;
  spec.samples = samples;
  spec.seed = split_seed;
  return spec;
}

DataSplits make_datasets(const TrainConfig& cfg) {
  DataSplits splits;
  if (!cfg.data.train_index.empty()) {
    splits.train = load_feature_dataset(cfg.data.train_index);
    splits.eval = cfg.data.eval_index.empty() ? splits.train : load_feature_dataset(cfg.data.eval_index);
  } else {
    const std::uint64_t base = cfg.data.seed * 1000003ULL;
    splits.train = generate(synthetic_spec(cfg, cfg.data.train_samples, base + 1));
    auto eval_spec = synthetic_spec(cfg, cfg.data.eval_samples, base + 2);
    splits.eval = cfg.data.eval_flip ? make_biased_eval_split(eval_spec, *cfg.data.eval_flip) : generate(eval_spec);
  }
  for (const auto* d : {&splits.train, &splits.eval}) {
    if (d->size() && (d->classes != cfg.model.classes || d->channels != cfg.model.in_channels)) {
      throw ConfigError("dataset has " + std::to_string(d->classes) + " classes / " + std::to_string(d->channels) +
                        " channels; config expects " + std::to_string(cfg.model.classes) + " / " +
                        std::to_string(cfg.model.in_channels));
    }
  }
  return splits;
}

}  // namespace addgcn
