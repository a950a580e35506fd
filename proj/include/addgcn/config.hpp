#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "addgcn/data.hpp"
#include "addgcn/metrics.hpp"
#include "addgcn/model.hpp"

namespace addgcn {

/// Where training and evaluation data come from. With `train_index` set the
/// feature maps are read from disk; otherwise they are synthesized.
struct DataConfig {
  std::string train_index;
  std::string eval_index;
  std::size_t train_samples = 2000;
  std::size_t eval_samples = 500;
  std::size_t height = 8;
  std::size_t width = 8;
  double marginal = 0.3;
  std::vector<CooccurrencePair> pairs;
  double noise_sigma = 0.5;
  double amplitude = 2.0;
  std::size_t block_h = 2;
  std::size_t block_w = 2;
  std::uint64_t seed = 7;
  /// Evaluate on a split whose co-occurrence for this pair is inverted.
  std::optional<std::pair<std::size_t, std::size_t>> eval_flip;
};

struct TrainConfig {
  ModelConfig model;
  double lr_head = 0.5;
  double lr_features = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t epochs = 50;
  std::vector<std::size_t> lr_steps{30, 40};
  double lr_gamma = 0.1;
  std::size_t batch_size = 18;
  std::uint64_t seed = 0;
  DataConfig data;
  MetricsOptions metrics;

  void validate() const;
};

/// Parses flat `key = value` text; `#` starts a comment. Unknown keys and
/// invalid values are errors.
TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::filesystem::path& path);
/// Canonical text form: every key, fixed order, round-trips through parse_config.
std::string serialize_config(const TrainConfig& cfg);
/// FNV-1a over the canonical text.
std::uint64_t config_hash(const TrainConfig& cfg);

SyntheticSpec synthetic_spec(const TrainConfig& cfg, std::size_t samples, std::uint64_t split_seed);

struct DataSplits {
  Dataset train;
  Dataset eval;
};

/// Train/eval data described by the config. Synthetic splits share prototypes
/// and label model and differ only in their sample seed.
DataSplits make_datasets(const TrainConfig& cfg);

}  // namespace addgcn
