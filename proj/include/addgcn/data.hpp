#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "addgcn/tensor.hpp"

namespace addgcn {

/// Parameters of the planted-pattern generator.
///
/// Every present class adds amplitude * prototype over a random block of the
/// map; label sets follow a pairwise model matched to `cooccurrence`, whose
/// diagonal holds marginal class probabilities and whose off-diagonal entries
/// hold joint probabilities P(both present).
struct SyntheticSpec {
  std::size_t classes = 8;
  std::size_t channels = 32;
  std::size_t height = 8;
  std::size_t width = 8;
  std::vector<float> prototypes;     // classes x channels, unit rows
  std::vector<double> cooccurrence;  // classes x classes, symmetric
  double noise_sigma = 0.5;
  double amplitude = 2.0;
  std::size_t block_h = 2;
  std::size_t block_w = 2;
  std::size_t samples = 2000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct CooccurrencePair {
  std::size_t a = 0, b = 0;
  double joint = 0.0;
};

/// Independent classes with the given marginal, except for the listed pairs.
std::vector<double> make_cooccurrence(std::size_t classes, double marginal,
                                      const std::vector<CooccurrencePair>& pairs = {});

/// Random unit vectors with every pairwise angle above 10 degrees.
std::vector<float> make_prototypes(std::size_t classes, std::size_t channels, std::uint64_t seed);

/// Spec with prototypes and an independent co-occurrence model filled in.
SyntheticSpec make_synthetic_spec(std::size_t classes, std::size_t channels, std::size_t height,
                                  std::size_t width, double marginal, std::uint64_t seed);

/// Pairwise log-linear label model over non-empty label sets:
///   p(y) ∝ exp(sum_i field_i y_i + sum_{i<j} coupling_ij y_i y_j), y != 0
struct LabelModel {
  std::size_t classes = 0;
  std::vector<double> field;
  std::vector<double> coupling;  // classes x classes, symmetric, zero diagonal

  /// Exact moments E[y_i y_j] (diagonal: E[y_i]) by enumeration.
  std::vector<double> moments() const;
};

/// Moment-matches a LabelModel to a co-occurrence matrix (up to 12 classes).
LabelModel fit_label_model(std::size_t classes, const std::vector<double>& cooccurrence);

/// Draws a label set with 10 Gibbs sweeps.
std::vector<std::uint8_t> sample_labels(const LabelModel& model, std::uint64_t seed);

struct FeatureMapBatch {
  Tensor x;  // [B,D,H,W]
  Tensor y;  // [B,C], 0/1
  std::vector<std::string> ids;
};

/// In-memory dataset; channel-first feature maps.
struct Dataset {
  std::size_t classes = 0, channels = 0, height = 0, width = 0;
  std::vector<float> features;       // N x D x H x W
  std::vector<std::uint8_t> labels;  // N x C
  std::vector<std::string> ids;

  std::size_t size() const { return ids.size(); }
  std::size_t sample_numel() const { return channels * height * width; }
  FeatureMapBatch batch(std::span<const std::size_t> indices) const;
  FeatureMapBatch batch(std::size_t begin, std::size_t end) const;
  /// Index of the sample with this id.
  std::size_t find(const std::string& id) const;
};

Dataset generate(const SyntheticSpec& spec);
/// Inverts the dependence of one class pair: its pairwise coupling is reflected
/// about the coupling the pair would have if it were independent.
Dataset make_biased_eval_split(const SyntheticSpec& spec, std::pair<std::size_t, std::size_t> flip);
/// The label model the flipped split samples from.
LabelModel flipped_label_model(const SyntheticSpec& spec, std::pair<std::size_t, std::size_t> flip);

/// Writes `dir/index.json` and one ADGT file per sample in H x W x D layout.
std::filesystem::path save_feature_dataset(const Dataset& data, const std::filesystem::path& dir);
/// Reads an index written by save_feature_dataset (or by an external tool).
Dataset load_feature_dataset(const std::filesystem::path& index_path);

}  // namespace addgcn
