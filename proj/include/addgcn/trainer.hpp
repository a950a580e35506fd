#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "addgcn/config.hpp"
#include "addgcn/optim.hpp"

namespace addgcn {

/// Parameters, optimizer state and progress of a training run.
struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::string config_text;
  std::uint32_t epoch = 0;  // completed epochs
  std::vector<std::pair<std::string, Tensor>> parameters;
  std::vector<std::pair<std::string, Tensor>> velocity;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint capture_checkpoint(const TrainConfig& cfg, const Sgd& sgd, std::uint32_t epoch);
/// Copies checkpoint state into `sgd` (and so into the model it updates).
/// Refuses a checkpoint written for a different configuration.
void restore_checkpoint(const Checkpoint& ckpt, const TrainConfig& cfg, Sgd& sgd);
/// Rebuilds the model a checkpoint describes, for evaluation.
AddGcnModel model_from_checkpoint(const Checkpoint& ckpt);

class NonFiniteLoss : public std::runtime_error {
 public:
  NonFiniteLoss(const std::string& what, std::size_t epoch, std::size_t batch)
      : std::runtime_error(what), epoch(epoch), batch(batch) {}
  std::size_t epoch;
  std::size_t batch;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  GroupRates rates;
  MetricsReport eval;
};

struct TrainOptions {
  /// Checkpoints, the CSV log and diagnostics go here; empty disables files.
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> resume_from;
  /// Stop after this many completed epochs (simulates an interrupted run).
  std::optional<std::size_t> stop_after;
  bool evaluate_each_epoch = true;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainResult {
  AddGcnModel model;
  std::vector<EpochLog> log;
  Checkpoint checkpoint;
  MetricsReport final_eval;
};

/// Deterministic sample order for one epoch.
std::vector<std::size_t> epoch_order(std::size_t samples, std::uint64_t seed, std::size_t epoch);

/// One pass over `order` in minibatches: forward, loss, backward, update.
/// Returns the mean batch loss. `epoch` only labels diagnostics.
double run_epoch(const AddGcnModel& model, Sgd& sgd, const Dataset& data, std::span<const std::size_t> order,
                 std::size_t batch_size, const GroupRates& rates, std::size_t epoch = 0,
                 const std::filesystem::path& diagnostics_dir = {});

/// Fused logits for every sample, without recording a tape.
EvalBatch predict(const AddGcnModel& model, const Dataset& data, std::size_t batch_size = 64);

double dataset_loss(const AddGcnModel& model, const Dataset& data, std::size_t batch_size = 64);

TrainResult train(const TrainConfig& cfg, const Dataset& train_data, const Dataset& eval_data,
                  const TrainOptions& opts = {});

enum class AblationAxis { graph_mode, aggregation, map_mode };
AblationAxis parse_ablation_axis(const std::string& name);

struct AblationRow {
  std::string variant;
  double final_loss = 0.0;
  MetricsReport report;
};

/// Trains one model per variant of `axis` with the same seed and data.
/// The graph_mode axis also includes the gap_linear baseline.
std::vector<AblationRow> ablate(const TrainConfig& base, AblationAxis axis, const Dataset& train_data,
                                const Dataset& eval_data);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace addgcn
