#include "addgcn/trainer.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "addgcn/tensor_io.hpp"

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace addgcn {

// ---------------------------------------------------------------------------
// Checkpoints: "ADGC" | u8 version | u64 config hash | u32 epoch |
// u32 len + config text | u32 count + (u32 len + name, ADGT tensor)* for the
// parameters, then the same for the momentum buffers.

namespace {

constexpr char kCheckpointMagic[4] = {'A', 'D', 'G', 'C'};
constexpr std::uint8_t kCheckpointVersion = 1;

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

std::string get_string(const std::vector<std::uint8_t>& in, std::size_t& offset) {
  const auto n = get_u32(in, offset);
  if (in.size() - offset < n) throw FormatError("checkpoint: truncated string at byte offset " + std::to_string(offset));
  std::string s(in.begin() + static_cast<std::ptrdiff_t>(offset), in.begin() + static_cast<std::ptrdiff_t>(offset + n));
  offset += n;
  return s;
}

void put_entries(std::vector<std::uint8_t>& out, const std::vector<std::pair<std::string, Tensor>>& entries) {
  put_u32(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    put_string(out, name);
    auto bytes = encode_tensor(t);
    out.insert(out.end(), bytes.begin(), bytes.end());
  }
}

std::vector<std::pair<std::string, Tensor>> get_entries(const std::vector<std::uint8_t>& in, std::size_t& offset) {
  const auto n = get_u32(in, offset);
  std::vector<std::pair<std::string, Tensor>> entries;
  for (std::uint32_t i = 0; i < n; ++i) {
    auto name = get_string(in, offset);
    entries.emplace_back(std::move(name), decode_tensor(in, offset));
  }
  return entries;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
  out.push_back(kCheckpointVersion);
  put_u64(out, ckpt.config_hash);
  put_u32(out, ckpt.epoch);
  put_string(out, ckpt.config_text);
  put_entries(out, ckpt.parameters);
  put_entries(out, ckpt.velocity);
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& in) {
  if (in.size() < 5 || std::string(in.begin(), in.begin() + 4) != "ADGC") {
    throw FormatError("checkpoint: bad magic");
  }
  if (in[4] != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(in[4]));
  std::size_t offset = 5;
  Checkpoint c;
  c.config_hash = get_u64(in, offset);
  c.epoch = get_u32(in, offset);
  c.config_text = get_string(in, offset);
  c.parameters = get_entries(in, offset);
  c.velocity = get_entries(in, offset);
  if (offset != in.size()) throw FormatError("checkpoint: trailing bytes at offset " + std::to_string(offset));
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Checkpoint capture_checkpoint(const TrainConfig& cfg, const Sgd& sgd, std::uint32_t epoch) {
  Checkpoint c;
  c.config_hash = config_hash(cfg);
  c.config_text = serialize_config(cfg);
  c.epoch = epoch;
  const auto& params = sgd.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.parameters.emplace_back(params[i].name, params[i].tensor.clone());
    c.velocity.emplace_back(params[i].name, Tensor::from(params[i].tensor.shape(), sgd.velocity()[i]));
  }
  return c;
}

namespace {

void copy_into(Tensor& dst, const Tensor& src, const std::string& name) {
  if (dst.shape() != src.shape()) {
    throw FormatError("checkpoint: '" + name + "' has shape " + to_string(src.shape()) + ", model expects " +
                      to_string(dst.shape()));
  }
  auto d = dst.mutable_data();
  std::copy(src.data().begin(), src.data().end(), d.begin());
}

void copy_parameters(const std::vector<NamedParameter>& params, const Checkpoint& ckpt) {
  if (ckpt.parameters.size() != params.size()) throw FormatError("checkpoint: parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (ckpt.parameters[i].first != params[i].name) {
      throw FormatError("checkpoint: expected parameter '" + params[i].name + "', found '" +
                        ckpt.parameters[i].first + "'");
    }
    Tensor t = params[i].tensor;
    copy_into(t, ckpt.parameters[i].second, params[i].name);
  }
}

}  // namespace

void restore_checkpoint(const Checkpoint& ckpt, const TrainConfig& cfg, Sgd& sgd) {
  if (ckpt.config_hash != config_hash(cfg)) {
    throw ConfigError("checkpoint was written for a different configuration; refusing to resume");
  }
  const auto& params = sgd.parameters();
  copy_parameters(params, ckpt);
  if (ckpt.velocity.size() != params.size()) throw FormatError("checkpoint: momentum buffer count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& v = ckpt.velocity[i].second;
    if (v.numel() != sgd.velocity()[i].size()) throw FormatError("checkpoint: momentum buffer size mismatch");
    std::copy(v.data().begin(), v.data().end(), sgd.velocity()[i].begin());
  }
}

AddGcnModel model_from_checkpoint(const Checkpoint& ckpt) {
  const auto cfg = parse_config(ckpt.config_text);
  if (config_hash(cfg) != ckpt.config_hash) throw FormatError("checkpoint: config text does not match its hash");
  AddGcnModel model(cfg.model, cfg.seed);
  copy_parameters(model.parameters(), ckpt);
  return model;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

// Flushes subnormal floats to zero for the scope's lifetime; restores the
// previous floating-point control state on exit.
class FlushDenormals {
 public:
#if defined(__SSE2__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040); }
  ~FlushDenormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

}  // namespace

std::vector<std::size_t> epoch_order(std::size_t samples, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(samples);
  for (std::size_t i = 0; i < samples; ++i) order[i] = i;
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + epoch + 1);
  for (std::size_t i = samples; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

double run_epoch(const AddGcnModel& model, Sgd& sgd, const Dataset& data, std::span<const std::size_t> order,
                 std::size_t batch_size, const GroupRates& rates, std::size_t epoch,
                 const std::filesystem::path& diagnostics_dir) {
  if (batch_size == 0) throw ContractError("batch_size must be positive");
  FlushDenormals ftz;
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const auto idx = order.subspan(begin, std::min(batch_size, order.size() - begin));
    auto batch = data.batch(idx);
    Tape tape;
    TapeScope scope(tape);
    auto loss = bce_loss(model.logits(batch.x), batch.y);
    const float value = loss.item();
    if (!std::isfinite(value)) {
      std::ostringstream msg;
      msg << "non-finite loss at epoch " << epoch << ", batch " << batches << " (samples";
      for (const auto& id : batch.ids) msg << ' ' << id;
      msg << ')';
      if (!diagnostics_dir.empty()) {
        const auto path = diagnostics_dir / ("nonfinite_epoch" + std::to_string(epoch) + "_batch" +
                                             std::to_string(batches) + ".adgt");
        save_tensor(path, batch.x);
        msg << "; batch dumped to " << path.string();
      }
      throw NonFiniteLoss(msg.str(), epoch, batches);
    }
    tape.backward(loss);
    sgd.step(rates);
    sgd.zero_grad();
    total += value;
    ++batches;
  }
  return batches ? total / static_cast<double>(batches) : 0.0;
}

EvalBatch predict(const AddGcnModel& model, const Dataset& data, std::size_t batch_size) {
  NoGradScope no_grad;
  FlushDenormals ftz;
  EvalBatch out;
  out.samples = data.size();
  out.classes = data.classes;
  out.labels = data.labels;
  out.ids = data.ids;
  out.scores.reserve(data.size() * data.classes);
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    auto batch = data.batch(begin, std::min(data.size(), begin + batch_size));
    const auto logits = model.logits(batch.x);
    for (float s : logits.data()) out.scores.push_back(s);
  }
  return out;
}

double dataset_loss(const AddGcnModel& model, const Dataset& data, std::size_t batch_size) {
  NoGradScope no_grad;
  FlushDenormals ftz;
  double total = 0.0;
  for (std::size_t begin = 0; begin < data.size(); begin += batch_size) {
    const std::size_t end = std::min(data.size(), begin + batch_size);
    auto batch = data.batch(begin, end);
    total += static_cast<double>(bce_loss(model.logits(batch.x), batch.y).item()) * static_cast<double>(end - begin);
  }
  return data.size() ? total / static_cast<double>(data.size()) : 0.0;
}

TrainResult train(const TrainConfig& cfg, const Dataset& train_data, const Dataset& eval_data,
                  const TrainOptions& opts) {
  cfg.validate();
  if (train_data.size() == 0) throw ConfigError("training set is empty");
  TrainResult result{AddGcnModel(cfg.model, cfg.seed), {}, {}, {}};
  Sgd sgd(result.model.parameters(), cfg.momentum, cfg.weight_decay);

  std::size_t start = 0;
  if (opts.resume_from) {
    auto ckpt = load_checkpoint(*opts.resume_from);
    restore_checkpoint(ckpt, cfg, sgd);
    start = ckpt.epoch;
  }

  std::ofstream csv;
  if (!opts.output_dir.empty()) {
    std::filesystem::create_directories(opts.output_dir);
    const auto path = opts.output_dir / "metrics.csv";
    const bool append = opts.resume_from && std::filesystem::exists(path);
    csv.open(path, append ? std::ios::app : std::ios::trunc);
    if (!append) csv << "epoch,train_loss,lr_head,lr_features," << csv_header() << '\n';
  }

  const GroupRates base{cfg.lr_head, cfg.lr_features};
  std::size_t done = start;
  for (std::size_t epoch = start; epoch < cfg.epochs; ++epoch) {
    if (opts.stop_after && epoch >= *opts.stop_after) break;
    EpochLog entry;
    entry.epoch = epoch;
    entry.rates = lr_schedule(epoch, base, cfg.lr_steps, cfg.lr_gamma);
    const auto order = epoch_order(train_data.size(), cfg.seed, epoch);
    entry.train_loss = run_epoch(result.model, sgd, train_data, order, cfg.batch_size, entry.rates, epoch,
                                 opts.output_dir);
    const bool last = epoch + 1 == cfg.epochs;
    if ((opts.evaluate_each_epoch || last) && eval_data.size()) {
      entry.eval = evaluate(predict(result.model, eval_data), cfg.metrics);
      result.final_eval = entry.eval;
    }
    done = epoch + 1;
    if (csv.is_open()) {
      csv << epoch << ',' << entry.train_loss << ',' << entry.rates.head << ',' << entry.rates.features << ','
          << csv_row(entry.eval) << '\n';
      csv.flush();
      save_checkpoint(opts.output_dir / "checkpoint.bin",
                      capture_checkpoint(cfg, sgd, static_cast<std::uint32_t>(done)));
    }
    if (opts.on_epoch) opts.on_epoch(entry);
    result.log.push_back(std::move(entry));
  }
  result.checkpoint = capture_checkpoint(cfg, sgd, static_cast<std::uint32_t>(done));
  return result;
}

// ---------------------------------------------------------------------------
// Ablations

AblationAxis parse_ablation_axis(const std::string& name) {
  if (name == "graph_mode") return AblationAxis::graph_mode;
  if (name == "aggregation") return AblationAxis::aggregation;
  if (name == "map_mode") return AblationAxis::map_mode;
  throw ConfigError("unknown ablation axis '" + name + "' (expected graph_mode, aggregation or map_mode)");
}

std::vector<AblationRow> ablate(const TrainConfig& base, AblationAxis axis, const Dataset& train_data,
                                const Dataset& eval_data) {
  std::vector<std::pair<std::string, TrainConfig>> variants;
  switch (axis) {
    case AblationAxis::graph_mode: {
      auto b = base;
      b.model.kind = ModelKind::gap_linear;
      variants.emplace_back("baseline", b);
      for (auto mode : all_graph_modes()) {
        auto c = base;
        c.model.kind = ModelKind::add_gcn;
        c.model.graph_mode = mode;
        variants.emplace_back(to_string(mode), c);
      }
      break;
    }
    case AblationAxis::aggregation:
      for (auto mode : all_aggregations()) {
        auto c = base;
        c.model.kind = ModelKind::add_gcn;
        c.model.aggregation = mode;
        variants.emplace_back(to_string(mode), c);
      }
      break;
    case AblationAxis::map_mode:
      for (auto mode : {MapMode::gap_then_cls, MapMode::gmp_then_cls, MapMode::cls_then_gmp}) {
        auto c = base;
        c.model.kind = ModelKind::add_gcn;
        c.model.map_mode = mode;
        variants.emplace_back(to_string(mode), c);
      }
      break;
  }
  std::vector<AblationRow> rows;
  TrainOptions opts;
  opts.evaluate_each_epoch = false;
  for (const auto& [name, cfg] : variants) {
    auto result = train(cfg, train_data, eval_data, opts);
    rows.push_back({name, result.log.empty() ? 0.0 : result.log.back().train_loss, result.final_eval});
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "variant,final_loss," << csv_header() << '\n';
  for (const auto& r : rows) os << r.variant << ',' << r.final_loss << ',' << csv_row(r.report) << '\n';
  return os.str();
}

}  // namespace addgcn
