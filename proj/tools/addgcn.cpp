#include <CLI11.hpp>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "addgcn/errors.hpp"
#include "addgcn/tensor_io.hpp"
#include "addgcn/trainer.hpp"

namespace fs = std::filesystem;
using namespace addgcn;

namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

TrainConfig checkpoint_config(const Checkpoint& ckpt) { return parse_config(ckpt.config_text); }

Dataset eval_data_for(const TrainConfig& cfg, const std::string& index) {
  if (!index.empty()) return load_feature_dataset(index);
  return make_datasets(cfg).eval;
}

Tensor sample_slice(const Tensor& t, std::size_t n) {
  const auto& shape = t.shape();
  Shape rest(shape.begin() + 1, shape.end());
  std::size_t numel = 1;
  for (auto e : rest) numel *= e;
  const auto& d = t.data();
  return Tensor::from(rest, std::vector<float>(d.begin() + n * numel, d.begin() + (n + 1) * numel));
}

std::string safe_name(const std::string& id) {
  std::string out = id;
  for (auto& ch : out)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_' && ch != '.') ch = '_';
  return out;
}

int cmd_train(const std::string& config_path, const fs::path& out_dir, const std::string& resume) {
  const auto cfg = load_config(config_path);
  const auto data = make_datasets(cfg);
  TrainOptions opts;
  opts.output_dir = out_dir;
  if (!resume.empty()) opts.resume_from = fs::path(resume);
  opts.on_epoch = [](const EpochLog& e) {
    std::cout << "epoch " << e.epoch << " loss " << e.train_loss << " mAP " << e.eval.map << std::endl;
  };
  const auto result = train(cfg, data.train, data.eval, opts);
  write_text(out_dir / "config.txt", serialize_config(cfg));
  write_json(out_dir / "report.json", to_json(result.final_eval));
  write_scores_jsonl(out_dir / "scores.jsonl", predict(result.model, data.eval));
  std::cout << "wrote " << (out_dir / "checkpoint.bin").string() << std::endl;
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_index, const std::string& report,
             const std::string& scores) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto cfg = checkpoint_config(ckpt);
  const auto model = model_from_checkpoint(ckpt);
  const auto data = eval_data_for(cfg, data_index);
  const auto batch = predict(model, data);
  const auto j = to_json(evaluate(batch, cfg.metrics));
  if (report.empty()) {
    std::cout << j.dump(2) << std::endl;
  } else {
    write_json(report, j);
  }
  if (!scores.empty()) write_scores_jsonl(scores, batch);
  return 0;
}

int cmd_ablate(const std::string& axis_name, const std::string& config_path, const std::string& out) {
  const auto axis = parse_ablation_axis(axis_name);
  const auto cfg = config_path.empty() ? TrainConfig{} : load_config(config_path);
  cfg.validate();
  const auto data = make_datasets(cfg);
  const auto csv = ablation_csv(ablate(cfg, axis, data.train, data.eval));
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_text(out, csv);
  }
  return 0;
}

int cmd_export_maps(const std::string& checkpoint, const std::string& data_index, const fs::path& out_dir) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto cfg = checkpoint_config(ckpt);
  const auto model = model_from_checkpoint(ckpt);
  if (cfg.model.kind != ModelKind::add_gcn) throw ConfigError("export-maps: the baseline has no activation maps");
  const auto data = eval_data_for(cfg, data_index);
  fs::create_directories(out_dir);
  auto index = nlohmann::json::array();
  for (std::size_t n = 0; n < data.size(); ++n) {
    const auto batch = data.batch(n, n + 1);
    const auto sam = model.forward(batch.x).sam.value();
    const auto maps = sample_slice(sam.maps, 0);
    const auto scores = sample_slice(sam.scores, 0);
    const auto stem = safe_name(data.ids[n]);
    const auto score_file = stem + "_scores.adgt";
    save_tensor(out_dir / score_file, scores);
    for (std::size_t c = 0; c < data.classes; ++c) {
      const auto file = stem + "_c" + std::to_string(c) + ".adgt";
      save_tensor(out_dir / file, sample_slice(maps, c));
      index.push_back({{"sample_id", data.ids[n]},
                       {"class_id", c},
                       {"file", file},
                       {"score", scores.data()[c]},
                       {"scores_file", score_file}});
    }
  }
  write_json(out_dir / "maps.json", index);
  std::cout << "wrote " << index.size() << " maps to " << out_dir.string() << std::endl;
  return 0;
}

int cmd_dump_adjacency(const std::string& checkpoint, const std::string& sample, const std::string& data_index,
                       const std::string& out) {
  const auto ckpt = load_checkpoint(checkpoint);
  const auto cfg = checkpoint_config(ckpt);
  auto model = model_from_checkpoint(ckpt);
  if (cfg.model.kind != ModelKind::add_gcn) throw ConfigError("dump-adjacency: the baseline has no graph");
  const auto data = eval_data_for(cfg, data_index);
  const auto n = data.find(sample);
  const auto graph = model.forward(data.batch(n, n + 1).x).graph.value();

  nlohmann::json j;
  j["sample_id"] = sample;
  j["graph_mode"] = to_string(cfg.model.graph_mode);
  auto matrix = [](const Tensor& a) {
    const auto c = a.shape()[0];
    auto rows = nlohmann::json::array();
    for (std::size_t i = 0; i < c; ++i)
      rows.push_back(std::vector<float>(a.data().begin() + i * c, a.data().begin() + (i + 1) * c));
    return rows;
  };
  const fs::path base = out.empty() ? fs::path("adjacency_" + safe_name(sample)) : fs::path(out);
  if (base.has_parent_path()) fs::create_directories(base.parent_path());
  if (const auto& s = model.graph_layers().static_layer) {
    save_tensor(base.string() + "_static.adgt", s->adjacency);
    j["static"] = matrix(s->adjacency);
  }
  if (graph.adjacency) {
    const auto ad = sample_slice(*graph.adjacency, 0);
    save_tensor(base.string() + "_dynamic.adgt", ad);
    j["dynamic"] = matrix(ad);
  }
  if (!j.contains("static") && !j.contains("dynamic")) throw ConfigError("dump-adjacency: model has no graph");
  write_json(base.string() + ".json", j);
  std::cout << j.dump(2) << std::endl;
  return 0;
}

int cmd_generate_data(const std::string& config_path, const fs::path& out_dir) {
  const auto cfg = load_config(config_path);
  const auto data = make_datasets(cfg);
  std::cout << "wrote " << save_feature_dataset(data.train, out_dir / "train").string() << std::endl;
  std::cout << "wrote " << save_feature_dataset(data.eval, out_dir / "eval").string() << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ADD-GCN multi-label classification head: training and evaluation"};
  app.require_subcommand(1);

  std::string config, checkpoint, data, resume, report, scores, axis, sample, out;
  fs::path out_dir = "run";

  auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
  train_cmd->add_option("--config", config, "Flat key = value config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
  train_cmd->add_option("--resume", resume, "Resume from a checkpoint")->check(CLI::ExistingFile);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", data, "Dataset index JSON (default: the config's eval split)");
  eval_cmd->add_option("--report", report, "Write the JSON report here instead of stdout");
  eval_cmd->add_option("--scores", scores, "Write per-sample scores as JSONL");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train one model per variant of an ablation axis");
  ablate_cmd->add_option("--axis", axis, "graph_mode, aggregation or map_mode")->required();
  ablate_cmd->add_option("--config", config, "Base config file")->check(CLI::ExistingFile);
  ablate_cmd->add_option("--out", out, "CSV output file (default: stdout)");

  auto* maps_cmd = app.add_subcommand("export-maps", "Write category-specific activation maps");
  maps_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  maps_cmd->add_option("--data", data, "Dataset index JSON (default: the config's eval split)");
  maps_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();

  auto* adj_cmd = app.add_subcommand("dump-adjacency", "Write the static and dynamic adjacency for one sample");
  adj_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  adj_cmd->add_option("--sample", sample, "Sample id")->required();
  adj_cmd->add_option("--data", data, "Dataset index JSON (default: the config's eval split)");
  adj_cmd->add_option("--out", out, "Output path stem");

  auto* gen_cmd = app.add_subcommand("generate-data", "Write the config's synthetic splits as index + ADGT files");
  gen_cmd->add_option("--config", config, "Flat key = value config file")->required()->check(CLI::ExistingFile);
  gen_cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config, out_dir, resume);
    if (*eval_cmd) return cmd_eval(checkpoint, data, report, scores);
    if (*ablate_cmd) return cmd_ablate(axis, config, out);
    if (*maps_cmd) return cmd_export_maps(checkpoint, data, out_dir);
    if (*adj_cmd) return cmd_dump_adjacency(checkpoint, sample, data, out);
    if (*gen_cmd) return cmd_generate_data(config, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
