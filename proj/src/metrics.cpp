#include "addgcn/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "addgcn/errors.hpp"

namespace addgcn {

void EvalBatch::validate() const {
  if (scores.size() != samples * classes || labels.size() != samples * classes) {
    throw DimensionError("EvalBatch: scores/labels do not match " + std::to_string(samples) + "x" +
                         std::to_string(classes));
  }
  if (!ids.empty() && ids.size() != samples) throw DimensionError("EvalBatch: one id per sample");
  for (auto y : labels) {
    if (y > 1) throw ContractError("EvalBatch: labels must be binary");
  }
}

std::optional<double> average_precision(std::span<const double> scores,
                                        std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DimensionError("average_precision: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double acc = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]]) {
      ++hits;
      acc += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return acc / static_cast<double>(hits);
}

double f1(double precision, double recall) {
  const double denom = precision + recall;
  return denom > 0.0 ? 2.0 * precision * recall / denom : 0.0;
}

namespace {

std::vector<std::uint8_t> predictions(const EvalBatch& batch, bool top_k, const MetricsOptions& opts) {
  std::vector<std::uint8_t> pred(batch.samples * batch.classes, 0);
  std::vector<std::size_t> order(batch.classes);
  for (std::size_t n = 0; n < batch.samples; ++n) {
    if (!top_k) {
      for (std::size_t c = 0; c < batch.classes; ++c) pred[n * batch.classes + c] = batch.score(n, c) > 0.0;
      continue;
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return batch.score(n, a) > batch.score(n, b); });
    const std::size_t k = std::min(opts.top_k, batch.classes);
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t c = order[r];
      if (!opts.top_k_threshold || batch.score(n, c) > 0.0) pred[n * batch.classes + c] = 1;
    }
  }
  return pred;
}

}  // namespace

PrfSuite prf_suite(const EvalBatch& batch, bool top_k, const MetricsOptions& opts) {
  batch.validate();
  const auto pred = predictions(batch, top_k, opts);
  std::vector<std::size_t> tp(batch.classes, 0), npred(batch.classes, 0), npos(batch.classes, 0);
  for (std::size_t n = 0; n < batch.samples; ++n) {
    for (std::size_t c = 0; c < batch.classes; ++c) {
      const bool p = pred[n * batch.classes + c] != 0;
      const bool y = batch.label(n, c);
      tp[c] += p && y;
      npred[c] += p;
      npos[c] += y;
    }
  }
  PrfSuite s;
  std::size_t counted = 0;
  double sum_p = 0.0, sum_r = 0.0;
  for (std::size_t c = 0; c < batch.classes; ++c) {
    if (npos[c] == 0) continue;
    ++counted;
    sum_p += npred[c] ? static_cast<double>(tp[c]) / static_cast<double>(npred[c]) : 0.0;
    sum_r += static_cast<double>(tp[c]) / static_cast<double>(npos[c]);
  }
  if (counted) {
    s.cp = sum_p / static_cast<double>(counted);
    s.cr = sum_r / static_cast<double>(counted);
  }
  s.cf1 = f1(s.cp, s.cr);
  const auto total_tp = std::accumulate(tp.begin(), tp.end(), std::size_t{0});
  const auto total_pred = std::accumulate(npred.begin(), npred.end(), std::size_t{0});
  const auto total_pos = std::accumulate(npos.begin(), npos.end(), std::size_t{0});
  s.op = total_pred ? static_cast<double>(total_tp) / static_cast<double>(total_pred) : 0.0;
  s.orr = total_pos ? static_cast<double>(total_tp) / static_cast<double>(total_pos) : 0.0;
  s.of1 = f1(s.op, s.orr);
  return s;
}

MetricsReport evaluate(const EvalBatch& batch, const MetricsOptions& opts) {
  batch.validate();
  MetricsReport report;
  std::vector<double> column(batch.samples);
  std::vector<std::uint8_t> column_labels(batch.samples);
  double ap_sum = 0.0;
  std::size_t ap_count = 0;
  for (std::size_t c = 0; c < batch.classes; ++c) {
    for (std::size_t n = 0; n < batch.samples; ++n) {
      column[n] = batch.score(n, c);
      column_labels[n] = batch.labels[n * batch.classes + c];
    }
    auto ap = average_precision(column, column_labels);
    if (ap) {
      ap_sum += *ap;
      ++ap_count;
    }
    report.class_ap.push_back(ap);
  }
  report.map = ap_count ? ap_sum / static_cast<double>(ap_count) : 0.0;
  report.all = prf_suite(batch, false, opts);
  report.top3 = prf_suite(batch, true, opts);
  return report;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["mAP"] = r.map;
  auto suite = [](const PrfSuite& s) {
    return nlohmann::json{{"CP", s.cp}, {"CR", s.cr}, {"CF1", s.cf1},
                          {"OP", s.op}, {"OR", s.orr}, {"OF1", s.of1}};
  };
  const auto all = suite(r.all);
  const auto top3 = suite(r.top3);
  for (const auto& [k, v] : all.items()) j[k] = v;
  for (const auto& [k, v] : top3.items()) j[k + "_top3"] = v;
  nlohmann::json aps = nlohmann::json::array();
  for (const auto& ap : r.class_ap) aps.push_back(ap ? nlohmann::json(*ap) : nlohmann::json(nullptr));
  j["class_AP"] = aps;
  return j;
}

std::string csv_header() {
  return "mAP,CP,CR,CF1,OP,OR,OF1,CP_top3,CR_top3,CF1_top3,OP_top3,OR_top3,OF1_top3";
}

std::string csv_row(const MetricsReport& r) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << r.map;
  for (const auto* s : {&r.all, &r.top3}) {
    os << ',' << s->cp << ',' << s->cr << ',' << s->cf1 << ',' << s->op << ',' << s->orr << ','
       << s->of1;
  }
  return os.str();
}

void write_scores_jsonl(const std::filesystem::path& path, const EvalBatch& batch) {
  batch.validate();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  for (std::size_t n = 0; n < batch.samples; ++n) {
    nlohmann::json row;
    row["sample_id"] = batch.ids.empty() ? std::to_string(n) : batch.ids[n];
    std::vector<double> s(batch.scores.begin() + static_cast<std::ptrdiff_t>(n * batch.classes),
                          batch.scores.begin() + static_cast<std::ptrdiff_t>((n + 1) * batch.classes));
    std::vector<int> y(batch.labels.begin() + static_cast<std::ptrdiff_t>(n * batch.classes),
                       batch.labels.begin() + static_cast<std::ptrdiff_t>((n + 1) * batch.classes));
    row["scores"] = s;
    row["labels"] = y;
    out << row.dump() << '\n';
  }
}

EvalBatch read_scores_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  EvalBatch batch;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
      auto s = row.at("scores").get<std::vector<double>>();
      auto y = row.at("labels").get<std::vector<int>>();
      if (s.size() != y.size() || (batch.samples && s.size() != batch.classes)) {
        throw FormatError("inconsistent class count");
      }
      batch.classes = s.size();
      batch.scores.insert(batch.scores.end(), s.begin(), s.end());
      for (int v : y) {
        if (v != 0 && v != 1) throw FormatError("labels must be 0 or 1");
        batch.labels.push_back(static_cast<std::uint8_t>(v));
      }
      const auto& id = row.at("sample_id");
      batch.ids.push_back(id.is_string() ? id.get<std::string>() : id.dump());
      ++batch.samples;
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return batch;
}

}  // namespace addgcn
