#include "addgcn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "addgcn/tensor_io.hpp"

namespace addgcn {

namespace {

constexpr std::size_t kMaxLabelModelClasses = 12;
constexpr int kGibbsSweeps = 10;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ splitmix64(stream)) + index);
}

double min_pairwise_angle_deg(const std::vector<float>& protos, std::size_t classes, std::size_t channels) {
  double worst = 180.0;
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t j = i + 1; j < classes; ++j) {
      double dot = 0, ni = 0, nj = 0;
      for (std::size_t d = 0; d < channels; ++d) {
        const double a = protos[i * channels + d], b = protos[j * channels + d];
        dot += a * b;
        ni += a * a;
        nj += b * b;
      }
      const double c = std::clamp(dot / std::sqrt(ni * nj), -1.0, 1.0);
      worst = std::min(worst, std::acos(c) * 180.0 / std::numbers::pi);
    }
  }
  return worst;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (classes < 2) throw ConfigError("synthetic spec: need at least 2 classes");
  if (classes > kMaxLabelModelClasses) {
    throw ConfigError("synthetic spec: at most " + std::to_string(kMaxLabelModelClasses) +
                      " classes are supported by the label model");
  }
  if (channels < 1 || height < 1 || width < 1) throw ConfigError("synthetic spec: extents must be positive");
  if (block_h < 1 || block_w < 1 || block_h > height || block_w > width) {
    throw ConfigError("synthetic spec: block " + std::to_string(block_h) + "x" + std::to_string(block_w) +
                      " does not fit a " + std::to_string(height) + "x" + std::to_string(width) + " map");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("synthetic spec: noise_sigma must be >= 0");
  if (!std::isfinite(amplitude)) throw ConfigError("synthetic spec: amplitude must be finite");
  if (prototypes.size() != classes * channels) throw ConfigError("synthetic spec: prototypes must be classes x channels");
  if (min_pairwise_angle_deg(prototypes, classes, channels) <= 10.0) {
    throw ConfigError("synthetic spec: prototypes must be separated by more than 10 degrees");
  }
  if (cooccurrence.size() != classes * classes) throw ConfigError("synthetic spec: cooccurrence must be classes x classes");
  for (std::size_t i = 0; i < classes; ++i) {
    const double pi = cooccurrence[i * classes + i];
    if (!(pi > 0.0 && pi < 1.0)) throw ConfigError("synthetic spec: marginals must lie in (0,1)");
    for (std::size_t j = 0; j < classes; ++j) {
      const double pij = cooccurrence[i * classes + j];
      if (!(pij >= 0.0 && pij <= 1.0)) throw ConfigError("synthetic spec: cooccurrence entries must lie in [0,1]");
      if (pij != cooccurrence[j * classes + i]) throw ConfigError("synthetic spec: cooccurrence must be symmetric");
      if (i == j) continue;
      const double pj = cooccurrence[j * classes + j];
      if (pij > std::min(pi, pj) + 1e-12 || pij < pi + pj - 1.0 - 1e-12) {
        throw ConfigError("synthetic spec: joint probability of classes " + std::to_string(i) + "," +
                          std::to_string(j) + " violates the marginal bounds");
      }
    }
  }
}

std::vector<double> make_cooccurrence(std::size_t classes, double marginal,
                                      const std::vector<CooccurrencePair>& pairs) {
  std::vector<double> p(classes * classes, marginal * marginal);
  for (std::size_t i = 0; i < classes; ++i) p[i * classes + i] = marginal;
  for (const auto& pr : pairs) {
    if (pr.a >= classes || pr.b >= classes || pr.a == pr.b) throw ConfigError("invalid co-occurrence pair");
    p[pr.a * classes + pr.b] = pr.joint;
    p[pr.b * classes + pr.a] = pr.joint;
  }
  return p;
}

std::vector<float> make_prototypes(std::size_t classes, std::size_t channels, std::uint64_t seed) {
  std::mt19937_64 rng(stream_seed(seed, 1, 0));
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<float> protos(classes * channels);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    for (std::size_t c = 0; c < classes; ++c) {
      float norm = 0.0f;
      for (std::size_t d = 0; d < channels; ++d) {
        protos[c * channels + d] = normal(rng);
        norm += protos[c * channels + d] * protos[c * channels + d];
      }
      norm = std::sqrt(norm);
      for (std::size_t d = 0; d < channels; ++d) protos[c * channels + d] /= norm;
    }
    if (min_pairwise_angle_deg(protos, classes, channels) > 10.0) return protos;
  }
  throw ConfigError("cannot draw " + std::to_string(classes) + " prototypes in " + std::to_string(channels) +
                    " channels with pairwise angles above 10 degrees");
}

SyntheticSpec make_synthetic_spec(std::size_t classes, std::size_t channels, std::size_t height,
                                  std::size_t width, double marginal, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.classes = classes;
  spec.channels = channels;
  spec.height = height;
  spec.width = width;
  spec.prototypes = make_prototypes(classes, channels, seed);
  spec.cooccurrence = make_cooccurrence(classes, marginal);
  spec.seed = seed;
  return spec;
}

// ---------------------------------------------------------------------------
// Label model

namespace {

struct Statistics {
  std::size_t classes;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // i<j
  std::size_t dim() const { return classes + pairs.size(); }
};

Statistics make_statistics(std::size_t classes) {
  Statistics s{classes, {}};
  for (std::size_t i = 0; i < classes; ++i)
    for (std::size_t j = i + 1; j < classes; ++j) s.pairs.emplace_back(i, j);
  return s;
}

Eigen::VectorXd features_of(const Statistics& s, unsigned mask) {
  Eigen::VectorXd f(static_cast<Eigen::Index>(s.dim()));
  for (std::size_t i = 0; i < s.classes; ++i) f[static_cast<Eigen::Index>(i)] = (mask >> i) & 1u;
  for (std::size_t k = 0; k < s.pairs.size(); ++k) {
    const auto [i, j] = s.pairs[k];
    f[static_cast<Eigen::Index>(s.classes + k)] = ((mask >> i) & 1u) && ((mask >> j) & 1u);
  }
  return f;
}

struct Moments {
  double log_partition;
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Moments compute_moments(const Statistics& s, const std::vector<Eigen::VectorXd>& feats,
                        const Eigen::VectorXd& theta, bool with_cov) {
  std::vector<double> energy(feats.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < feats.size(); ++k) {
    energy[k] = theta.dot(feats[k]);
    top = std::max(top, energy[k]);
  }
  double z = 0;
  for (auto& e : energy) {
    e = std::exp(e - top);
    z += e;
  }
  const auto dim = static_cast<Eigen::Index>(s.dim());
  Moments m{top + std::log(z), Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim)};
  for (std::size_t k = 0; k < feats.size(); ++k) m.mean += (energy[k] / z) * feats[k];
  if (with_cov) {
    for (std::size_t k = 0; k < feats.size(); ++k) {
      Eigen::VectorXd d = feats[k] - m.mean;
      m.cov.noalias() += (energy[k] / z) * d * d.transpose();
    }
  }
  return m;
}

}  // namespace

std::vector<double> LabelModel::moments() const {
  std::vector<double> out(classes * classes, 0.0);
  const unsigned states = 1u << classes;
  std::vector<double> w(states, 0.0);
  double z = 0.0, top = -std::numeric_limits<double>::infinity();
  std::vector<double> energy(states, 0.0);
  for (unsigned mask = 1; mask < states; ++mask) {
    double e = 0;
    for (std::size_t i = 0; i < classes; ++i) {
      if (!((mask >> i) & 1u)) continue;
      e += field[i];
      for (std::size_t j = i + 1; j < classes; ++j)
        if ((mask >> j) & 1u) e += coupling[i * classes + j];
    }
    energy[mask] = e;
    top = std::max(top, e);
  }
  for (unsigned mask = 1; mask < states; ++mask) {
    w[mask] = std::exp(energy[mask] - top);
    z += w[mask];
  }
  for (unsigned mask = 1; mask < states; ++mask) {
    const double p = w[mask] / z;
    for (std::size_t i = 0; i < classes; ++i) {
      if (!((mask >> i) & 1u)) continue;
      for (std::size_t j = 0; j < classes; ++j)
        if ((mask >> j) & 1u) out[i * classes + j] += p;
    }
  }
  return out;
}

LabelModel fit_label_model(std::size_t classes, const std::vector<double>& cooccurrence) {
  if (classes < 1 || classes > kMaxLabelModelClasses) throw ConfigError("label model: unsupported class count");
  if (cooccurrence.size() != classes * classes) throw ConfigError("label model: cooccurrence must be classes x classes");
  const auto stats = make_statistics(classes);
  const auto dim = static_cast<Eigen::Index>(stats.dim());
  std::vector<Eigen::VectorXd> feats;
  for (unsigned mask = 1; mask < (1u << classes); ++mask) feats.push_back(features_of(stats, mask));

  Eigen::VectorXd target(dim);
  for (std::size_t i = 0; i < classes; ++i) target[static_cast<Eigen::Index>(i)] = cooccurrence[i * classes + i];
  for (std::size_t k = 0; k < stats.pairs.size(); ++k) {
    const auto [i, j] = stats.pairs[k];
    target[static_cast<Eigen::Index>(classes + k)] = cooccurrence[i * classes + j];
  }

  // Start from independent log-odds; then damped Newton on the concave
  // log-likelihood theta.target - log Z(theta).
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(dim);
  for (std::size_t i = 0; i < classes; ++i) {
    const double p = std::clamp(target[static_cast<Eigen::Index>(i)], 1e-6, 1 - 1e-6);
    theta[static_cast<Eigen::Index>(i)] = std::log(p / (1 - p));
  }
  auto objective = [&](const Eigen::VectorXd& t) {
    return t.dot(target) - compute_moments(stats, feats, t, false).log_partition;
  };
  for (int iter = 0; iter < 200; ++iter) {
    auto m = compute_moments(stats, feats, theta, true);
    Eigen::VectorXd grad = target - m.mean;
    if (grad.cwiseAbs().maxCoeff() < 1e-10) break;
    Eigen::MatrixXd hess = m.cov + 1e-9 * Eigen::MatrixXd::Identity(dim, dim);
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    const double base = theta.dot(target) - m.log_partition;
    double t = 1.0;
    while (t > 1e-6 && objective(theta + t * step) < base) t *= 0.5;
    theta += t * step;
  }
  const auto final_moments = compute_moments(stats, feats, theta, false);
  const double residual = (target - final_moments.mean).cwiseAbs().maxCoeff();
  if (residual > 1e-3) {
    throw ConfigError("co-occurrence matrix is not realizable by the label model (residual " +
                      std::to_string(residual) + ")");
  }

  LabelModel model;
  model.classes = classes;
  model.field.assign(theta.data(), theta.data() + classes);
  model.coupling.assign(classes * classes, 0.0);
  for (std::size_t k = 0; k < stats.pairs.size(); ++k) {
    const auto [i, j] = stats.pairs[k];
    model.coupling[i * classes + j] = model.coupling[j * classes + i] = theta[static_cast<Eigen::Index>(classes + k)];
  }
  return model;
}

std::vector<std::uint8_t> sample_labels(const LabelModel& model, std::uint64_t seed) {
  const std::size_t c = model.classes;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto prob = [](double logit) { return 1.0 / (1.0 + std::exp(-logit)); };
  std::vector<std::uint8_t> y(c, 0);
  for (std::size_t i = 0; i < c; ++i) y[i] = unif(rng) < prob(model.field[i]);
  if (std::all_of(y.begin(), y.end(), [](auto v) { return v == 0; })) {
    y[std::uniform_int_distribution<std::size_t>(0, c - 1)(rng)] = 1;
  }
  for (int sweep = 0; sweep < kGibbsSweeps; ++sweep) {
    for (std::size_t i = 0; i < c; ++i) {
      double logit = model.field[i];
      bool others = false;
      for (std::size_t j = 0; j < c; ++j) {
        if (j == i || !y[j]) continue;
        others = true;
        logit += model.coupling[i * c + j];
      }
      // The empty set has zero probability.
      y[i] = others ? (unif(rng) < prob(logit)) : 1;
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Datasets

FeatureMapBatch Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t b = indices.size();
  if (b == 0) throw ContractError("empty batch");
  std::vector<float> x(b * sample_numel());
  std::vector<float> y(b * classes);
  FeatureMapBatch out;
  for (std::size_t k = 0; k < b; ++k) {
    const std::size_t n = indices[k];
    if (n >= size()) throw ContractError("sample index out of range");
    std::copy_n(features.begin() + static_cast<std::ptrdiff_t>(n * sample_numel()), sample_numel(),
                x.begin() + static_cast<std::ptrdiff_t>(k * sample_numel()));
    for (std::size_t c = 0; c < classes; ++c) y[k * classes + c] = labels[n * classes + c];
    out.ids.push_back(ids[n]);
  }
  out.x = Tensor::from({b, channels, height, width}, std::move(x));
  out.y = Tensor::from({b, classes}, std::move(y));
  return out;
}

FeatureMapBatch Dataset::batch(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx;
  for (std::size_t n = begin; n < end; ++n) idx.push_back(n);
  return batch(idx);
}

std::size_t Dataset::find(const std::string& id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) throw ContractError("no sample with id '" + id + "'");
  return static_cast<std::size_t>(it - ids.begin());
}

namespace {

Dataset sample_dataset(const SyntheticSpec& spec, const LabelModel& model) {
  Dataset data;
  data.classes = spec.classes;
  data.channels = spec.channels;
  data.height = spec.height;
  data.width = spec.width;
  data.features.assign(spec.samples * data.sample_numel(), 0.0f);
  data.labels.assign(spec.samples * spec.classes, 0);
  const std::size_t hw = spec.height * spec.width;
  for (std::size_t n = 0; n < spec.samples; ++n) {
    auto y = sample_labels(model, stream_seed(spec.seed, 2, n));
    std::copy(y.begin(), y.end(), data.labels.begin() + static_cast<std::ptrdiff_t>(n * spec.classes));
    float* x = data.features.data() + n * data.sample_numel();
    std::mt19937_64 rng(stream_seed(spec.seed, 3, n));
    for (std::size_t c = 0; c < spec.classes; ++c) {
      if (!y[c]) continue;
      const auto top = std::uniform_int_distribution<std::size_t>(0, spec.height - spec.block_h)(rng);
      const auto left = std::uniform_int_distribution<std::size_t>(0, spec.width - spec.block_w)(rng);
      for (std::size_t d = 0; d < spec.channels; ++d) {
        const float v = static_cast<float>(spec.amplitude) * spec.prototypes[c * spec.channels + d];
        for (std::size_t i = top; i < top + spec.block_h; ++i)
          for (std::size_t j = left; j < left + spec.block_w; ++j) x[d * hw + i * spec.width + j] += v;
      }
    }
    if (spec.noise_sigma > 0.0) {
      std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise_sigma));
      for (std::size_t k = 0; k < data.sample_numel(); ++k) x[k] += noise(rng);
    }
    data.ids.push_back("s" + std::to_string(n));
  }
  return data;
}

void check_flip(const SyntheticSpec& spec, std::pair<std::size_t, std::size_t> flip) {
  if (flip.first >= spec.classes || flip.second >= spec.classes || flip.first == flip.second) {
    throw ConfigError("flip pair must name two distinct classes");
  }
}

}  // namespace

Dataset generate(const SyntheticSpec& spec) {
  spec.validate();
  return sample_dataset(spec, fit_label_model(spec.classes, spec.cooccurrence));
}

LabelModel flipped_label_model(const SyntheticSpec& spec, std::pair<std::size_t, std::size_t> flip) {
  spec.validate();
  check_flip(spec, flip);
  const std::size_t c = spec.classes;
  const auto [a, b] = flip;
  auto model = fit_label_model(c, spec.cooccurrence);
  auto independent = spec.cooccurrence;
  independent[a * c + b] = independent[b * c + a] = spec.cooccurrence[a * c + a] * spec.cooccurrence[b * c + b];
  const double pivot = fit_label_model(c, independent).coupling[a * c + b];
  const double flipped = 2.0 * pivot - model.coupling[a * c + b];
  model.coupling[a * c + b] = model.coupling[b * c + a] = flipped;
  return model;
}

Dataset make_biased_eval_split(const SyntheticSpec& spec, std::pair<std::size_t, std::size_t> flip) {
  return sample_dataset(spec, flipped_label_model(spec, flip));
}

// ---------------------------------------------------------------------------
// Files

std::filesystem::path save_feature_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "tensors");
  nlohmann::json index;
  index["spec"] = {{"classes", data.classes},
                   {"channels", data.channels},
                   {"height", data.height},
                   {"width", data.width},
                   {"layout", "HWD"}};
  index["samples"] = nlohmann::json::array();
  const std::size_t hw = data.height * data.width;
  for (std::size_t n = 0; n < data.size(); ++n) {
    const float* x = data.features.data() + n * data.sample_numel();
    std::vector<float> hwd(data.sample_numel());
    for (std::size_t d = 0; d < data.channels; ++d)
      for (std::size_t p = 0; p < hw; ++p) hwd[p * data.channels + d] = x[d * hw + p];
    const std::string file = "tensors/" + data.ids[n] + ".adgt";
    save_tensor(dir / file, Tensor::from({data.height, data.width, data.channels}, std::move(hwd)));
    std::vector<int> y(data.labels.begin() + static_cast<std::ptrdiff_t>(n * data.classes),
                       data.labels.begin() + static_cast<std::ptrdiff_t>((n + 1) * data.classes));
    index["samples"].push_back({{"id", data.ids[n]}, {"tensor_file", file}, {"labels", y}});
  }
  const auto path = dir / "index.json";
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << index.dump(2) << '\n';
  return path;
}

Dataset load_feature_dataset(const std::filesystem::path& index_path) {
  std::ifstream in(index_path);
  if (!in) throw FormatError("dataset index not found: " + index_path.string());
  nlohmann::json index;
  try {
    index = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(index_path.string() + ": invalid JSON: " + e.what());
  }
  Dataset data;
  std::string layout;
  try {
    const auto& spec = index.at("spec");
    data.classes = spec.at("classes").get<std::size_t>();
    data.channels = spec.at("channels").get<std::size_t>();
    data.height = spec.at("height").get<std::size_t>();
    data.width = spec.at("width").get<std::size_t>();
    layout = spec.value("layout", std::string("HWD"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(index_path.string() + ": bad spec header: " + e.what());
  }
  if (layout != "HWD" && layout != "DHW") throw FormatError(index_path.string() + ": unknown layout " + layout);
  const Shape expected = layout == "HWD" ? Shape{data.height, data.width, data.channels}
                                         : Shape{data.channels, data.height, data.width};
  const auto base = index_path.parent_path();
  const std::size_t hw = data.height * data.width;
  for (const auto& entry : index.at("samples")) {
    std::string id, file;
    std::vector<int> y;
    try {
      id = entry.at("id").is_string() ? entry.at("id").get<std::string>() : entry.at("id").dump();
      file = entry.at("tensor_file").get<std::string>();
      y = entry.at("labels").get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(index_path.string() + ": bad sample entry: " + e.what());
    }
    if (y.size() != data.classes) {
      throw FormatError("sample " + id + ": " + std::to_string(y.size()) + " labels, header declares " +
                        std::to_string(data.classes));
    }
    const auto t = load_tensor(base / file);
    if (t.shape() != expected) {
      throw FormatError("sample " + id + ": tensor shape " + to_string(t.shape()) + " does not match header " +
                        to_string(expected) + " (" + layout + ")");
    }
    const auto v = t.data();
    if (layout == "HWD") {
      const std::size_t offset = data.features.size();
      data.features.resize(offset + v.size());
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t d = 0; d < data.channels; ++d) data.features[offset + d * hw + p] = v[p * data.channels + d];
    } else {
      data.features.insert(data.features.end(), v.begin(), v.end());
    }
    for (int label : y) {
      if (label != 0 && label != 1) throw FormatError("sample " + id + ": labels must be 0 or 1");
      data.labels.push_back(static_cast<std::uint8_t>(label));
    }
    data.ids.push_back(id);
  }
  return data;
}

}  // namespace addgcn
