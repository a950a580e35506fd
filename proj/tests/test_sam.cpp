#include <doctest.h>

#include "addgcn/sam.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace addgcn;
using addgcn::testing::gradient_error;
using addgcn::testing::random_parameter;
using addgcn::testing::random_tensor;
using addgcn::oracle::brute_force_eq1;

namespace {

Linear fixed_linear(Tensor w, std::optional<Tensor> b = std::nullopt) { return Linear{std::move(w), std::move(b)}; }

SamConfig small_config(MapMode mode = MapMode::cls_then_gmp) {
  SamConfig cfg;
  cfg.num_classes = 4;
  cfg.in_channels = 3;
  cfg.repr_channels = 3;
  cfg.map_mode = mode;
  return cfg;
}

}  // namespace

TEST_CASE("transform_features examples") {
  std::mt19937_64 rng(1);
  auto x = random_tensor({2, 3, 2, 2}, rng, 0.1f, 2.0f);
  auto id = fixed_linear(Tensor::eye(3), Tensor::zeros({3}));
  auto y = transform_features(x, id, 0.2f);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y.data()[i] == x.data()[i]);

  auto neg = transform_features(Tensor::from({1, 1, 1, 1}, {-1.0f}), fixed_linear(Tensor::from({1, 1}, {1.0f})), 0.2f);
  CHECK(neg.item() == doctest::Approx(-0.2f));

  for (int s = 0; s < 5; ++s) {
    std::size_t B = 1 + rng() % 3, D = 1 + rng() % 4, Dp = 1 + rng() % 5, H = 1 + rng() % 3, W = 1 + rng() % 3;
    auto t = transform_features(random_tensor({B, D, H, W}, rng), fixed_linear(random_tensor({Dp, D}, rng)), 0.2f);
    CHECK(t.shape() == Shape{B, Dp, H, W});
  }
  CHECK_THROWS_AS(transform_features(x, fixed_linear(Tensor::eye(2)), 0.2f), DimensionError);
}

TEST_CASE("activation maps in (0,1) with sigmoid regularization") {
  std::mt19937_64 rng(2);
  for (auto mode : {MapMode::cls_then_gmp, MapMode::gap_then_cls, MapMode::gmp_then_cls}) {
    auto cfg = small_config(mode);
    auto x = random_tensor({3, 3, 4, 4}, rng, -20.0f, 20.0f);
    auto am = activation_maps(x, fixed_linear(random_tensor({4, 3}, rng), random_tensor({4}, rng)), cfg);
    CHECK(am.maps.shape() == Shape{3, 4, 4, 4});
    CHECK(am.scores.shape() == Shape{3, 4});
    for (float v : am.maps.data()) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
  }
}

TEST_CASE("cls_then_gmp on a single position returns the raw classifier output") {
  std::mt19937_64 rng(3);
  auto x = random_tensor({2, 3, 1, 1}, rng);
  auto cls = fixed_linear(random_tensor({4, 3}, rng), random_tensor({4}, rng));
  auto am = activation_maps(x, cls, small_config());
  auto raw = conv1x1(x, cls.weight, cls.bias);
  for (std::size_t i = 0; i < 8; ++i) CHECK(am.scores.data()[i] == raw.data()[i]);
}

TEST_CASE("gap_then_cls on a constant map equals the classifier on the constant") {
  std::mt19937_64 rng(4);
  std::vector<float> u = {0.5f, -1.0f, 2.0f};
  std::vector<float> xv;
  for (float c : u)
    for (int k = 0; k < 4; ++k) xv.push_back(c);
  auto x = Tensor::from({1, 3, 2, 2}, xv);
  auto w = random_tensor({4, 3}, rng);
  auto b = random_tensor({4}, rng);
  auto am = activation_maps(x, fixed_linear(w, b), small_config(MapMode::gap_then_cls));
  for (std::size_t c = 0; c < 4; ++c) {
    double want = b.at({c});
    for (std::size_t d = 0; d < 3; ++d) want += double(w.at({c, d})) * u[d];
    CHECK(am.scores.at({0, c}) == doctest::Approx(want).epsilon(1e-5));
  }
}

TEST_CASE("map modes do not collapse on random inputs") {
  std::mt19937_64 rng(5);
  auto x = random_tensor({2, 3, 3, 3}, rng);
  auto cls = fixed_linear(random_tensor({4, 3}, rng), random_tensor({4}, rng));
  auto gmp_of_scores = activation_maps(x, cls, small_config(MapMode::cls_then_gmp)).scores;
  auto scores_of_gap = activation_maps(x, cls, small_config(MapMode::gap_then_cls)).scores;
  auto scores_of_gmp = activation_maps(x, cls, small_config(MapMode::gmp_then_cls)).scores;
  double d1 = 0, d2 = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    d1 = std::max(d1, double(std::abs(gmp_of_scores.data()[i] - scores_of_gap.data()[i])));
    d2 = std::max(d2, double(std::abs(gmp_of_scores.data()[i] - scores_of_gmp.data()[i])));
  }
  CHECK(d1 > 1e-3);
  CHECK(d2 > 1e-3);
}

TEST_CASE("unknown map mode is a config error") {
  CHECK_THROWS_AS(parse_map_mode("gmp_then_gap"), ConfigError);
  CHECK(parse_map_mode("cls_then_gmp") == MapMode::cls_then_gmp);
}

TEST_CASE("category representations examples") {
  std::mt19937_64 rng(6);
  std::vector<float> u = {1.0f, -2.0f};
  std::vector<float> xv;
  for (float c : u)
    for (int k = 0; k < 6; ++k) xv.push_back(c);
  auto xp = Tensor::from({1, 2, 2, 3}, xv);
  auto v = category_representations(Tensor::full({1, 3, 2, 3}, 1.0f), xp);
  REQUIRE(v.shape() == Shape{1, 3, 2});
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(v.at({0, c, 0}) == 6.0f);
    CHECK(v.at({0, c, 1}) == -12.0f);
  }

  auto xr = random_tensor({1, 2, 2, 3}, rng);
  std::vector<float> one_hot(6, 0.0f);
  one_hot[4] = 1.0f;  // (i0, j0) = (1, 1)
  auto sel = category_representations(Tensor::from({1, 1, 2, 3}, one_hot), xr);
  CHECK(sel.at({0, 0, 0}) == xr.at({0, 0, 1, 1}));
  CHECK(sel.at({0, 0, 1}) == xr.at({0, 1, 1, 1}));

  CHECK_THROWS_AS(category_representations(Tensor::zeros({1, 3, 2, 2}), Tensor::zeros({1, 2, 2, 3})),
                  DimensionError);
}

TEST_CASE("category-weighted spatial sum matches a brute-force loop") {
  std::mt19937_64 rng(7);
  for (int s = 0; s < 10; ++s) {
    auto m = random_tensor({2, 4, 2, 2}, rng, 0.0f, 1.0f);
    auto xp = random_tensor({2, 3, 2, 2}, rng);
    auto v = category_representations(m, xp);
    auto want = brute_force_eq1(m, xp);
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(std::abs(v.data()[i] - want[i]) < 1e-5);
  }
}

TEST_CASE("category representations are linear in the maps") {
  std::mt19937_64 rng(8);
  auto m = random_tensor({2, 4, 3, 3}, rng, 0.0f, 1.0f);
  auto xp = random_tensor({2, 5, 3, 3}, rng);
  for (float alpha : {-1.5f, 0.0f, 0.25f, 3.0f}) {
    auto lhs = category_representations(m * alpha, xp);
    auto rhs = category_representations(m, xp) * alpha;
    for (std::size_t i = 0; i < lhs.numel(); ++i)
      CHECK(lhs.data()[i] == doctest::Approx(rhs.data()[i]).epsilon(1e-5).scale(1.0));
  }
}

TEST_CASE("permuting classifier rows permutes M, s_m and V") {
  std::mt19937_64 rng(9);
  auto cfg = small_config();
  std::mt19937_64 init(10);
  auto params = init_sam(cfg, init);
  auto x = random_tensor({2, 3, 3, 3}, rng);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  auto w = params.classifier.weight;
  auto b = *params.classifier.bias;
  std::vector<float> pw, pb;
  for (auto p : perm) {
    for (std::size_t d = 0; d < 3; ++d) pw.push_back(w.at({p, d}));
    pb.push_back(b.at({p}));
  }
  auto permuted = params;
  permuted.classifier = fixed_linear(Tensor::from({4, 3}, pw), Tensor::from({4}, pb));
  auto a = sam_forward(x, params, cfg);
  auto z = sam_forward(x, permuted, cfg);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(z.scores.at({n, c}) == a.scores.at({n, perm[c]}));
      for (std::size_t d = 0; d < 3; ++d)
        CHECK(z.representations.at({n, c, d}) == a.representations.at({n, perm[c], d}));
      for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) CHECK(z.maps.at({n, c, i, j}) == a.maps.at({n, perm[c], i, j}));
    }
}

TEST_CASE("gradient check through the full SAM") {
  for (auto mode : {MapMode::cls_then_gmp, MapMode::gap_then_cls, MapMode::gmp_then_cls}) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::mt19937_64 rng(seed);
      auto cfg = small_config(mode);
      auto x = random_parameter({2, 3, 2, 2}, rng);
      SamParams p{fixed_linear(random_parameter({3, 3}, rng), random_parameter({3}, rng)),
                  fixed_linear(random_parameter({4, 3}, rng), random_parameter({4}, rng))};
      auto f = [&] {
        auto out = sam_forward(x, p, cfg);
        return concat({reshape(out.representations, {2, 12}), out.scores, reshape(out.maps, {2, 16})}, 1);
      };
      worst = std::max(worst, gradient_error(f, {x, p.transform.weight, *p.transform.bias, p.classifier.weight,
                                                 *p.classifier.bias},
                                             seed));
    }
    INFO(to_string(mode) << " worst " << worst);
    CHECK(worst < 1e-3);
  }
}

TEST_CASE("SAM rejects a wrong channel count") {
  auto cfg = small_config();
  std::mt19937_64 rng(1);
  auto p = init_sam(cfg, rng);
  CHECK_THROWS_AS(sam_forward(Tensor::zeros({1, 5, 2, 2}), p, cfg), DimensionError);
  cfg.num_classes = 1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
