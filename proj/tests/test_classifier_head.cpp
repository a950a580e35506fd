#include <doctest.h>

#include <cmath>

#include "addgcn/classifier_head.hpp"
#include "support.hpp"

using namespace addgcn;
using addgcn::testing::gradient_error;
using addgcn::testing::random_parameter;
using addgcn::testing::random_tensor;

TEST_CASE("Bi scores: one binary classifier per class") {
  std::mt19937_64 rng(1);
  auto z = random_tensor({3, 4, 5}, rng);
  Linear beta{Tensor::zeros({4, 5}), Tensor::full({4}, 0.75f)};
  auto s = relation_scores(z, Aggregation::Bi, beta);
  CHECK(s.shape() == Shape{3, 4});
  for (float v : s.data()) CHECK(v == 0.75f);

  auto hand = relation_scores(Tensor::from({1, 2, 2}, {1, 2, 3, 4}), Aggregation::Bi,
                              Linear{Tensor::from({2, 2}, {0.5f, -1.0f, 2.0f, 0.25f}), Tensor::from({2}, {0.1f, -0.1f})});
  CHECK(hand.at({0, 0}) == doctest::Approx(0.5 * 1 - 1.0 * 2 + 0.1));
  CHECK(hand.at({0, 1}) == doctest::Approx(2.0 * 3 + 0.25 * 4 - 0.1));
}

TEST_CASE("Bi score for class c depends only on z_c") {
  std::mt19937_64 rng(2);
  auto z = random_tensor({2, 4, 3}, rng);
  auto cls = Linear{random_tensor({4, 3}, rng), random_tensor({4}, rng)};
  auto base = relation_scores(z, Aggregation::Bi, cls);
  std::vector<float> zv(z.data().begin(), z.data().end());
  for (std::size_t d = 0; d < 3; ++d) zv[(0 * 4 + 2) * 3 + d] += 5.0f;  // perturb z_2 of sample 0
  auto moved = relation_scores(Tensor::from(z.shape(), zv), Aggregation::Bi, cls);
  for (std::size_t c = 0; c < 4; ++c) {
    if (c == 2) {
      CHECK(moved.at({0, c}) != base.at({0, c}));
    } else {
      CHECK(moved.at({0, c}) == base.at({0, c}));
    }
    CHECK(moved.at({1, c}) == base.at({1, c}));
  }
}

TEST_CASE("Avg and Sum differ by the class count before the bias") {
  std::mt19937_64 rng(3);
  auto z = random_tensor({2, 4, 3}, rng);
  Linear w{random_tensor({4, 3}, rng), std::nullopt};
  auto sum_s = relation_scores(z, Aggregation::Sum, w);
  auto avg_s = relation_scores(z, Aggregation::Avg, w);
  for (std::size_t i = 0; i < sum_s.numel(); ++i)
    CHECK(sum_s.data()[i] == doctest::Approx(4.0 * avg_s.data()[i]).epsilon(1e-5));

  auto max_s = relation_scores(z, Aggregation::Max, w);
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 4; ++c) {
      double want = 0;
      for (std::size_t d = 0; d < 3; ++d) {
        float m = z.at({b, 0, d});
        for (std::size_t k = 1; k < 4; ++k) m = std::max(m, z.at({b, k, d}));
        want += double(w.weight.at({c, d})) * m;
      }
      CHECK(max_s.at({b, c}) == doctest::Approx(want).epsilon(1e-5));
    }
  CHECK_THROWS_AS(parse_aggregation("Mean"), ConfigError);
  CHECK(all_aggregations().size() == 4);
}

TEST_CASE("fuse_scores averages the two paths") {
  auto s = fuse_scores(Tensor::from({1, 2}, {1, 3}), Tensor::from({1, 2}, {3, 1}));
  CHECK(s.at({0, 0}) == 2.0f);
  CHECK(s.at({0, 1}) == 2.0f);
  std::mt19937_64 rng(4);
  auto r = random_tensor({2, 3}, rng);
  auto m = random_tensor({2, 3}, rng);
  auto same = fuse_scores(r, r);
  for (std::size_t i = 0; i < 6; ++i) CHECK(same.data()[i] == r.data()[i]);
  auto ab = fuse_scores(r, m), ba = fuse_scores(m, r);
  for (std::size_t i = 0; i < 6; ++i) CHECK(ab.data()[i] == ba.data()[i]);
  CHECK_THROWS_AS(fuse_scores(r, Tensor::zeros({3, 2})), DimensionError);

  auto pr = Tensor::parameter(r), pm = Tensor::parameter(m);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(sum(fuse_scores(pr, pm)));
  for (float g : pr.grad()) CHECK(g == 0.5f);
  for (float g : pm.grad()) CHECK(g == 0.5f);
}

TEST_CASE("bce_loss examples") {
  for (std::size_t c : {1u, 2u, 8u}) {
    std::mt19937_64 rng(c);
    std::vector<float> y(3 * c);
    for (auto& v : y) v = float(rng() % 2);
    auto loss = bce_loss(Tensor::zeros({3, c}), Tensor::from({3, c}, y));
    CHECK(std::abs(loss.item() - double(c) * std::log(2.0)) < 1e-6 * double(c));
  }
  auto hand = bce_loss(Tensor::from({1, 2}, {2.0f, -1.0f}), Tensor::from({1, 2}, {1.0f, 0.0f}));
  CHECK(std::abs(hand.item() - 0.440190) < 1e-6);
  double naive = -(std::log(1 / (1 + std::exp(-2.0))) + std::log(1 - 1 / (1 + std::exp(1.0))));
  CHECK(std::abs(hand.item() - naive) < 1e-6);

  auto saturated = bce_loss(Tensor::from({1, 1}, {60.0f}), Tensor::from({1, 1}, {1.0f}));
  CHECK(saturated.item() >= 0.0f);
  CHECK(saturated.item() < 1e-20);
  auto huge = bce_loss(Tensor::from({1, 2}, {-1e4f, 1e4f}), Tensor::from({1, 2}, {1.0f, 0.0f}));
  CHECK(std::isfinite(huge.item()));
  CHECK(huge.item() == doctest::Approx(2e4));

  CHECK_THROWS_AS(bce_loss(Tensor::zeros({1, 2}), Tensor::from({1, 2}, {0.5f, 1.0f})), ContractError);
  CHECK_THROWS_AS(bce_loss(Tensor::zeros({1, 2}), Tensor::zeros({2, 1})), DimensionError);
}

TEST_CASE("bce_loss is non-negative and its gradient is (sigmoid(s) - y) / B") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    auto s = random_parameter({3, 4}, rng);
    std::vector<float> y(12);
    for (auto& v : y) v = float(rng() % 2);
    auto labels = Tensor::from({3, 4}, y);
    Tape tape;
    TapeScope scope(tape);
    auto loss = bce_loss(s, labels);
    CHECK(loss.item() >= 0.0f);
    tape.backward(loss);
    for (std::size_t i = 0; i < 12; ++i) {
      const double sig = 1.0 / (1.0 + std::exp(-double(s.data()[i])));
      CHECK(std::abs(s.grad()[i] - (sig - y[i]) / 3.0) < 1e-6);
    }
    CHECK(gradient_error([&] { return bce_loss(s, labels); }, {s}, seed) < 1e-3);
  }
}
