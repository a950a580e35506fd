#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "addgcn/metrics.hpp"
#include "oracles.hpp"

using namespace addgcn;
using namespace addgcn::oracle;

namespace {

EvalBatch make_batch(std::size_t n, std::size_t c, std::vector<double> scores, std::vector<std::uint8_t> labels) {
  EvalBatch b;
  b.samples = n;
  b.classes = c;
  b.scores = std::move(scores);
  b.labels = std::move(labels);
  return b;
}

EvalBatch random_batch(std::size_t n, std::size_t c, std::mt19937_64& rng) {
  std::normal_distribution<double> score(0.0, 2.0);
  EvalBatch b;
  b.samples = n;
  b.classes = c;
  for (std::size_t i = 0; i < n * c; ++i) {
    b.scores.push_back(score(rng));
    b.labels.push_back(rng() % 3 == 0);
  }
  return b;
}

void check_suite(const PrfSuite& got, const PrfSuite& want, double tol = 1e-12) {
  CHECK(std::abs(got.cp - want.cp) < tol);
  CHECK(std::abs(got.cr - want.cr) < tol);
  CHECK(std::abs(got.cf1 - want.cf1) < tol);
  CHECK(std::abs(got.op - want.op) < tol);
  CHECK(std::abs(got.orr - want.orr) < tol);
  CHECK(std::abs(got.of1 - want.of1) < tol);
}

}  // namespace

TEST_CASE("average precision examples") {
  std::vector<double> s = {0.9, 0.8, 0.7};
  std::vector<std::uint8_t> y = {0, 1, 1};
  CHECK(*average_precision(s, y) == doctest::Approx((0.5 + 2.0 / 3.0) / 2.0));
  CHECK(*average_precision(std::vector<double>{3, 2, 1, 0}, std::vector<std::uint8_t>{1, 1, 0, 0}) == 1.0);
  CHECK(*average_precision(std::vector<double>{-1}, std::vector<std::uint8_t>{1}) == 1.0);
  CHECK_FALSE(average_precision(s, std::vector<std::uint8_t>{0, 0, 0}));
  // exact ties go to the lower index
  CHECK(*average_precision(std::vector<double>{1, 1}, std::vector<std::uint8_t>{0, 1}) == 0.5);
  CHECK(*average_precision(std::vector<double>{1, 1}, std::vector<std::uint8_t>{1, 0}) == 1.0);
}

TEST_CASE("AP matches an independently coded ranked-list oracle") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    auto b = random_batch(4, 3, rng);
    auto report = evaluate(b);
    double sum = 0;
    int k = 0;
    for (std::size_t c = 0; c < 3; ++c) {
      std::vector<double> s;
      std::vector<std::uint8_t> y;
      for (std::size_t n = 0; n < 4; ++n) {
        s.push_back(b.score(n, c));
        y.push_back(b.labels[n * 3 + c]);
      }
      auto want = ap_oracle(s, y);
      REQUIRE(report.class_ap[c].has_value() == want.has_value());
      if (want) {
        CHECK(std::abs(*report.class_ap[c] - *want) < 1e-5);
        sum += *want;
        ++k;
      }
    }
    if (k) CHECK(std::abs(report.map - sum / k) < 1e-5);
  }
}

TEST_CASE("P/R/F1 suites: hand cases") {
  auto perfect = make_batch(2, 3, {2, -1, 3, -2, 1, -1}, {1, 0, 1, 0, 1, 0});
  auto s = prf_suite(perfect, false);
  check_suite(s, PrfSuite{1, 1, 1, 1, 1, 1});

  // N=2, C=3: one false positive (sample 0, class 1) and one false negative (sample 1, class 2)
  auto hand = make_batch(2, 3, {2, 1, -1, -2, 1, -1}, {1, 0, 0, 0, 1, 1});
  auto h = prf_suite(hand, false);
  // class 0: tp1 fp0 fn0; class 1: tp1 fp1; class 2: tp0 fn1
  CHECK(h.cp == doctest::Approx((1.0 + 0.5 + 0.0) / 3.0));
  CHECK(h.cr == doctest::Approx((1.0 + 1.0 + 0.0) / 3.0));
  CHECK(h.op == doctest::Approx(2.0 / 3.0));
  CHECK(h.orr == doctest::Approx(2.0 / 3.0));
  check_suite(h, prf_oracle(hand, false));

  auto none = make_batch(2, 2, {-1, -1, -1, -1}, {1, 0, 1, 1});
  auto z = prf_suite(none, false);
  CHECK(z.cr == 0.0);
  CHECK(z.orr == 0.0);
  CHECK(z.cf1 == 0.0);
  CHECK(z.of1 == 0.0);
}

TEST_CASE("metrics equal a brute-force confusion oracle on every N=2, C=2 label pattern") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> score(0.0, 2.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> scores(4);
    for (auto& v : scores) v = score(rng);
    for (unsigned pattern = 0; pattern < 16; ++pattern) {
      std::vector<std::uint8_t> y(4);
      for (int i = 0; i < 4; ++i) y[i] = (pattern >> i) & 1u;
      auto b = make_batch(2, 2, scores, y);
      auto report = evaluate(b);
      check_suite(report.all, prf_oracle(b, false));
      check_suite(report.top3, prf_oracle(b, true));
      double sum = 0;
      int k = 0;
      for (std::size_t c = 0; c < 2; ++c) {
        auto want = ap_oracle({scores[c], scores[2 + c]}, {y[c], y[2 + c]});
        if (want) {
          CHECK(std::abs(*report.class_ap[c] - *want) < 1e-12);
          sum += *want;
          ++k;
        }
      }
      CHECK(std::abs(report.map - (k ? sum / k : 0.0)) < 1e-12);
    }
  }
}

TEST_CASE("top-3 is rank-only by default, thresholded behind a flag") {
  auto b = make_batch(1, 5, {-3, -2, -1, -4, -5}, {1, 1, 0, 0, 0});
  auto ranked = prf_suite(b, true);
  CHECK(ranked.orr == 1.0);
  CHECK(ranked.op == doctest::Approx(2.0 / 3.0));
  MetricsOptions opts;
  opts.top_k_threshold = true;
  auto thresholded = prf_suite(b, true, opts);
  CHECK(thresholded.orr == 0.0);
}

TEST_CASE("report invariants on random batches") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    auto b = random_batch(6, 4, rng);
    auto r = evaluate(b);
    for (const auto* s : {&r.all, &r.top3}) {
      for (double v : {s->cp, s->cr, s->cf1, s->op, s->orr, s->of1}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      CHECK(s->of1 <= std::max(s->op, s->orr) + 1e-12);
      CHECK(s->cf1 <= std::max(s->cp, s->cr) + 1e-12);
      if (s->op > 0 && s->orr > 0) {
        CHECK(s->of1 >= std::min(s->op, s->orr) - 1e-12);
      }
    }
    CHECK(r.map >= 0.0);
    CHECK(r.map <= 1.0);
  }
}

TEST_CASE("permuting sample order leaves the report unchanged") {
  std::mt19937_64 rng(4);
  auto b = random_batch(8, 3, rng);
  auto base = evaluate(b);
  std::vector<std::size_t> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  EvalBatch p = b;
  for (std::size_t n = 0; n < 8; ++n)
    for (std::size_t c = 0; c < 3; ++c) {
      p.scores[n * 3 + c] = b.score(perm[n], c);
      p.labels[n * 3 + c] = b.labels[perm[n] * 3 + c];
    }
  auto r = evaluate(p);
  CHECK(r.map == doctest::Approx(base.map).epsilon(1e-12));
  check_suite(r.all, base.all);
  check_suite(r.top3, base.top3);
}

TEST_CASE("mAP is invariant to strictly monotone score transforms") {
  std::mt19937_64 rng(5);
  auto b = random_batch(10, 4, rng);
  auto t = b;
  for (auto& s : t.scores) s = std::exp(s) * 3.0 + 1.0;
  CHECK(evaluate(t).map == evaluate(b).map);
}

TEST_CASE("duplicating every sample leaves the P/R/F1 suites unchanged") {
  std::mt19937_64 rng(6);
  auto b = random_batch(7, 4, rng);
  auto d = b;
  d.samples *= 2;
  d.scores.insert(d.scores.end(), b.scores.begin(), b.scores.end());
  d.labels.insert(d.labels.end(), b.labels.begin(), b.labels.end());
  check_suite(prf_suite(d, false), prf_suite(b, false));
  check_suite(prf_suite(d, true), prf_suite(b, true));
}

TEST_CASE("AP is not duplication-invariant") {
  std::vector<double> s = {0.9, 0.8, 0.7, 0.9, 0.8, 0.7};
  std::vector<std::uint8_t> y = {0, 1, 1, 0, 1, 1};
  // ranks: n n p p p p -> (1/3 + 2/4 + 3/5 + 4/6) / 4
  CHECK(*average_precision(s, y) == doctest::Approx((1.0 / 3 + 0.5 + 0.6 + 4.0 / 6) / 4));
  CHECK(*average_precision(s, y) < *average_precision(std::vector<double>{0.9, 0.8, 0.7},
                                                      std::vector<std::uint8_t>{0, 1, 1}));
}

TEST_CASE("classes without positives are skipped") {
  auto b = make_batch(2, 2, {1, -1, -1, 1}, {1, 0, 1, 0});
  auto r = evaluate(b);
  CHECK_FALSE(r.class_ap[1]);
  CHECK(r.map == 1.0);
  CHECK(r.all.cr == 0.5);
}

TEST_CASE("invalid batches are rejected") {
  auto b = make_batch(1, 2, {0, 0}, {1, 2});
  CHECK_THROWS(evaluate(b));
  auto short_scores = make_batch(2, 2, {0, 0}, {1, 0, 1, 0});
  CHECK_THROWS(evaluate(short_scores));
}

TEST_CASE("report serializations") {
  std::mt19937_64 rng(7);
  auto b = random_batch(5, 3, rng);
  auto r = evaluate(b);
  auto j = to_json(r);
  for (const char* key : {"mAP", "CP", "CR", "CF1", "OP", "OR", "OF1", "CP_top3", "OF1_top3", "class_AP"})
    CHECK(j.contains(key));
  CHECK(j["mAP"].get<double>() == r.map);
  auto header = csv_header();
  auto row = csv_row(r);
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));

  b.ids = {"a", "b", "c", "d", "e"};
  auto path = std::filesystem::temp_directory_path() / "addgcn_scores.jsonl";
  write_scores_jsonl(path, b);
  auto back = read_scores_jsonl(path);
  CHECK(back.samples == 5);
  CHECK(back.classes == 3);
  CHECK(back.ids == b.ids);
  CHECK(back.labels == b.labels);
  for (std::size_t i = 0; i < b.scores.size(); ++i) CHECK(back.scores[i] == doctest::Approx(b.scores[i]));
  std::filesystem::remove(path);
}
