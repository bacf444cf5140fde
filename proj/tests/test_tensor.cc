#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "pixlab/error.h"
#include "pixlab/random.h"
#include "pixlab/tensor.h"

using namespace pixlab;

namespace {

Tensor random_tensor(Rng& rng, const Shape& shape, double lo, double hi) {
  Tensor t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("tensor construction checks the element count") {
  CHECK_NOTHROW(Tensor({2, 3}, std::vector<double>(6, 1.0)));
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 1.0)), ShapeError);
  const Tensor t({2, 2, 3}, 7.0);
  CHECK(t.size() == 12);
  CHECK(t.rank() == 3);
  CHECK(shape_string(t.shape()) == "(2,2,3)");
}

TEST_CASE("at() is channel-last row-major") {
  Tensor t({2, 3, 3});
  t.at(1, 2, 0) = 5.0;
  CHECK(t[(1 * 3 + 2) * 3 + 0] == 5.0);
}

TEST_CASE("elementwise ops") {
  const Tensor v({3}, {-2.0, 0.0, 3.0});
  CHECK(elementwise(ElementOp::kSign, v, 0.0).data() == std::vector<double>{-1.0, 0.0, 1.0});
  CHECK(elementwise(ElementOp::kAdd, Tensor({2}, {1.0, 2.0}), 0.0).data() == std::vector<double>{1.0, 2.0});
  CHECK(elementwise(ElementOp::kClampHi, Tensor({2}, {100.0, 300.0}), 255.0).data() ==
        std::vector<double>{100.0, 255.0});
  CHECK(elementwise(ElementOp::kClampLo, Tensor({2}, {-4.0, 3.0}), 0.0).data() == std::vector<double>{0.0, 3.0});
  CHECK(elementwise(ElementOp::kAbs, v, 0.0).data() == std::vector<double>{2.0, 0.0, 3.0});
  CHECK(elementwise(ElementOp::kSub, v, Tensor({3}, {1.0, 1.0, 1.0})).data() == std::vector<double>{-3.0, -1.0, 2.0});
  CHECK(elementwise(ElementOp::kMul, v, Tensor({3}, {2.0, 5.0, -1.0})).data() == std::vector<double>{-4.0, 0.0, -3.0});
  CHECK_THROWS_AS(elementwise(ElementOp::kAdd, v, Tensor({2})), ShapeError);
}

TEST_CASE("linf and l2 distances") {
  const Tensor a({2}, {0.0, 0.0});
  const Tensor b({2}, {3.0, -5.0});
  CHECK(linf_distance(a, a) == 0.0);
  CHECK(linf_distance(a, b) == 5.0);
  CHECK(l2_distance(a, b) == doctest::Approx(std::sqrt(34.0)));
  CHECK_THROWS_AS(linf_distance(a, Tensor({3})), ShapeError);

  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_tensor(rng, {4, 5, 3}, -200.0, 200.0);
    const auto y = random_tensor(rng, {4, 5, 3}, -200.0, 200.0);
    double oracle = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) oracle = std::max(oracle, std::fabs(x[i] - y[i]));
    CHECK(linf_distance(x, y) == oracle);
  }
}

TEST_CASE("channel_stats on an all-zero image") {
  const auto s = channel_stats(Tensor({2, 2, 3}, 0.0));
  REQUIRE(s.size() == 3);
  for (const auto& c : s) {
    CHECK(c.min == 0.0);
    CHECK(c.max == 0.0);
    CHECK(c.mean == 0.0);
    CHECK(c.zero_count == 4);
  }
}

TEST_CASE("channel_stats with a constant channel at the blue lower limit") {
  Tensor t({3, 3, 3}, 1.0);
  for (std::size_t h = 0; h < 3; ++h)
    for (std::size_t w = 0; w < 3; ++w) t.at(h, w, 0) = -103.939;
  const auto s = channel_stats(t);
  CHECK(s[0].min == -103.939);
  CHECK(s[0].max == -103.939);
  CHECK(s[0].mean == -103.939);
  CHECK(s[0].stddev == 0.0);
}

TEST_CASE("channel_stats matches a brute-force scan") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    auto t = random_tensor(rng, {5, 4, 3}, -1.0, 1.0);
    for (std::size_t i = 0; i < t.size(); i += 7) t[i] = 0.0;
    const auto s = channel_stats(t);
    for (std::size_t c = 0; c < 3; ++c) {
      double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
      std::size_t zeros = 0;
      for (std::size_t h = 0; h < 5; ++h) {
        for (std::size_t w = 0; w < 4; ++w) {
          const double v = t.at(h, w, c);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
          sum += v;
          zeros += v == 0.0;
        }
      }
      const double mean = sum / 20.0;
      double sq = 0.0;
      for (std::size_t h = 0; h < 5; ++h)
        for (std::size_t w = 0; w < 4; ++w) sq += (t.at(h, w, c) - mean) * (t.at(h, w, c) - mean);
      CHECK(s[c].min == lo);
      CHECK(s[c].max == hi);
      CHECK(s[c].mean == doctest::Approx(mean).epsilon(1e-12));
      CHECK(s[c].stddev == doctest::Approx(std::sqrt(sq / 20.0)).epsilon(1e-12));
      CHECK(s[c].zero_count == zeros);
      CHECK(s[c].min <= s[c].mean);
      CHECK(s[c].mean <= s[c].max);
    }
  }
}

TEST_CASE("negative zero counts as zero") {
  Tensor t({1, 1, 3}, 1.0);
  t[0] = -0.0;
  CHECK(zero_count(t) == 1);
  CHECK(channel_stats(t)[0].zero_count == 1);
}

TEST_CASE("channel_stats requires rank 3") {
  CHECK_THROWS_AS(channel_stats(Tensor({4, 3})), ShapeError);
}
