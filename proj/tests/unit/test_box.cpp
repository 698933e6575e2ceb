#include <random>

#include "doctest.h"
#include "shiftdet/box.hpp"
#include "shiftdet/tensor.hpp"

using namespace shiftdet;

namespace {

Box random_box(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(0, 50), size(1, 30);
  const double x = pos(rng), y = pos(rng);
  return {x, y, x + size(rng), y + size(rng)};
}

}  // namespace

TEST_SUITE("box") {
  TEST_CASE("iou values") {
    const Box a{0, 0, 10, 10};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, {10, 0, 20, 10}) == 0.0);
    CHECK(iou(a, {5, 0, 15, 10}) == doctest::Approx(50.0 / 150.0));
    CHECK(iou(a, {0, 0, 5, 10}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(iou(a, {3, 3, 3, 8}), ContractError);
  }

  TEST_CASE("iou is symmetric and bounded") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 500; ++i) {
      const auto a = random_box(rng), b = random_box(rng);
      const double v = iou(a, b);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      CHECK(v == iou(b, a));
    }
  }

  TEST_CASE("decode inverts encode") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 500; ++i) {
      const auto anchor = random_box(rng), target = random_box(rng);
      const auto back = decode_box(anchor, encode_box(anchor, target));
      CHECK(back.x1 == doctest::Approx(target.x1).epsilon(1e-9));
      CHECK(back.y2 == doctest::Approx(target.y2).epsilon(1e-9));
    }
    const auto zero = encode_box({1, 2, 5, 9}, {1, 2, 5, 9});
    for (double d : zero) CHECK(d == 0.0);
  }

  TEST_CASE("decode clamps runaway size deltas") {
    const auto b = decode_box({0, 0, 16, 16}, {0, 0, 100, 100});
    CHECK(std::isfinite(b.x2));
    CHECK(b.width() == doctest::Approx(1000.0));
  }

  TEST_CASE("clip and scale") {
    const auto c = clip_box({-5, 3, 70, 80}, 64, 64);
    CHECK(c == Box{0, 3, 64, 64});
    CHECK(scale_box({1, 2, 3, 4}, 2, 0.5) == Box{2, 1, 6, 2});
  }
}
