#include <cmath>

#include "doctest.h"
#include "shiftdet/postprocess.hpp"

using namespace shiftdet;

namespace {

std::vector<int> run_nms(const std::vector<Box>& b, const std::vector<double>& s, double thr) {
  return nms(std::span<const Box>(b), std::span<const double>(s), thr);
}

}  // namespace

TEST_SUITE("postprocess") {
  TEST_CASE("nms basic cases") {
    CHECK(run_nms({{0, 0, 10, 10}, {20, 20, 30, 30}, {40, 0, 50, 5}}, {0.1, 0.9, 0.5}, 0.5) ==
          std::vector<int>{1, 2, 0});
    CHECK(run_nms({{0, 0, 10, 10}, {0, 0, 10, 10}, {0, 0, 10, 10}}, {0.2, 0.7, 0.7}, 0.5) == std::vector<int>{1});
    CHECK(run_nms({}, {}, 0.5).empty());
  }

  TEST_CASE("nms chain keeps a and c") {
    // a-b and b-c overlap above the threshold, a-c below it.
    const Box a{0, 0, 10, 10};
    const Box b{2, 0, 12, 10};
    const Box c{4, 0, 14, 10};
    CHECK(iou(a, b) == doctest::Approx(8.0 / 12.0));
    CHECK(iou(b, c) == doctest::Approx(8.0 / 12.0));
    CHECK(iou(a, c) == doctest::Approx(6.0 / 14.0));
    CHECK(run_nms({a, b, c}, {0.9, 0.8, 0.7}, 0.5) == std::vector<int>{0, 2});
  }

  TEST_CASE("nms suppresses only strictly above the threshold") {
    const Box a{0, 0, 10, 10}, b{0, 0, 5, 10};  // IoU exactly 0.5
    CHECK(run_nms({a, b}, {0.9, 0.8}, 0.5).size() == 2u);
    CHECK(run_nms({a, b}, {0.9, 0.8}, 0.49).size() == 1u);
  }

  TEST_CASE("decode: confident background yields nothing") {
    TensorF logits({1, 5});
    // background 0.99, the rest share 0.01.
    logits[0] = std::log(0.99f);
    for (int c = 1; c < 5; ++c) logits[c] = std::log(0.0025f);
    const std::vector<Box> props{{10, 10, 30, 30}};
    CHECK(decode_detections(logits, TensorF({1, 4}), std::span<const Box>(props), 64, 64, 0).empty());
  }

  TEST_CASE("decode: per-class suppression") {
    const std::vector<Box> props{{10, 10, 30, 30}, {11, 10, 31, 30}};  // IoU ~0.9
    TensorF logits({2, 3});
    SUBCASE("same class: the higher score survives") {
      logits.at(0, 1) = 5;
      logits.at(1, 1) = 4;
      const auto d = decode_detections(logits, TensorF({2, 4}), std::span<const Box>(props), 64, 64, 3);
      REQUIRE(d.size() == 1u);
      CHECK(d[0].box == props[0]);
      CHECK(d[0].frame_index == 3);
      CHECK(d[0].class_id == 1);
    }
    SUBCASE("different classes: both survive") {
      logits.at(0, 1) = 5;
      logits.at(1, 2) = 5;
      DecodeOptions o;
      o.score_threshold = 0.5;
      const auto d = decode_detections(logits, TensorF({2, 4}), std::span<const Box>(props), 64, 64, 0, o);
      REQUIRE(d.size() == 2u);
      CHECK(d[0].class_id != d[1].class_id);
    }
  }

  TEST_CASE("decode: output is capped and sorted") {
    std::vector<Box> props;
    for (int i = 0; i < 40; ++i) props.push_back({static_cast<double>(i % 8) * 8, static_cast<double>(i / 8) * 12,
                                                  static_cast<double>(i % 8) * 8 + 6, static_cast<double>(i / 8) * 12 + 10});
    TensorF logits({40, 3});
    for (int i = 0; i < 40; ++i) logits.at(i, 1) = 0.1f * static_cast<float>(i);
    const auto d = decode_detections(logits, TensorF({40, 4}), std::span<const Box>(props), 64, 64, 0);
    CHECK(d.size() == 20u);
    for (std::size_t i = 1; i < d.size(); ++i) CHECK(d[i - 1].score >= d[i].score);
  }

  TEST_CASE("top detection") {
    CHECK_FALSE(top_detection({}).has_value());
    const std::vector<Detection> d{{0, {0, 0, 1, 1}, 1, 0.4}, {1, {0, 0, 2, 2}, 1, 0.9}, {2, {0, 0, 3, 3}, 2, 0.9}};
    const auto best = top_detection(d);
    REQUIRE(best.has_value());
    CHECK(best->frame_index == 1);
  }
}
