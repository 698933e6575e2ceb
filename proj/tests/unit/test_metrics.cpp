#include <random>

#include "doctest.h"
#include "shiftdet/metrics.hpp"
#include "test_support.hpp"

using namespace shiftdet;

namespace {

double ap_of(std::vector<char> tp, int gt) { return average_precision(tp, gt).value(); }

FrameTruth one_gt(Box b, int label) {
  FrameTruth t;
  t.boxes = {b};
  t.labels = {label};
  return t;
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("matching rules") {
    const std::vector<FrameTruth> truth{one_gt({0, 0, 10, 10}, 1)};
    SUBCASE("IoU 0.8 with the right class is a TP") {
      const std::vector<Detection> d{{0, {0, 0, 10, 8}, 1, 0.9}};
      const auto m = match_detections(d, truth, 2);
      CHECK(m[0].true_positive == std::vector<char>{1});
      CHECK(m[0].num_gt == 1);
    }
    SUBCASE("duplicate: higher score TP, other FP") {
      const std::vector<Detection> d{{0, {0, 0, 10, 9}, 1, 0.3}, {0, {0, 0, 10, 10}, 1, 0.8}};
      const auto m = match_detections(d, truth, 1);
      CHECK(m[0].scores == std::vector<double>{0.8, 0.3});
      CHECK(m[0].true_positive == std::vector<char>{1, 0});
    }
    SUBCASE("IoU 0.4 is a FP") {
      const std::vector<Detection> d{{0, {0, 0, 10, 4}, 1, 0.9}};
      CHECK(match_detections(d, truth, 1)[0].true_positive == std::vector<char>{0});
    }
    SUBCASE("IoU exactly 0.5 matches") {
      const std::vector<Detection> d{{0, {0, 0, 10, 5}, 1, 0.9}};
      CHECK(match_detections(d, truth, 1)[0].true_positive == std::vector<char>{1});
    }
    SUBCASE("wrong class never matches") {
      const std::vector<Detection> d{{0, {0, 0, 10, 10}, 2, 0.9}};
      const auto m = match_detections(d, truth, 2);
      CHECK(m[1].true_positive == std::vector<char>{0});
      CHECK(m[0].true_positive.empty());
    }
  }

  TEST_CASE("matching is invariant to input order") {
    std::mt19937_64 rng(11);
    for (int it = 0; it < 100; ++it) {
      auto inst = testing_support::random_ap_instance(rng);
      for (auto& d : inst.detections) d.score += 1e-3 * static_cast<double>(&d - inst.detections.data());
      const auto a = match_detections(inst.detections, inst.truth, 1);
      std::shuffle(inst.detections.begin(), inst.detections.end(), rng);
      const auto b = match_detections(inst.detections, inst.truth, 1);
      CHECK(a[0].true_positive == b[0].true_positive);
      int tps = 0;
      for (char t : a[0].true_positive) tps += t;
      CHECK(tps <= a[0].num_gt);
      CHECK(a[0].true_positive.size() == inst.detections.size());
    }
  }

  TEST_CASE("average precision values") {
    CHECK(ap_of({1}, 1) == 1.0);
    CHECK(ap_of({0, 1}, 1) == doctest::Approx(0.5));
    CHECK(ap_of({1, 0, 1}, 2) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0));
    CHECK(ap_of({}, 3) == 0.0);
    CHECK(ap_of({1}, 0) == 0.0);
    CHECK_FALSE(average_precision({}, 0).has_value());
    CHECK(average_precision(std::vector<char>{1}, 1, ApMethod::eleven_point).value() == doctest::Approx(1.0));
  }

  TEST_CASE("AP matches the brute-force oracle") {
    std::mt19937_64 rng(12);
    for (int it = 0; it < 500; ++it) {
      const auto inst = testing_support::random_ap_instance(rng);
      const auto m = match_detections(inst.detections, inst.truth, 1);
      const double got = average_precision(m[0].true_positive, m[0].num_gt).value_or(0.0);
      CHECK(got == doctest::Approx(testing_support::brute_force_instance_ap(inst, 0.5)).epsilon(1e-12));
    }
  }

  TEST_CASE("AP never increases when a TP becomes a FP") {
    std::mt19937_64 rng(13);
    std::bernoulli_distribution coin(0.5);
    for (int it = 0; it < 300; ++it) {
      std::vector<char> tp(1 + rng() % 8);
      int hits = 0;
      for (auto& t : tp) hits += (t = coin(rng) ? 1 : 0);
      const int gt = hits + static_cast<int>(rng() % 3);
      if (gt == 0) continue;
      const double base = ap_of(tp, gt);
      CHECK(base >= 0.0);
      CHECK(base <= 1.0);
      for (auto& t : tp) {
        if (!t) continue;
        t = 0;
        CHECK(ap_of(tp, gt) <= base + 1e-15);
        t = 1;
      }
    }
  }

  TEST_CASE("mAP arithmetic") {
    const std::vector<std::optional<double>> aps{1.0, 0.5, std::nullopt};
    CHECK(mean_ap(aps) == 0.75);
    const std::vector<FrameTruth> truth{one_gt({0, 0, 10, 10}, 1), one_gt({5, 5, 20, 20}, 2)};
    const std::vector<Detection> perfect{{0, {0, 0, 10, 10}, 1, 0.9}, {1, {5, 5, 20, 20}, 2, 0.8}};
    CHECK(frame_map(perfect, truth, 2) == 1.0);
    CHECK(frame_map({}, truth, 2) == 0.0);
  }

  TEST_CASE("confusion matrix rules") {
    const std::vector<FrameTruth> truth{one_gt({0, 0, 10, 10}, 1)};
    auto cm = [&](Detection d) { return confusion_matrix(std::vector<Detection>{d}, truth, 2); };
    CHECK(cm({0, {0, 0, 10, 8}, 1, 0.9}).at(0, 0) == 1);
    CHECK(cm({0, {0, 0, 10, 8}, 2, 0.9}).at(0, 1) == 1);
    CHECK(cm({0, {0, 0, 10, 3}, 1, 0.9}).at(0, 2) == 1);
    CHECK(cm({0, {0, 0, 10, 5}, 1, 0.9}).at(0, 0) == 1);  // IoU exactly 0.5 counts as a match
    CHECK(cm({0, {0, 0, 10, 8}, 1, 0.2}).at(0, 2) == 1);  // below the score threshold
  }

  TEST_CASE("confusion rows sum to the ground-truth counts") {
    std::mt19937_64 rng(14);
    std::uniform_int_distribution<int> cls(1, 3);
    for (int it = 0; it < 200; ++it) {
      auto inst = testing_support::random_ap_instance(rng, 8, 4);
      for (auto& t : inst.truth)
        for (auto& l : t.labels) l = cls(rng);
      for (auto& d : inst.detections) d.class_id = cls(rng);
      const auto m = confusion_matrix(inst.detections, inst.truth, 3, 0.5, 0.3);
      std::vector<std::int64_t> gt(3, 0);
      std::int64_t total = 0;
      for (const auto& t : inst.truth)
        for (int l : t.labels) ++gt[static_cast<std::size_t>(l - 1)], ++total;
      for (int r = 0; r < 3; ++r) CHECK(m.row_sum(r) == gt[static_cast<std::size_t>(r)]);
      CHECK(m.total() == total);
    }
  }

  TEST_CASE("fall metrics") {
    // 5 fall frames all caught; 16 non-fall frames with one false alarm.
    std::vector<char> actual(21, 0), predicted(21, 0);
    for (int i = 0; i < 5; ++i) actual[static_cast<std::size_t>(i)] = predicted[static_cast<std::size_t>(i)] = 1;
    predicted[10] = 1;
    const auto m = fall_metrics(predicted, actual);
    CHECK(m.tp == 5);
    CHECK(m.tn == 15);
    CHECK(m.fp == 1);
    CHECK(m.fn == 0);
    CHECK(*m.sensitivity == 100.0);
    CHECK(*m.specificity == doctest::Approx(93.75));
    CHECK(*m.accuracy == doctest::Approx(95.238).epsilon(1e-5));
    CHECK(*m.accuracy == doctest::Approx(100.0 * (m.tp + m.tn) / (m.tp + m.tn + m.fp + m.fn)));
    const std::vector<char> none(4, 0);
    CHECK_FALSE(fall_metrics(none, none).sensitivity.has_value());
  }

  TEST_CASE("report records round trip and fall metrics appear for a fall vocabulary") {
    const std::vector<FrameTruth> truth{one_gt({0, 0, 10, 10}, 1), one_gt({5, 5, 20, 20}, 2), FrameTruth{}};
    const std::vector<Detection> dets{{0, {0, 0, 10, 9}, 1, 0.9}, {1, {5, 5, 20, 20}, 1, 0.7}, {2, {0, 0, 4, 4}, 1, 0.6}};
    const auto r = build_report(dets, truth, {"fall", "still"});
    REQUIRE(r.fall.has_value());
    CHECK(r.fall->tp == 1);
    CHECK(r.fall->fp == 2);
    const auto back = MetricsReport::from_records(r.to_records());
    CHECK(back.to_records() == r.to_records());
    CHECK(back.map == r.map);
    CHECK_FALSE(build_report(dets, truth, {"a", "b"}).fall.has_value());
  }
}
