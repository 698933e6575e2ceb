#include <cmath>
#include <random>

#include "doctest.h"
#include "shiftdet/roi_head.hpp"
#include "test_support.hpp"

using namespace shiftdet;

TEST_SUITE("roi_head") {
  TEST_CASE("roi_align of a constant map is constant") {
    TensorD f({2, 3, 8, 8}, 7.0);
    const std::vector<Box> rois{{3, 5, 40, 22}, {0, 0, 64, 64}, {50, 50, 62, 63}};
    const auto out = roi_align(f, 1, std::span<const Box>(rois), RoiAlignArgs{});
    CHECK(out.shape() == Shape{3, 3, 7, 7});
    for (double v : out.values()) CHECK(v == doctest::Approx(7.0).epsilon(1e-12));
  }

  TEST_CASE("roi_align reproduces the bilinear average of a ramp") {
    // f(cell i, j) = j; roi covers the whole 64x64 image (8x8 features).
    TensorD f({1, 1, 8, 8});
    for (std::int64_t i = 0; i < 8; ++i)
      for (std::int64_t j = 0; j < 8; ++j) f.at(0, 0, i, j) = static_cast<double>(j);
    const std::vector<Box> rois{{0, 0, 64, 64}};
    const RoiAlignArgs args;
    const auto out = roi_align(f, 0, std::span<const Box>(rois), args);
    const double bin = 8.0 / 7.0;
    for (int px = 0; px < 7; ++px) {
      // Cell j is centred at j + 0.5, so the ramp at continuous x is x - 0.5,
      // held constant beyond the outer centres.
      double want = 0;
      for (int s = 0; s < 2; ++s) {
        const double x = px * bin + (s + 0.5) * bin / 2.0;
        want += std::clamp(x - 0.5, 0.0, 7.0) / 2.0;
      }
      for (int py = 0; py < 7; ++py) CHECK(out.at(0, 0, py, px) == doctest::Approx(want).epsilon(1e-12));
    }
  }

  TEST_CASE("roi_align rejects degenerate rois") {
    TensorF f({1, 2, 8, 8});
    const std::vector<Box> rois{{4, 4, 4, 10}};
    CHECK_THROWS_AS(roi_align(f, 0, std::span<const Box>(rois), RoiAlignArgs{}), ContractError);
  }

  TEST_CASE("head output shapes and determinism") {
    const RcnnHead<float> head(8, 7, 32, 4);
    ParamStore s;
    std::mt19937_64 rng(2);
    head.register_params(s, rng);
    const auto x = testing_support::random_tensor<float>({5, 8, 7, 7}, 3);
    const auto a = head.forward(s, x, nullptr);
    const auto b = head.forward(s, x, nullptr);
    CHECK(a.class_logits.shape() == Shape{5, 5});
    CHECK(a.deltas.shape() == Shape{5, 4});
    CHECK(a.class_logits == b.class_logits);
    CHECK(a.deltas == b.deltas);
  }

  TEST_CASE("proposals equal to the ground truth are foreground with zero targets") {
    BoxSet gt;
    gt.boxes = {{4, 4, 20, 24}, {30, 30, 50, 44}};
    gt.labels = {2, 1};
    RoiHeadConfig cfg;
    std::mt19937_64 rng(4);
    const auto s = sample_rois(gt, gt, cfg, rng);
    CHECK(s.foreground_count() == 4u);  // two proposals plus the two appended gts
    for (std::size_t i = 0; i < s.rois.size(); ++i) {
      CHECK(s.labels[i] > 0);
      for (double d : s.targets[i]) CHECK(d == 0.0);
    }
  }

  TEST_CASE("appended ground truth keeps foreground nonempty and the cap holds") {
    BoxSet gt;
    gt.boxes = {{40, 40, 56, 60}};
    gt.labels = {1};
    BoxSet far;
    std::mt19937_64 prng(5);
    std::uniform_real_distribution<double> u(0, 20);
    for (int i = 0; i < 200; ++i) {
      const double x = u(prng), y = u(prng);
      far.boxes.push_back({x, y, x + 8 + u(prng), y + 8 + u(prng)});
    }
    RoiHeadConfig cfg;
    std::mt19937_64 rng(6);
    const auto s = sample_rois(far, gt, cfg, rng);
    CHECK(s.foreground_count() == 1u);
    CHECK(s.rois.size() == 64u);

    BoxSet many;
    for (int i = 0; i < 100; ++i) many.boxes.push_back({40.0 + 0.01 * i, 40, 56, 60});
    const auto capped = sample_rois(many, gt, cfg, rng);
    CHECK(capped.foreground_count() == 16u);
    CHECK(capped.rois.size() <= 64u);
  }

  TEST_CASE("loss values") {
    SUBCASE("uniform scores over three classes give ln 3") {
      const RcnnOutput<double> out{TensorD({1, 3}), TensorD({1, 4})};
      const std::vector<int> labels{2};
      const std::vector<BoxDelta> targets{{0, 0, 0, 0}};
      const std::vector<std::int64_t> offsets{0, 1};
      const auto l = rcnn_loss(out, std::span<const int>(labels), std::span<const BoxDelta>(targets),
                               std::span<const std::int64_t>(offsets));
      CHECK(l.classification == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    }
    SUBCASE("perfect scores and exact deltas give zero") {
      RcnnOutput<double> out{TensorD({2, 3}), TensorD({2, 4})};
      out.class_logits.at(0, 1) = 60;
      out.class_logits.at(1, 0) = 60;
      const std::vector<BoxDelta> targets{{0.1, -0.2, 0.3, 0.05}, {0, 0, 0, 0}};
      for (int k = 0; k < 4; ++k) out.deltas.at(0, k) = targets[0][static_cast<std::size_t>(k)];
      const std::vector<int> labels{1, 0};
      const std::vector<std::int64_t> offsets{0, 2};
      const auto l = rcnn_loss(out, std::span<const int>(labels), std::span<const BoxDelta>(targets),
                               std::span<const std::int64_t>(offsets));
      CHECK(l.classification < 1e-20);
      CHECK(l.regression == 0.0);
    }
    SUBCASE("all-background frame has no regression term") {
      const auto logits = testing_support::random_tensor<double>({3, 3}, 7);
      const RcnnOutput<double> out{logits, testing_support::random_tensor<double>({3, 4}, 8)};
      const std::vector<int> labels{0, 0, 0};
      const std::vector<BoxDelta> targets(3);
      const std::vector<std::int64_t> offsets{0, 3};
      const auto l = rcnn_loss(out, std::span<const int>(labels), std::span<const BoxDelta>(targets),
                               std::span<const std::int64_t>(offsets));
      CHECK(l.regression == 0.0);
      double ce = 0;
      for (int r = 0; r < 3; ++r) {
        double z = 0;
        for (int c = 0; c < 3; ++c) z += std::exp(logits.at(r, c));
        ce += std::log(z) - logits.at(r, 0);
      }
      CHECK(l.classification == doctest::Approx(ce / 3).epsilon(1e-12));
    }
  }

  TEST_CASE("total loss is the stage sum") {
    CHECK(total_loss(0, 0) == 0.0);
    CHECK(total_loss(0.5, 1.25) == 1.75);
    CHECK_THROWS_AS(total_loss(NAN, 1), NumericError);
  }
}
