#include <random>

#include "doctest.h"
#include "shiftdet/backbone.hpp"
#include "shiftdet/temporal_shift.hpp"
#include "test_support.hpp"

using namespace shiftdet;
using testing_support::random_tensor;

namespace {

ShiftConfig shift_cfg(int frames, Fraction f = {1, 8}) {
  ShiftConfig c;
  c.num_frames = frames;
  c.shift_fraction = f;
  return c;
}

}  // namespace

TEST_SUITE("temporal_shift") {
  TEST_CASE("channel routing follows the definition") {
    const auto cfg = shift_cfg(3, {1, 4});  // 8 channels: fold 2
    TensorD x({3, 8, 1, 1});
    for (std::int64_t t = 0; t < 3; ++t)
      for (std::int64_t c = 0; c < 8; ++c) x.at(t, c, 0, 0) = 100.0 * (t + 1) + c;
    const auto y = temporal_shift(x, cfg);
    for (std::int64_t t = 0; t < 3; ++t) {
      for (std::int64_t c = 0; c < 8; ++c) {
        double want;
        if (c < 2) {
          want = t == 0 ? 0.0 : x.at(t - 1, c, 0, 0);
        } else if (c < 4) {
          want = t == 2 ? 0.0 : x.at(t + 1, c, 0, 0);
        } else {
          want = x.at(t, c, 0, 0);
        }
        CHECK(y.at(t, c, 0, 0) == want);
      }
    }
  }

  TEST_CASE("fraction zero is the identity") {
    const auto x = random_tensor<float>({4, 16, 3, 3}, 3);
    CHECK(temporal_shift(x, shift_cfg(4, {0, 1})) == x);
    CHECK(temporal_shift_backward(x, shift_cfg(4, {0, 1})) == x);
  }

  TEST_CASE("conservation: shifted mass equals input mass minus the boundary frames") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      const int frames = 2 + static_cast<int>(rng() % 7);
      const auto x = random_tensor<double>({frames, 16, 2, 2}, seed);
      const auto cfg = shift_cfg(frames);
      const auto y = temporal_shift(x, cfg);
      double in = 0, out = 0, dropped = 0;
      for (std::int64_t i = 0; i < x.size(); ++i) in += x[i];
      for (std::int64_t i = 0; i < y.size(); ++i) out += y[i];
      // The last frame's forward-shifted channels and the first frame's
      // backward-shifted channels leave the clip.
      for (std::int64_t h = 0; h < 2; ++h)
        for (std::int64_t w = 0; w < 2; ++w) {
          for (std::int64_t c = 0; c < 2; ++c) dropped += x.at(frames - 1, c, h, w);
          for (std::int64_t c = 2; c < 4; ++c) dropped += x.at(0, c, h, w);
        }
      CHECK(out == doctest::Approx(in - dropped).epsilon(1e-12));
    }
  }

  TEST_CASE("boundary frames receive exact zeros") {
    const auto x = random_tensor<double>({5, 8, 2, 2}, 9, 1.0, 2.0);
    const auto y = temporal_shift(x, shift_cfg(5));
    for (std::int64_t h = 0; h < 2; ++h)
      for (std::int64_t w = 0; w < 2; ++w) {
        CHECK(y.at(0, 0, h, w) == 0.0);
        CHECK(y.at(4, 1, h, w) == 0.0);
      }
  }

  TEST_CASE("backward is the adjoint of forward") {
    const auto cfg = shift_cfg(6);
    const auto x = random_tensor<double>({6, 16, 2, 3}, 4);
    const auto g = random_tensor<double>({6, 16, 2, 3}, 5);
    const auto y = temporal_shift(x, cfg);
    const auto gx = temporal_shift_backward(g, cfg);
    double lhs = 0, rhs = 0;
    for (std::int64_t i = 0; i < x.size(); ++i) {
      lhs += y[i] * g[i];
      rhs += x[i] * gx[i];
    }
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }

  TEST_CASE("fold must be integral and frames must match") {
    CHECK_THROWS_AS(shift_cfg(4).fold(12), ContractError);
    CHECK(shift_cfg(4).fold(16) == 2);
    CHECK_THROWS_AS(temporal_shift(TensorF({3, 8, 1, 1}), shift_cfg(4)), ContractError);
    CHECK_THROWS_AS(Fraction::parse("3/4"), ContractError);
    CHECK(Fraction::parse("1/8") == Fraction{1, 8});
  }

  TEST_CASE("receptive field grows by two frames per block until N") {
    CHECK(receptive_field(0, 8) == 1);
    CHECK(receptive_field(1, 8) == 3);
    CHECK(receptive_field(3, 8) == 7);
    CHECK(receptive_field(4, 8) == 8);
    CHECK(receptive_field(10, 8) == 8);
    CHECK_THROWS_AS(receptive_field(-1, 8), ContractError);
  }

  TEST_CASE("impulse in one frame reaches exactly `blocks` frames away through the backbone") {
    // All-ones weights keep every reachable activation strictly positive.
    BackboneConfig cfg;
    cfg.stage_channels = {8, 8, 8};
    cfg.blocks_per_stage = {1, 1, 1};
    cfg.stage_strides = {1, 1, 1};
    cfg.stem_stride = 1;
    cfg.shift.num_frames = 8;
    const Backbone<double> net(cfg);
    BasicParamStore<double> store;
    std::mt19937_64 rng(1);
    net.register_params(store, rng);
    for (auto& p : store.params()) {
      if (!p.frozen && p.name.ends_with(".weight")) p.value.fill(0.05);
      if (!p.frozen && p.name.ends_with(".bias")) p.value.fill(0.0);
    }
    TensorD frames({8, 3, 4, 4});
    const int source = 3;
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t h = 0; h < 4; ++h)
        for (std::int64_t w = 0; w < 4; ++w) frames.at(source, c, h, w) = 1.0;
    const auto y = net.forward(store, frames, nullptr);
    const int blocks = cfg.block_count();
    for (std::int64_t t = 0; t < 8; ++t) {
      double mass = 0;
      for (std::int64_t i = 0; i < y.size() / 8; ++i) mass += std::abs(y[t * (y.size() / 8) + i]);
      const bool reachable = std::abs(t - source) <= blocks;
      INFO("frame " << t);
      CHECK((mass > 0) == reachable);
    }
    CHECK(receptive_field(blocks, 8) == 2 * blocks + 1);
  }
}
