#include <cmath>

#include "doctest.h"
#include "shiftdet/config.hpp"
#include "shiftdet/detector.hpp"
#include "shiftdet/formats.hpp"
#include "shiftdet/synth.hpp"
#include "shiftdet/trainer.hpp"
#include "test_support.hpp"

using namespace shiftdet;

namespace {

struct TinySetup {
  testing_support::TempDir dir{"trainer"};
  ModelConfig model = testing_support::tiny_model();
  Dataset dataset;

  TinySetup() {
    SynthSpec spec;
    spec.classes = {MotionClass::move_right, MotionClass::move_left};
    spec.clips = 5;
    spec.frames_per_clip = 8;
    spec.actors_per_clip = 1;
    generate_dataset(spec, dir.path(), 1);
    dataset = Dataset::load(dir.path());
  }
};

TrainConfig tiny_train(int batch, int accum) {
  TrainConfig t;
  t.epochs = 2;
  t.batch_size = batch;
  t.accum_steps = accum;
  t.eval_every = 1;
  t.threads = 1;
  return t;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("lr schedule") {
    TrainConfig c;
    c.base_lr = 0.03;
    c.decay_every = 60;
    CHECK(lr_schedule(0, c) == doctest::Approx(0.03));
    CHECK(lr_schedule(59, c) == doctest::Approx(0.03));
    CHECK(lr_schedule(60, c) == doctest::Approx(0.003));
    CHECK(lr_schedule(125, c) == doctest::Approx(0.0003));
    double prev = lr_schedule(0, c);
    for (int e = 1; e < 300; ++e) {
      CHECK(lr_schedule(e, c) <= prev);
      prev = lr_schedule(e, c);
    }
  }

  TEST_CASE("identical micro-batches accumulate to one batch within 1e-6") {
    TinySetup s;
    const Detector det(s.model);
    std::mt19937_64 rng(3);
    const auto clip = load_clip(s.dataset, 0, 4, SampleMode::train, rng, 64, 64);
    const std::vector<ClipBatch> one{clip};
    const std::vector<ClipBatch> three{clip, clip, clip};
    const std::vector<std::uint64_t> seed1{99}, seed3{99, 99, 99};

    auto a = det.init_params(1);
    auto b = a;
    accumulate_gradients(det, a, one, seed1, 1);
    accumulate_gradients(det, b, three, seed3, 1);
    b.scale_grads(1.0f / 3.0f);
    sgd_step(a, 0.01, 0.9);
    sgd_step(b, 0.01, 0.9);
    double worst = 0;
    for (std::size_t i = 0; i < a.params().size(); ++i) {
      const auto& x = a.params()[i].value;
      const auto& y = b.params()[i].value;
      for (std::int64_t k = 0; k < x.size(); ++k) {
        worst = std::max(worst, std::abs(static_cast<double>(x[k]) - y[k]) / std::max(1e-3, std::abs(static_cast<double>(x[k]))));
      }
    }
    CHECK(worst < 1e-6);
  }

  TEST_CASE("thread count does not change the accumulated gradient") {
    TinySetup s;
    const Detector det(s.model);
    std::vector<ClipBatch> clips;
    std::mt19937_64 rng(4);
    for (int i = 0; i < 3; ++i) clips.push_back(load_clip(s.dataset, i, 4, SampleMode::train, rng, 64, 64));
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    auto a = det.init_params(2);
    auto b = a;
    accumulate_gradients(det, a, clips, seeds, 1);
    accumulate_gradients(det, b, clips, seeds, 3);
    for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params()[i].grad == b.params()[i].grad);
  }

  TEST_CASE("an update is the same whether its clips come in one batch or as micro-batches") {
    TinySetup s;
    const auto whole = train(s.dataset, s.model, tiny_train(4, 1));
    const auto split = train(s.dataset, s.model, tiny_train(1, 4));
    CHECK(encode_checkpoint(s.model, whole.last) == encode_checkpoint(s.model, split.last));
    CHECK(whole.steps.size() == split.steps.size());
  }

  TEST_CASE("training is deterministic and logs every update") {
    TinySetup s;
    const auto cfg = tiny_train(2, 1);
    std::vector<StepRecord> seen;
    TrainHooks hooks;
    hooks.on_step = [&](const StepRecord& r) { seen.push_back(r); };
    const auto a = train(s.dataset, s.model, cfg, hooks);
    const auto b = train(s.dataset, s.model, cfg);
    CHECK(encode_checkpoint(s.model, a.best) == encode_checkpoint(s.model, b.best));
    CHECK(a.log_text() == b.log_text());
    // 4 train clips per epoch in batches of 2.
    CHECK(a.steps.size() == 4u);
    CHECK(seen.size() == 4u);
    CHECK(a.evals.size() == 2u);
    CHECK(a.best_epoch == (a.evals[1].map >= a.evals[0].map ? 1 : 0));
    for (const auto& st : a.steps) {
      CHECK(std::isfinite(st.loss.total()));
      CHECK(st.loss.total() == doctest::Approx(st.loss.rpn() + st.loss.rcnn()).epsilon(1e-15));
    }
  }

  TEST_CASE("a partial last update is still applied") {
    TinySetup s;
    const auto r = train(s.dataset, s.model, tiny_train(3, 1));
    // 4 clips: a batch of 3 then one of 1, per epoch.
    REQUIRE(r.steps.size() == 4u);
    CHECK(r.steps[0].clips == 3);
    CHECK(r.steps[1].clips == 1);
  }

  TEST_CASE("vocabulary mismatch is a data error") {
    TinySetup s;
    auto other = s.model;
    other.classes = {"move-left", "move-right"};
    CHECK_THROWS_AS(check_vocabulary(s.dataset, other), DataError);
    CHECK_THROWS_AS(train(s.dataset, other, tiny_train(2, 1)), DataError);
  }

  TEST_CASE("evaluation is deterministic") {
    TinySetup s;
    const auto params = Detector(s.model).init_params(7);
    const auto a = evaluate(s.dataset, "train", s.model, params);
    const auto b = evaluate(s.dataset, "train", s.model, params, {}, {}, 2);
    CHECK(a.to_records() == b.to_records());
    CHECK(a.frames == 4 * 4);
  }

  TEST_CASE("invalid train configs are rejected") {
    TrainConfig c;
    c.accum_steps = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }
}
