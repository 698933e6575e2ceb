#include "doctest.h"
#include "shiftdet/config.hpp"
#include "shiftdet/trainer.hpp"
#include "test_support.hpp"

using namespace shiftdet;

TEST_SUITE("config") {
  TEST_CASE("key-value parsing") {
    const auto kv = KeyValueConfig::parse(
        "# comment\n"
        "\n"
        "model.classes = a, b ,c\n"
        "train.epochs = 3\n"
        "train.epochs = 4\n"
        "train.base_lr=0.5\n"
        "x.flag = true\n");
    CHECK(kv.get_string_list("model.classes", {}) == std::vector<std::string>{"a", "b", "c"});
    CHECK(kv.get_int("train.epochs", 0) == 4);
    CHECK(kv.get_double("train.base_lr", 0) == 0.5);
    CHECK(kv.get_bool("x.flag", false));
    CHECK(kv.get_int("train.missing", 17) == 17);
    CHECK_THROWS_AS(kv.get_int("model.classes", 0), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse("nodot = 1\n"), ConfigError);
    CHECK_THROWS_AS(KeyValueConfig::parse("model.classes\n"), ConfigError);
    CHECK_THROWS_AS(kv.require_known("train", {"epochs"}), ConfigError);
    kv.require_known("train", {"epochs", "base_lr"});
  }

  TEST_CASE("model config from keys, canonical text and digest") {
    const auto kv = KeyValueConfig::parse(
        "model.classes = move-right, move-left\n"
        "model.shift_fraction = 1/4\n"
        "model.num_frames = 4\n"
        "model.stage_channels = 8, 8, 16\n");
    const auto m = model_config_from(kv);
    CHECK(m.classes.size() == 2u);
    CHECK(m.backbone.shift.shift_fraction == Fraction{1, 4});
    CHECK(m.backbone.shift.num_frames == 4);
    m.validate();
    const auto back = parse_model_config_text(m.canonical());
    CHECK(back.canonical() == m.canonical());
    CHECK(back.digest() == m.digest());
    auto changed = m;
    changed.rpn.nms_iou = 0.6;
    CHECK(changed.digest() != m.digest());
    CHECK_THROWS_AS(model_config_from(KeyValueConfig::parse("model.typo = 1\n")), ConfigError);
  }

  TEST_CASE("model validation") {
    auto m = testing_support::tiny_model();
    m.validate();
    auto bad = m;
    bad.image_height = 60;
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = m;
    bad.classes.clear();
    CHECK_THROWS_AS(bad.validate(), ContractError);
    bad = m;
    bad.rpn.positive_iou = 0.2;
    CHECK_THROWS_AS(bad.validate(), ContractError);
  }

  TEST_CASE("train config keys") {
    const auto t = train_config_from(KeyValueConfig::parse("train.epochs = 2\ntrain.accum_steps = 1\n"));
    CHECK(t.epochs == 2);
    CHECK(t.accum_steps == 1);
    CHECK(t.batch_size == TrainConfig{}.batch_size);
    CHECK_THROWS_AS(train_config_from(KeyValueConfig::parse("train.epoch = 2\n")), ConfigError);
  }

  TEST_CASE("helpers") {
    CHECK(split_list(" a, b ,c ") == std::vector<std::string>{"a", "b", "c"});
    CHECK(split_list("").empty());
    CHECK(join({"a", "b"}, ", ") == "a, b");
  }
}
