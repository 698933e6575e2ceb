#include <cstring>
#include <limits>

#include "doctest.h"
#include "shiftdet/detector.hpp"
#include "shiftdet/formats.hpp"
#include "shiftdet/synth.hpp"
#include "test_support.hpp"

using namespace shiftdet;

TEST_SUITE("formats") {
  TEST_CASE("frame container round trip is byte exact") {
    const auto clip = generate_clip(SynthSpec{}, 5);
    const auto bytes = encode_frame_container(clip.video);
    CHECK(bytes.size() == 24u + clip.video.samples.size());
    CHECK(std::memcmp(bytes.data(), "SRVF", 4) == 0);
    const auto back = decode_frame_container(bytes);
    CHECK(back == clip.video);
    CHECK(encode_frame_container(back) == bytes);
  }

  TEST_CASE("frame container rejects malformed input") {
    FrameContainer v;
    v.frames = 2;
    v.height = 3;
    v.width = 4;
    v.samples.assign(2 * 3 * 3 * 4, 9);
    auto bytes = encode_frame_container(v);
    SUBCASE("truncated") {
      bytes.pop_back();
      CHECK_THROWS_AS(decode_frame_container(bytes), FormatError);
    }
    SUBCASE("trailing data") {
      bytes.push_back(0);
      CHECK_THROWS_AS(decode_frame_container(bytes), FormatError);
    }
    SUBCASE("bad magic") {
      bytes[0] = 'X';
      CHECK_THROWS_AS(decode_frame_container(bytes), FormatError);
    }
    SUBCASE("bad version") {
      bytes[4] = 7;
      CHECK_THROWS_AS(decode_frame_container(bytes), FormatError);
    }
    SUBCASE("header only") {
      bytes.resize(10);
      CHECK_THROWS_AS(decode_frame_container(bytes), FormatError);
    }
    v.samples.pop_back();
    CHECK_THROWS_AS(encode_frame_container(v), ContractError);
  }

  TEST_CASE("checkpoint round trip is byte exact and keeps order, flags and config") {
    const auto model = testing_support::tiny_model();
    const Detector det(model);
    auto params = det.init_params(9);
    params.get("rcnn.cls.bias").value[1] = 0.125f;
    const auto bytes = encode_checkpoint(model, params);
    const auto ck = decode_checkpoint(bytes);
    CHECK(ck.config.canonical() == model.canonical());
    REQUIRE(ck.params.params().size() == params.params().size());
    for (std::size_t i = 0; i < params.params().size(); ++i) {
      const auto& a = params.params()[i];
      const auto& b = ck.params.params()[i];
      CHECK(a.name == b.name);
      CHECK(a.frozen == b.frozen);
      CHECK(a.value == b.value);
    }
    CHECK(encode_checkpoint(ck.config, ck.params) == bytes);
    det.check_params(ck.params);
  }

  TEST_CASE("checkpoint corruption is detected") {
    const auto model = testing_support::tiny_model();
    const auto params = Detector(model).init_params(1);
    auto bytes = encode_checkpoint(model, params);
    SUBCASE("digest") {
      bytes[8] ^= 0x01;
      CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
    }
    SUBCASE("config text") {
      bytes[30] ^= 0x20;
      CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
    }
    SUBCASE("truncation") {
      bytes.resize(bytes.size() - 3);
      CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
    }
    SUBCASE("non-finite payload") {
      const float nan = std::numeric_limits<float>::quiet_NaN();
      std::memcpy(bytes.data() + bytes.size() - 4, &nan, 4);
      CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
    }
  }

  TEST_CASE("checkpoint layout must match the model") {
    const auto model = testing_support::tiny_model();
    auto other = model;
    other.roi.hidden = 16;
    const auto ck = decode_checkpoint(encode_checkpoint(other, Detector(other).init_params(1)));
    CHECK_THROWS_AS(Detector(model).check_params(ck.params), FormatError);
  }

  TEST_CASE("files are written atomically and read back") {
    testing_support::TempDir dir("formats");
    const auto path = dir.path() / "nested" / "a.bin";
    const std::vector<std::uint8_t> data{1, 2, 3};
    write_file_atomic(path, data);
    CHECK(read_file_bytes(path) == data);
    write_text_atomic(path, "xy");
    CHECK(read_file_bytes(path) == std::vector<std::uint8_t>{'x', 'y'});
    CHECK_THROWS_AS(read_file_bytes(dir.path() / "missing"), FormatError);

    const auto model = testing_support::tiny_model();
    const auto params = Detector(model).init_params(4);
    save_checkpoint(dir.path() / "m.srck", model, params);
    CHECK(read_file_bytes(dir.path() / "m.srck") == encode_checkpoint(model, params));
    CHECK(load_checkpoint(dir.path() / "m.srck").params.element_count() == params.element_count());
  }
}
