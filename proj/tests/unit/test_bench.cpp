#include "json.hpp"
#include <numeric>

#include "doctest.h"
#include "shiftdet/bench.hpp"
#include "shiftdet/detector.hpp"
#include "test_support.hpp"

using namespace shiftdet;

TEST_SUITE("bench") {
  TEST_CASE("report is self-consistent") {
    const auto model = testing_support::tiny_model();
    const auto params = Detector(model).init_params(3);
    BenchOptions o;
    o.clips = 3;
    o.warmup = 1;
    const auto r = run_bench(model, params, o);
    CHECK(r.params == r.count_params);
    CHECK(r.params == r.serialized_elements);
    CHECK(r.params == count_params(model));
    CHECK(r.clip_seconds.size() == 3u);
    CHECK(r.elapsed_seconds == std::accumulate(r.clip_seconds.begin(), r.clip_seconds.end(), 0.0));
    CHECK(r.fps == doctest::Approx(4.0 * 3 / r.elapsed_seconds));
    CHECK(r.stages.sum() <= r.elapsed_seconds * 1.05);
    CHECK(r.stages.sum() > 0);
    CHECK(r.peak_rss_bytes > 0);

    const auto j = nlohmann::json::parse(r.to_records().substr(0, r.to_records().find('\n')));
    CHECK(j.at("kind") == "bench");
    CHECK(j.at("params") == r.params);
    CHECK(r.to_text().find("FPS") != std::string::npos);
  }

  TEST_CASE("bad options are rejected") {
    const auto model = testing_support::tiny_model();
    const auto params = Detector(model).init_params(3);
    BenchOptions o;
    o.clips = 0;
    CHECK_THROWS_AS(run_bench(model, params, o), ContractError);
  }
}
