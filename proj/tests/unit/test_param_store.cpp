#include "doctest.h"
#include "shiftdet/param_store.hpp"

using namespace shiftdet;

TEST_SUITE("param_store") {
  TEST_CASE("insertion order, lookup and duplicates") {
    ParamStore s;
    s.add("b", {2});
    s.add("a", {3}, true);
    CHECK(s.params()[0].name == "b");
    CHECK(s.contains("a"));
    CHECK(s.get("a").grad.empty());
    CHECK(s.element_count() == 5);
    CHECK_THROWS_AS(s.add("b", {1}), ContractError);
    CHECK_THROWS_AS(s.get("zzz"), ContractError);
    CHECK_THROWS_AS(s.accumulate_grad("a", TensorF({3}, 1.0f)), ContractError);
  }

  TEST_CASE("sgd with momentum follows the recurrence by hand") {
    BasicParamStore<double> s;
    auto& p = s.add("w", {1});
    p.value[0] = 1.0;
    s.add("frozen", {1}, true).value[0] = 5.0;
    // step 1: v = 0.5, w = 1 - 0.1 * 0.5 = 0.95
    s.accumulate_grad("w", TensorD({1}, 0.5));
    sgd_step(s, 0.1, 0.9);
    CHECK(s.value("w")[0] == doctest::Approx(0.95));
    // step 2: v = 0.9 * 0.5 + 0.5 = 0.95, w = 0.95 - 0.095
    s.accumulate_grad("w", TensorD({1}, 0.5));
    sgd_step(s, 0.1, 0.9);
    CHECK(s.value("w")[0] == doctest::Approx(0.855));
    CHECK(s.value("frozen")[0] == 5.0);
    CHECK(s.step_count() == 2);
    CHECK(s.get("w").grad[0] == 0.0);
    CHECK_THROWS_AS(sgd_step(s, 0.0, 0.9), ContractError);
  }

  TEST_CASE("gradient reduction helpers") {
    ParamStore a, b;
    a.add("w", {2});
    b.add("w", {2});
    a.accumulate_grad("w", TensorF({2}, 1.0f));
    b.accumulate_grad("w", TensorF({2}, 2.0f));
    a.add_grads_from(b);
    a.scale_grads(0.5f);
    CHECK(a.get("w").grad[1] == 1.5f);
    a.zero_grad();
    CHECK(a.get("w").grad[0] == 0.0f);
    const auto d = a.cast<double>();
    CHECK(d.params().size() == 1);
  }
}
