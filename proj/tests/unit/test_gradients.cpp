#include "doctest.h"
#include "gradient_suite.hpp"

TEST_SUITE("gradients") {
  TEST_CASE("every differentiable op passes central differences in double") {
    const auto results = testing_support::run_gradient_suite();
    CHECK(results.size() >= 10);
    for (const auto& r : results) {
      INFO(r.op << " max rel error " << r.max_rel_error);
      CHECK(r.checked > 0);
      CHECK(r.max_rel_error < 1e-5);
      CHECK(r.frozen_params_have_no_grad);
    }
  }

  TEST_CASE("grad_check flags a wrong analytic gradient") {
    using namespace shiftdet;
    auto report = grad_check([](std::span<const TensorD> p) { return p[0][0] * p[0][0]; },
                             [](std::span<const TensorD> p) {
                               return std::vector<std::optional<TensorD>>{TensorD({1}, 3.0 * p[0][0])};
                             },
                             {TensorD({1}, 2.0)}, {"x"});
    CHECK(report.max_rel_error() > 0.1);
  }
}
