#include <cmath>

#include "doctest.h"
#include "shiftdet/ops.hpp"
#include "test_support.hpp"

using namespace shiftdet;
using testing_support::random_tensor;

TEST_SUITE("tensor_ops") {
  TEST_CASE("tensor basics") {
    TensorF t({2, 3}, 1.5f);
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    t.reshape({3, 2});
    CHECK(t.dim(0) == 3);
    CHECK_THROWS_AS(t.reshape({4, 2}), ContractError);
    CHECK_THROWS_AS(TensorF({2, 0}), ContractError);
    CHECK_THROWS_AS(TensorF({2}, std::vector<float>{1, 2, 3}), ContractError);
    t[0] = std::nanf("");
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS_AS(require_finite(t, "t"), NumericError);
  }

  TEST_CASE("conv2d matches the direct loop oracle") {
    struct Case {
      Shape x, w;
      int stride, pad;
    };
    const Case cases[] = {{{2, 3, 7, 6}, {4, 3, 3, 3}, 1, 1},
                          {{1, 2, 8, 8}, {3, 2, 3, 3}, 2, 1},
                          {{2, 4, 5, 5}, {2, 4, 1, 1}, 1, 0},
                          {{1, 3, 9, 7}, {5, 3, 1, 1}, 2, 0},
                          {{1, 1, 4, 4}, {1, 1, 3, 3}, 1, 0}};
    std::uint64_t seed = 1;
    for (const auto& c : cases) {
      const auto x = random_tensor<double>(c.x, seed++);
      const auto w = random_tensor<double>(c.w, seed++);
      const auto b = random_tensor<double>({c.w[0]}, seed++);
      const auto got = conv2d(x, w, b, {c.stride, c.pad});
      const auto want = testing_support::brute_conv2d(x, w, b, c.stride, c.pad);
      REQUIRE(got.shape() == want.shape());
      for (std::int64_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("conv2d rejects bad shapes") {
    const TensorF x({1, 3, 4, 4}), w({2, 2, 3, 3}), b({2});
    CHECK_THROWS_AS(conv2d(x, w, b, {1, 1}), ContractError);
    CHECK_THROWS_AS(conv_output_extent(2, 5, 1, 0), ContractError);
    CHECK(conv_output_extent(64, 3, 2, 1) == 32);
  }

  TEST_CASE("relu and its backward") {
    const TensorD x({4}, std::vector<double>{-1, 0, 2, -3});
    const auto y = relu(x);
    CHECK(y.storage() == std::vector<double>{0, 0, 2, 0});
    const auto g = relu_backward(x, TensorD({4}, 1.0));
    CHECK(g.storage() == std::vector<double>{0, 0, 1, 0});
  }

  TEST_CASE("max_pool2d picks the first maximum and routes gradients") {
    const TensorD x({1, 1, 2, 4}, std::vector<double>{1, 5, 5, 2, 3, 0, 1, 5});
    const auto r = max_pool2d(x, 2, 2);
    CHECK(r.output.storage() == std::vector<double>{5, 5});
    CHECK(r.argmax == std::vector<std::int64_t>{1, 2});
    const auto g = max_pool2d_backward(x.shape(), r.argmax, TensorD({1, 1, 1, 2}, std::vector<double>{1, 2}));
    CHECK(g.storage() == std::vector<double>{0, 1, 2, 0, 0, 0, 0, 0});
  }

  TEST_CASE("frozen affine is per channel") {
    const TensorD x({1, 2, 1, 2}, std::vector<double>{1, 2, 3, 4});
    const TensorD scale({2}, std::vector<double>{2, -1}), shift({2}, std::vector<double>{0.5, 1});
    CHECK(frozen_affine(x, scale, shift).storage() == std::vector<double>{2.5, 4.5, -2, -3});
    CHECK(frozen_affine_backward(scale, TensorD(x.shape(), 1.0)).storage() == std::vector<double>{2, 2, -1, -1});
  }

  TEST_CASE("linear matches a hand computation") {
    const TensorD x({1, 2}, std::vector<double>{1, 2});
    const TensorD w({2, 2}, std::vector<double>{1, 0, -1, 3}), b({2}, std::vector<double>{0.5, 0});
    CHECK(linear(x, w, b).storage() == std::vector<double>{1.5, 5});
    CHECK_THROWS_AS(linear(x, TensorD({2, 3}), b), ContractError);
  }

  TEST_CASE("softmax rows sum to one and survive large logits") {
    const TensorD z({2, 3}, std::vector<double>{1000, 1001, 1002, -5, 0, 5});
    const auto p = softmax(z);
    for (int r = 0; r < 2; ++r) CHECK(p[r * 3] + p[r * 3 + 1] + p[r * 3 + 2] == doctest::Approx(1.0));
    CHECK(p.all_finite());
  }

  TEST_CASE("cross entropy values") {
    // Uniform logits over three classes: ln 3.
    const TensorD z({1, 3});
    const std::vector<int> t{2};
    CHECK(softmax_cross_entropy(z, t).value == doctest::Approx(std::log(3.0)).epsilon(1e-14));
    // Confident and correct: near zero.
    const TensorD good({1, 2}, std::vector<double>{-50, 50});
    const std::vector<int> one{1};
    CHECK(softmax_cross_entropy(good, one).value < 1e-30);
    const std::vector<int> bad{5};
    CHECK_THROWS_AS(softmax_cross_entropy(z, bad), ContractError);
  }

  TEST_CASE("smooth L1 piecewise values") {
    const TensorD p({1, 3}, std::vector<double>{0.5, 3, -2}), t({1, 3});
    // 0.5*0.25, 3-0.5, 2-0.5 averaged over 3 elements.
    CHECK(smooth_l1(p, t, 1.0).value == doctest::Approx((0.125 + 2.5 + 1.5) / 3.0));
    CHECK(smooth_l1(t, t, 1.0).value == 0.0);
  }
}
