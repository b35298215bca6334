#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <random>

#include "oracles.hpp"
#include "rca/autodiff.hpp"
#include "rca/checkpoint.hpp"
#include "rca/optim.hpp"

using rca::Tensor;
namespace ad = rca::ad;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng,
                     double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, scale);
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng);
  return t;
}

}  // namespace

TEST_CASE("mse of a tensor with itself is zero with zero gradients") {
  std::mt19937_64 rng(1);
  auto x = ad::parameter(random_tensor({3, 4}, rng), "x");
  auto loss = ad::mse(x, x);
  REQUIRE(loss->data[0] == 0.0);
  ad::backward(loss);
  for (std::size_t i = 0; i < x->grad.numel(); ++i) REQUIRE(x->grad[i] == 0.0);
}

TEST_CASE("cosine of a vector with its stopped copy is 1 with vanishing gradient") {
  std::mt19937_64 rng(2);
  auto v = ad::parameter(random_tensor({1, 8}, rng), "v");
  auto loss = ad::mean(ad::cosine_rows(v, ad::stopgrad(v)));
  REQUIRE(loss->data[0] == Catch::Approx(1.0).epsilon(1e-12));
  ad::backward(loss);
  for (std::size_t i = 0; i < v->grad.numel(); ++i) {
    REQUIRE(std::abs(v->grad[i]) < 1e-12);
  }
}

TEST_CASE("finite differences confirm every primitive") {
  std::mt19937_64 rng(3);

  SECTION("linear") {
    auto x = ad::parameter(random_tensor({5, 3}, rng), "x");
    auto w = ad::parameter(random_tensor({3, 4}, rng), "w");
    auto b = ad::parameter(random_tensor({4}, rng), "b");
    auto rebuild = [&] { return ad::mse(ad::linear(x, w, b),
                                        ad::constant(Tensor::zeros({5, 4})))->data[0]; };
    rebuild();
    auto loss = ad::mse(ad::linear(x, w, b), ad::constant(Tensor::zeros({5, 4})));
    ad::backward(loss);
    const auto fd = oracles::finite_difference_grads({x, w, b}, rebuild);
    REQUIRE(oracles::max_relative_error({x, w, b}, fd) < 1e-6);
  }

  SECTION("moving average") {
    auto x = ad::parameter(random_tensor({2, 9}, rng), "x");
    auto target = ad::constant(random_tensor({2, 9}, rng));
    auto rebuild = [&] { return ad::mse(ad::moving_average(x, 5), target)->data[0]; };
    auto loss = ad::mse(ad::moving_average(x, 5), target);
    ad::backward(loss);
    const auto fd = oracles::finite_difference_grads({x}, rebuild);
    REQUIRE(oracles::max_relative_error({x}, fd) < 1e-6);
  }

  SECTION("sigmoid, mul, mean") {
    auto a = ad::parameter(random_tensor({4, 4}, rng), "a");
    auto b = ad::parameter(random_tensor({4, 4}, rng), "b");
    auto rebuild = [&] { return ad::mean(ad::mul(ad::sigmoid(a), b))->data[0]; };
    auto loss = ad::mean(ad::mul(ad::sigmoid(a), b));
    ad::backward(loss);
    const auto fd = oracles::finite_difference_grads({a, b}, rebuild);
    REQUIRE(oracles::max_relative_error({a, b}, fd) < 1e-6);
  }

  SECTION("cosine rows") {
    auto a = ad::parameter(random_tensor({3, 6}, rng), "a");
    auto b = ad::parameter(random_tensor({3, 6}, rng), "b");
    auto rebuild = [&] { return ad::mean(ad::cosine_rows(a, b))->data[0]; };
    auto loss = ad::mean(ad::cosine_rows(a, b));
    ad::backward(loss);
    const auto fd = oracles::finite_difference_grads({a, b}, rebuild);
    REQUIRE(oracles::max_relative_error({a, b}, fd) < 1e-6);
  }

  SECTION("mul_rows, stack_cols, reshape") {
    auto a = ad::parameter(random_tensor({4, 6}, rng), "a");
    auto row = ad::parameter(random_tensor({1, 6}, rng), "row");
    auto w = ad::parameter(random_tensor({2, 3}, rng), "w");
    auto target = ad::constant(random_tensor({4, 18}, rng));
    auto rebuild = [&] {
      auto masked = ad::mul_rows(a, row);
      auto st = ad::stack_cols(masked, masked);
      auto reps = ad::linear(st, w);
      return ad::mse(ad::reshape(reps, {4, 18}), target)->data[0];
    };
    auto masked = ad::mul_rows(a, row);
    auto st = ad::stack_cols(masked, masked);
    auto loss = ad::mse(ad::reshape(ad::linear(st, w), {4, 18}), target);
    ad::backward(loss);
    const auto fd = oracles::finite_difference_grads({a, row, w}, rebuild);
    REQUIRE(oracles::max_relative_error({a, row, w}, fd) < 1e-6);
  }
}

TEST_CASE("stop-gradient blocks flow exactly while the forward value moves") {
  std::mt19937_64 rng(4);
  auto v = ad::parameter(random_tensor({1, 5}, rng), "v");
  auto u = ad::parameter(random_tensor({1, 5}, rng), "u");

  // d/dv [u . stopgrad(v)] must be exactly zero even though perturbing v
  // changes the loss value.
  auto build = [&] { return ad::mean(ad::mul(u, ad::stopgrad(v))); };
  auto loss = build();
  ad::backward(loss);
  for (std::size_t i = 0; i < v->grad.numel(); ++i) REQUIRE(v->grad[i] == 0.0);
  for (std::size_t i = 0; i < u->grad.numel(); ++i) REQUIRE(u->grad[i] != 0.0);

  const double before = loss->data[0];
  v->data[2] += 0.5;
  const double after = build()->data[0];
  REQUIRE(before != after);
}

TEST_CASE("product with a stopped copy differentiates like a constant factor") {
  auto v = ad::parameter(Tensor({1, 3}, {1.0, -2.0, 3.0}), "v");
  auto loss = ad::mean(ad::mul(v, ad::stopgrad(v)));
  ad::backward(loss);
  // d mean(v * c)/dv = c / n with c frozen at v's value
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(v->grad[i] == Catch::Approx(v->data[i] / 3.0));
  }
}

TEST_CASE("adam leaves parameters untouched on zero gradients") {
  auto p = ad::parameter(Tensor({2}, {1.5, -2.5}), "p");
  ad::Adam opt({p}, 0.001);
  opt.zero_grad();
  opt.step();
  REQUIRE(p->data[0] == 1.5);
  REQUIRE(p->data[1] == -2.5);
}

TEST_CASE("adam moves against the gradient sign") {
  auto p = ad::parameter(Tensor::scalar(0.0), "p");
  ad::Adam opt({p}, 0.001);
  for (int i = 0; i < 100; ++i) {
    opt.zero_grad();
    p->grad[0] = 2.0;
    opt.step();
  }
  REQUIRE(p->data[0] < 0.0);
}

TEST_CASE("adam first step magnitude is the learning rate after bias correction") {
  auto p = ad::parameter(Tensor::scalar(1.0), "p");
  ad::Adam opt({p}, 0.001);
  p->grad[0] = 1.0;
  opt.step();
  // mhat = g, vhat = g^2 -> update = lr * g / (|g| + eps) ~ lr
  REQUIRE(std::abs((1.0 - p->data[0]) - 0.001) < 1e-9);
}

TEST_CASE("adam reports the parameter name on non-finite gradients") {
  auto p = ad::parameter(Tensor::scalar(1.0), "theta_column");
  ad::Adam opt({p}, 0.001);
  p->grad[0] = std::nan("");
  REQUIRE_THROWS_WITH(opt.step(), Catch::Matchers::ContainsSubstring("theta_column"));
}

TEST_CASE("identical seeds give bit-identical losses") {
  const auto run = [] {
    std::mt19937_64 rng(99);
    auto x = ad::parameter(random_tensor({4, 4}, rng), "x");
    auto w = ad::parameter(random_tensor({4, 2}, rng), "w");
    auto t = ad::constant(random_tensor({4, 2}, rng));
    auto loss = ad::mse(ad::sigmoid(ad::linear(x, w)), t);
    ad::backward(loss);
    ad::Adam opt({x, w}, 0.001);
    opt.step();
    auto loss2 = ad::mse(ad::sigmoid(ad::linear(x, w)), t);
    return loss2->data[0];
  };
  REQUIRE(run() == run());
}

TEST_CASE("gradients accumulate until explicitly zeroed") {
  auto x = ad::parameter(Tensor({2}, {1.0, 2.0}), "x");
  auto loss1 = ad::mean(x);
  ad::backward(loss1);
  auto loss2 = ad::mean(x);
  ad::backward(loss2);
  REQUIRE(x->grad[0] == Catch::Approx(1.0));  // two sweeps of 0.5 each
  ad::zero_grad(x);
  REQUIRE(x->grad[0] == 0.0);
}

TEST_CASE("checkpoints reload bit-exactly") {
  std::mt19937_64 rng(5);
  const Tensor a = random_tensor({3, 7}, rng, 3.14159);
  const Tensor b = random_tensor({11}, rng, 1e-7);
  const auto j = rca::checkpoint_to_json({{"a", a}, {"b", b}}, {{"note", "roundtrip"}});
  const auto text = j.dump();
  const auto ck = rca::checkpoint_from_json(nlohmann::json::parse(text));
  REQUIRE(ck.params.at("a").shape() == a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) REQUIRE(ck.params.at("a")[i] == a[i]);
  for (std::size_t i = 0; i < b.numel(); ++i) REQUIRE(ck.params.at("b")[i] == b[i]);
  REQUIRE(ck.meta.at("note") == "roundtrip");
}

TEST_CASE("shape mismatches are rejected") {
  auto a = ad::constant(Tensor::zeros({2, 3}));
  auto b = ad::constant(Tensor::zeros({3, 2}));
  REQUIRE_THROWS_AS(ad::add(a, b), std::invalid_argument);
  REQUIRE_THROWS_AS(ad::mul(a, b), std::invalid_argument);
  REQUIRE_THROWS_AS(ad::linear(a, a), std::invalid_argument);
  REQUIRE_THROWS_AS(ad::moving_average(a, 4), std::invalid_argument);
}
