#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "hmmfit/autodiff.hpp"

using namespace hmmfit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// f(x, y, z) = x^2 y + exp(x) log(y) + sqrt(z) / y + z^1.5
auto test_fn = [](const auto& v) {
  using ad::exp;
  using ad::log;
  using ad::pow;
  using ad::sqrt;
  return v[0] * v[0] * v[1] + exp(v[0]) * log(v[1]) + sqrt(v[2]) / v[1] + pow(v[2], 1.5);
};

std::vector<double> test_grad(double x, double y, double z) {
  return {2 * x * y + std::exp(x) * std::log(y), x * x + std::exp(x) / y - std::sqrt(z) / (y * y),
          0.5 / (std::sqrt(z) * y) + 1.5 * std::sqrt(z)};
}

double test_hess(double x, double y, double z, int i, int j) {
  const double H[3][3] = {
      {2 * y + std::exp(x) * std::log(y), 2 * x + std::exp(x) / y, 0.0},
      {2 * x + std::exp(x) / y, -std::exp(x) / (y * y) + 2 * std::sqrt(z) / (y * y * y), -0.5 / (std::sqrt(z) * y * y)},
      {0.0, -0.5 / (std::sqrt(z) * y * y), -0.25 / (z * std::sqrt(z) * y) + 0.75 / std::sqrt(z)}};
  return H[i][j];
}

}  // namespace

TEST_CASE("gradient matches the analytic derivative", "[autodiff]") {
  const std::vector<double> x{0.7, 1.9, 2.3};
  const auto g = ad::gradient(test_fn, x);
  const auto ref = test_grad(x[0], x[1], x[2]);
  REQUIRE(g.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK_THAT(g[i], WithinRel(ref[i], 1e-13));
}

TEST_CASE("second order results match value, gradient and analytic Hessian", "[autodiff]") {
  const std::vector<double> x{-0.4, 0.8, 5.0};
  const auto so = ad::second_order(test_fn, x);
  CHECK_THAT(so.value, WithinRel(test_fn(x), 1e-14));
  const auto ref = test_grad(x[0], x[1], x[2]);
  for (int i = 0; i < 3; ++i) {
    CHECK_THAT(so.gradient[i], WithinRel(ref[i], 1e-13));
    for (int j = 0; j < 3; ++j) {
      CHECK_THAT(so.hessian(i, j), WithinAbs(test_hess(x[0], x[1], x[2], i, j), 1e-12));
      CHECK(so.hessian(i, j) == so.hessian(j, i));
    }
  }
}

TEST_CASE("value_and_gradient agrees with separate calls", "[autodiff]") {
  const std::vector<double> x{1.1, 2.2, 0.3};
  const auto [v, g] = ad::value_and_gradient(test_fn, x);
  CHECK(v == test_fn(x));
  CHECK(g == ad::gradient(test_fn, x));
}

TEST_CASE("jacobian of a vector function", "[autodiff]") {
  auto g = [](const auto& v) {
    using S = std::decay_t<decltype(v[0])>;
    using ad::exp;
    return std::vector<S>{v[0] * v[1], exp(v[1]) - v[0], v[0] / v[1]};
  };
  const std::vector<double> x{3.0, 0.5};
  const auto J = ad::jacobian(g, x);
  REQUIRE(J.rows == 3);
  REQUIRE(J.cols == 2);
  CHECK_THAT(J(0, 0), WithinRel(0.5, 1e-15));
  CHECK_THAT(J(0, 1), WithinRel(3.0, 1e-15));
  CHECK_THAT(J(1, 0), WithinRel(-1.0, 1e-15));
  CHECK_THAT(J(1, 1), WithinRel(std::exp(0.5), 1e-15));
  CHECK_THAT(J(2, 0), WithinRel(2.0, 1e-15));
  CHECK_THAT(J(2, 1), WithinRel(-12.0, 1e-15));
}

TEST_CASE("every dispatch width gives the same gradient of a quadratic form", "[autodiff]") {
  for (std::size_t n : {1u, 2u, 3u, 5u, 8u, 11u, 15u, 20u, 30u, 40u, 64u}) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = 0.1 * static_cast<double>(i + 1);
    auto f = [](const auto& v) {
      auto s = v[0] * v[0];
      for (std::size_t i = 1; i < v.size(); ++i) s = s + v[i] * v[i] * static_cast<double>(i + 1) + v[i] * v[i - 1];
      return s;
    };
    const auto so = ad::second_order(f, x);
    for (std::size_t i = 0; i < n; ++i) {
      double expected = 2.0 * x[i] * static_cast<double>(i + 1);
      if (i > 0) expected += x[i - 1];
      if (i + 1 < n) expected += x[i + 1];
      CHECK_THAT(so.gradient[i], WithinAbs(expected, 1e-13));
      CHECK(so.hessian(i, i) == 2.0 * static_cast<double>(i + 1));
      if (i + 1 < n) CHECK(so.hessian(i, i + 1) == 1.0);
    }
  }
}

TEST_CASE("more than 64 parameters is rejected", "[autodiff]") {
  const std::vector<double> x(65, 1.0);
  auto f = [](const auto& v) { return v[0]; };
  CHECK_THROWS_AS(ad::gradient(f, x), HmmError);
}

TEST_CASE("log of a non-positive argument raises a domain error", "[autodiff]") {
  const std::vector<double> x{-1.0};
  auto f = [](const auto& v) { return ad::log(v[0]); };
  try {
    ad::gradient(f, x);
    FAIL("expected a DomainError");
  } catch (const HmmError& e) {
    CHECK(e.code() == ErrorCode::DomainError);
  }
}

TEST_CASE("empty input has an empty gradient", "[autodiff]") {
  const std::vector<double> x;
  auto f = [](const auto&) { return 2.5; };
  const auto [v, g] = ad::value_and_gradient(f, x);
  CHECK(v == 2.5);
  CHECK(g.empty());
  CHECK(ad::second_order(f, x).hessian.rows == 0);
}
