#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "hmmfit/optimize.hpp"

using namespace hmmfit;
using Catch::Matchers::WithinAbs;

namespace {

auto rosenbrock = [](const auto& v) {
  const auto a = 1.0 - v[0];
  const auto b = v[1] - v[0] * v[0];
  return a * a + 100.0 * b * b;
};

ObjectiveFunctions functions_of(auto f) {
  ObjectiveFunctions o;
  o.fn = [f](std::span<const double> x) { return f(std::vector<double>(x.begin(), x.end())); };
  o.gr = [f](std::span<const double> x) { return ad::gradient(f, x); };
  o.he = [f](std::span<const double> x) { return ad::hessian(f, x); };
  o.fgh = [f](std::span<const double> x) { return ad::second_order(f, x); };
  return o;
}

const OptimMode kModes[] = {OptimMode::NoDeriv, OptimMode::Grad, OptimMode::Hess, OptimMode::GradHess};

}  // namespace

TEST_CASE("mode names round trip", "[optimize]") {
  for (const auto m : kModes) CHECK(parse_optim_mode(to_string(m)) == m);
  CHECK_FALSE(parse_optim_mode("bfgs").has_value());
}

TEST_CASE("Rosenbrock converges to (1, 1) in every mode", "[optimize]") {
  const auto obj = functions_of(rosenbrock);
  for (const auto mode : kModes) {
    OptimizerConfig cfg;
    cfg.mode = mode;
    cfg.max_iter = 2000;
    const auto r = minimize(obj, {-1.2, 1.0}, cfg);
    INFO(to_string(mode));
    CHECK(r.converged);
    CHECK_THAT(r.x_opt[0], WithinAbs(1.0, 1e-5));
    CHECK_THAT(r.x_opt[1], WithinAbs(1.0, 1e-5));
    CHECK(r.f_opt < 1e-10);
    CHECK(r.f_opt <= obj.fn(std::vector<double>{-1.2, 1.0}));
  }
}

TEST_CASE("Newton solves a convex quadratic in one step", "[optimize]") {
  // f = 0.5 x'Ax - b'x with A = [[4,1],[1,3]], b = (1,2); minimiser A^-1 b.
  auto quad = [](const auto& v) {
    return 0.5 * (4.0 * v[0] * v[0] + 2.0 * v[0] * v[1] + 3.0 * v[1] * v[1]) - v[0] - 2.0 * v[1];
  };
  const auto obj = functions_of(quad);
  OptimizerConfig cfg;
  cfg.mode = OptimMode::GradHess;
  const auto r = minimize(obj, {0.2, 0.3}, cfg);
  CHECK(r.converged);
  CHECK(r.iterations <= 2);
  CHECK_THAT(r.x_opt[0], WithinAbs(1.0 / 11.0, 1e-10));
  CHECK_THAT(r.x_opt[1], WithinAbs(7.0 / 11.0, 1e-10));

  cfg.mode = OptimMode::Grad;
  const auto b = minimize(obj, {0.2, 0.3}, cfg);
  CHECK(b.converged);
  CHECK_THAT(b.x_opt[0], WithinAbs(1.0 / 11.0, 1e-7));
}

TEST_CASE("empty parameter vectors terminate immediately", "[optimize]") {
  ObjectiveFunctions obj;
  obj.fn = [](std::span<const double>) { return 3.0; };
  OptimizerConfig cfg;
  cfg.mode = OptimMode::NoDeriv;
  const auto r = minimize(obj, {}, cfg);
  CHECK(r.converged);
  CHECK(r.termination == Termination::NoFreeParameters);
  CHECK(r.f_opt == 3.0);
}

TEST_CASE("iteration limit is reported as non-convergence", "[optimize]") {
  const auto obj = functions_of(rosenbrock);
  OptimizerConfig cfg;
  cfg.mode = OptimMode::Grad;
  cfg.max_iter = 3;
  const auto r = minimize(obj, {-1.2, 1.0}, cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.termination == Termination::MaxIterExceeded);
  CHECK(r.iterations == 3);
}

TEST_CASE("line search backs off from an infinite region", "[optimize]") {
  // Defined only for x > 0; minimum at x = 1.
  ObjectiveFunctions obj;
  obj.fn = [](std::span<const double> x) {
    return x[0] > 0.0 ? x[0] - std::log(x[0]) : std::numeric_limits<double>::infinity();
  };
  for (const auto mode : {OptimMode::NoDeriv, OptimMode::Grad}) {
    OptimizerConfig cfg;
    cfg.mode = mode;
    obj.gr = [](std::span<const double> x) { return std::vector<double>{1.0 - 1.0 / x[0]}; };
    const auto r = minimize(obj, {0.05}, cfg);
    CHECK(r.converged);
    CHECK_THAT(r.x_opt[0], WithinAbs(1.0, 1e-6));
  }
}

TEST_CASE("non-finite start is reported", "[optimize]") {
  ObjectiveFunctions obj;
  obj.fn = [](std::span<const double>) { return std::numeric_limits<double>::infinity(); };
  const auto r = minimize(obj, {1.0}, OptimizerConfig{OptimMode::NoDeriv});
  CHECK_FALSE(r.converged);
  CHECK(r.termination == Termination::NonFiniteEncountered);
}

TEST_CASE("central differences approximate the gradient", "[optimize]") {
  auto f = [](std::span<const double> x) { return std::sin(x[0]) * std::exp(x[1]); };
  const std::vector<double> x{0.3, -0.7};
  const auto g = fd_gradient(f, x);
  CHECK_THAT(g[0], WithinAbs(std::cos(0.3) * std::exp(-0.7), 1e-8));
  CHECK_THAT(g[1], WithinAbs(std::sin(0.3) * std::exp(-0.7), 1e-8));
}
