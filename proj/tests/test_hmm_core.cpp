#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "hmmfit/hmm_core.hpp"
#include "hmmfit/likelihood.hpp"
#include "oracle.hpp"

using namespace hmmfit;
using Catch::Matchers::WithinAbs;

TEST_CASE("tau block is column-major with the diagonal skipped", "[core]") {
  CHECK(tau_index(2, 1, 0) == 0);
  CHECK(tau_index(2, 0, 1) == 1);
  // m = 3: column 0 holds (1,0), (2,0); column 1 holds (0,1), (2,1); ...
  CHECK(tau_index(3, 1, 0) == 0);
  CHECK(tau_index(3, 2, 0) == 1);
  CHECK(tau_index(3, 0, 1) == 2);
  CHECK(tau_index(3, 2, 1) == 3);
  CHECK(tau_index(3, 0, 2) == 4);
  CHECK(tau_index(3, 1, 2) == 5);
  CHECK(num_working(3, InitialDistMode::Stationary) == 9);
  CHECK(num_working(3, InitialDistMode::Estimated) == 11);
}

TEST_CASE("known working vector maps to the expected natural parameters", "[core]") {
  WorkingParams w;
  w.m = 2;
  w.eta = {0.0, 1.098612};
  w.tau = {-1.386294, -1.386294};
  const auto p = working_to_natural(w);
  CHECK_THAT(p.lambda[0], WithinAbs(1.0, 1e-6));
  CHECK_THAT(p.lambda[1], WithinAbs(3.0, 1e-6));
  CHECK_THAT(p.tpm(0, 0), WithinAbs(0.8, 1e-6));
  CHECK_THAT(p.tpm(0, 1), WithinAbs(0.2, 1e-6));
  CHECK_THAT(p.tpm(1, 0), WithinAbs(0.2, 1e-6));
  CHECK_THAT(p.tpm(1, 1), WithinAbs(0.8, 1e-6));
  CHECK_THAT(p.delta[0], WithinAbs(0.5, 1e-6));
}

TEST_CASE("natural -> working -> natural round trip", "[core]") {
  std::mt19937_64 rng(11);
  for (int m = 1; m <= 5; ++m) {
    for (int rep = 0; rep < 20; ++rep) {
      const bool est = m > 1 && rep % 2 == 1;
      const auto p = oracle::random_model(m, rng, est);
      const auto w = natural_to_working(p);
      CHECK(w.mode() == (est ? InitialDistMode::Estimated : InitialDistMode::Stationary));
      const auto q = working_to_natural(w);
      for (std::size_t i = 0; i < p.lambda.size(); ++i) CHECK_THAT(q.lambda[i], WithinAbs(p.lambda[i], 1e-12));
      for (std::size_t i = 0; i < p.gamma.size(); ++i) CHECK_THAT(q.gamma[i], WithinAbs(p.gamma[i], 1e-12));
      for (std::size_t i = 0; i < p.delta.size(); ++i) CHECK_THAT(q.delta[i], WithinAbs(p.delta[i], 1e-12));
      for (std::size_t i = 0; i < p.initial.size(); ++i) CHECK_THAT(q.initial[i], WithinAbs(p.initial[i], 1e-12));

      const auto flat = w.flatten();
      const auto back = WorkingParams::from_flat(m, w.mode(), flat);
      CHECK(back.flatten() == flat);
    }
  }
}

TEST_CASE("stationary distribution solves delta Gamma = delta", "[core]") {
  std::mt19937_64 rng(5);
  for (int m = 1; m <= 6; ++m) {
    const auto p = oracle::random_model(m, rng);
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      double v = 0.0;
      for (int i = 0; i < m; ++i) v += p.delta[static_cast<std::size_t>(i)] * p.tpm(i, j);
      CHECK_THAT(v, WithinAbs(p.delta[static_cast<std::size_t>(j)], 1e-13));
      CHECK(p.delta[static_cast<std::size_t>(j)] > 0.0);
      sum += p.delta[static_cast<std::size_t>(j)];
    }
    CHECK_THAT(sum, WithinAbs(1.0, 1e-13));
  }
}

TEST_CASE("make_natural validates its input", "[core]") {
  auto code_of = [](auto&& f) {
    try {
      f();
    } catch (const HmmError& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;  // unreachable in these checks
  };
  CHECK_THROWS_AS(make_natural({}, {}), HmmError);
  CHECK(code_of([] { make_natural({1.0, -2.0}, {0.5, 0.5, 0.5, 0.5}); }) == ErrorCode::NonPositiveRate);
  CHECK_THROWS_AS(make_natural({1.0, 2.0}, {0.5, 0.5, 0.5}), HmmError);
  CHECK_THROWS_AS(make_natural({1.0, 2.0}, {0.6, 0.6, 0.5, 0.5}), HmmError);
  CHECK_THROWS_AS(make_natural({1.0, 2.0}, {0.5, 0.5, 0.5, 0.5}, {0.3, 0.3}), HmmError);
  CHECK(code_of([] { natural_to_working(make_natural({1.0, 2.0}, {0.0, 1.0, 0.5, 0.5})); }) ==
        ErrorCode::DegenerateTPM);
}

TEST_CASE("canonicalize sorts states by rate and keeps the likelihood", "[core]") {
  const auto p = make_natural({6.0, 1.0, 3.0}, {0.7, 0.2, 0.1, 0.1, 0.8, 0.1, 0.3, 0.3, 0.4});
  const auto q = canonicalize(p);
  CHECK(q.lambda == std::vector<double>{1.0, 3.0, 6.0});
  CHECK(q.tpm(0, 0) == p.tpm(1, 1));
  CHECK(q.tpm(0, 2) == p.tpm(1, 0));
  CHECK(q.tpm(2, 1) == p.tpm(0, 2));
  CHECK(q.delta[2] == p.delta[0]);
  const ObservationSeq x({0, 2, 5, 7, 1, 0, 3, 9, 4});
  CHECK_THAT(nll(natural_to_working(q), x), WithinAbs(nll(natural_to_working(p), x), 1e-12));
}

TEST_CASE("observation sequences track levels and missing values", "[core]") {
  const ObservationSeq x({3, ObservationSeq::kMissing, 0, 3, 7});
  CHECK(x.size() == 5);
  CHECK(x.missing(1));
  CHECK(x.num_present() == 4);
  CHECK(x.levels() == std::vector<int>{0, 3, 7});
  CHECK(x.level_of(0) == 1);
  CHECK(x.level_of(1) == -1);
  CHECK(x.level_of(4) == 2);
  CHECK_THROWS_AS(ObservationSeq(std::vector<int>{}), HmmError);
  CHECK_THROWS_AS(ObservationSeq(std::vector<int>{1, -5}), HmmError);
}
