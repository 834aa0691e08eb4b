#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "hmmfit/dataset.hpp"
#include "hmmfit/inference.hpp"
#include "hmmfit/simulate.hpp"
#include "oracle.hpp"

using namespace hmmfit;
using Catch::Matchers::WithinAbs;

TEST_CASE("smoothing, Viterbi and forecasts match enumeration", "[inference]") {
  std::mt19937_64 rng(77);
  for (int rep = 0; rep < 20; ++rep) {
    const int m = 2 + rep % 2;
    const auto p = oracle::random_model(m, rng, rep % 3 == 0);
    auto values = simulate_hmm(p, 6, rng).x.values();
    if (rep % 4 == 1) values[3] = ObservationSeq::kMissing;
    const ObservationSeq x(values);

    const auto s = smoothing(p, x);
    const auto s_ref = oracle::smoothing(p, x);
    REQUIRE(s.rows == 6);
    for (std::size_t i = 0; i < s_ref.size(); ++i) CHECK_THAT(s.data[i], WithinAbs(static_cast<double>(s_ref[i]), 1e-12));

    const auto best = oracle::best_path(p, x);
    CHECK(viterbi(p, x) == best.path);
    CHECK_THAT(path_log_probability(p, x, best.path), WithinAbs(static_cast<double>(best.log_prob), 1e-12));

    for (int h : {1, 3}) {
      const int cap = default_forecast_cap(p);
      const auto f = forecast(p, x, h, cap);
      const auto f_ref = oracle::forecast(p, x, h, cap);
      REQUIRE(f.size() == static_cast<std::size_t>(cap) + 1);
      for (std::size_t k = 0; k < f.size(); ++k) CHECK_THAT(f[k], WithinAbs(static_cast<double>(f_ref[k]), 1e-12));
    }
  }
}

TEST_CASE("smoothing rows sum to one on long series", "[inference]") {
  const auto p = preset("sim3");
  const auto x = simulate_hmm(p, 5000, 2).x;
  const auto s = smoothing(p, x);
  for (std::size_t t = 0; t < s.rows; t += 97) {
    double sum = 0.0;
    for (std::size_t i = 0; i < s.cols; ++i) sum += s(t, i);
    CHECK_THAT(sum, WithinAbs(1.0, 1e-12));
  }
  const auto st = infer_states(p, x);
  CHECK(st.local_path == local_decode(st.smoothing));
  CHECK(st.viterbi_path.size() == x.size());
  // The Viterbi path is at least as probable as the local path.
  CHECK(path_log_probability(p, x, st.viterbi_path) >= path_log_probability(p, x, st.local_path));
}

TEST_CASE("local decoding breaks ties towards the lower state", "[inference]") {
  ad::Matrix s(2, 3);
  s(0, 0) = 0.4;
  s(0, 1) = 0.4;
  s(0, 2) = 0.2;
  s(1, 0) = 0.1;
  s(1, 1) = 0.45;
  s(1, 2) = 0.45;
  CHECK(local_decode(s) == std::vector<int>{0, 1});
}

TEST_CASE("Viterbi breaks exact ties towards the lower state", "[inference]") {
  const auto p = make_natural({2.0, 2.0}, {0.5, 0.5, 0.5, 0.5}, {0.5, 0.5});
  const ObservationSeq x({1, 3, 2});
  CHECK(viterbi(p, x) == std::vector<int>{0, 0, 0});
}

TEST_CASE("forecasts converge to the stationary mixture", "[inference]") {
  const auto p = preset("sim2");
  const auto x = tyt_data();
  const int cap = default_forecast_cap(p);
  const auto f1 = forecast(p, x, 1);
  CHECK(f1.size() == static_cast<std::size_t>(cap) + 1);
  CHECK_THAT(std::accumulate(f1.begin(), f1.end(), 0.0), WithinAbs(1.0, 1e-9));
  const auto far = forecast(p, x, 2000, 30);
  for (int k = 0; k <= 30; ++k) {
    const double mix = p.delta[0] * static_cast<double>(oracle::poisson_pmf(k, p.lambda[0])) +
                       p.delta[1] * static_cast<double>(oracle::poisson_pmf(k, p.lambda[1]));
    CHECK_THAT(far[static_cast<std::size_t>(k)], WithinAbs(mix, 1e-12));
  }
  CHECK_THROWS_AS(forecast(p, x, 0), HmmError);
}

TEST_CASE("path probability rejects a mismatched path", "[inference]") {
  const auto p = preset("sim2");
  const ObservationSeq x({1, 2, 3});
  CHECK_THROWS_AS(path_log_probability(p, x, std::vector<int>{0, 1}), HmmError);
}
