#pragma once

// Brute-force references computed by enumerating every hidden state path in
// long double. Only usable for tiny m^T.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "hmmfit/hmm_core.hpp"

namespace oracle {

inline long double poisson_pmf(int k, double lambda) {
  const long double l = lambda;
  return std::exp(-l + k * std::log(l) - std::lgamma(static_cast<long double>(k) + 1.0L));
}

inline long double emission(const hmmfit::NaturalParams& p, int state, int x) {
  if (x == hmmfit::ObservationSeq::kMissing) return 1.0L;
  return poisson_pmf(x, p.lambda[static_cast<std::size_t>(state)]);
}

/// Calls f(path, joint probability) for every path over `obs`; kMissing
/// entries contribute an emission factor of one.
template <class F>
void enumerate(const hmmfit::NaturalParams& p, const std::vector<int>& obs, F&& f) {
  const std::size_t n = obs.size();
  const int m = p.m;
  std::vector<int> path(n, 0);
  const auto init = p.initial_distribution();
  while (true) {
    long double prob = init[static_cast<std::size_t>(path[0])] * emission(p, path[0], obs[0]);
    for (std::size_t t = 1; t < n; ++t) {
      prob *= p.tpm(path[t - 1], path[t]) * emission(p, path[t], obs[t]);
    }
    f(path, prob);
    std::size_t k = 0;
    while (k < n && ++path[k] == m) path[k++] = 0;
    if (k == n) break;
  }
}

inline long double likelihood(const hmmfit::NaturalParams& p, const hmmfit::ObservationSeq& x) {
  long double total = 0.0L;
  enumerate(p, x.values(), [&](const std::vector<int>&, long double pr) { total += pr; });
  return total;
}

/// P(C_t = i | x), T x m row-major.
inline std::vector<long double> smoothing(const hmmfit::NaturalParams& p, const hmmfit::ObservationSeq& x) {
  const std::size_t T = x.size();
  const auto m = static_cast<std::size_t>(p.m);
  std::vector<long double> s(T * m, 0.0L);
  long double total = 0.0L;
  enumerate(p, x.values(), [&](const std::vector<int>& path, long double pr) {
    total += pr;
    for (std::size_t t = 0; t < T; ++t) s[t * m + static_cast<std::size_t>(path[t])] += pr;
  });
  for (auto& v : s) v /= total;
  return s;
}

struct BestPath {
  std::vector<int> path;
  long double log_prob = 0.0L;
};

inline BestPath best_path(const hmmfit::NaturalParams& p, const hmmfit::ObservationSeq& x) {
  BestPath best;
  long double best_pr = -1.0L;
  enumerate(p, x.values(), [&](const std::vector<int>& path, long double pr) {
    if (pr > best_pr) {
      best_pr = pr;
      best.path = path;
    }
  });
  best.log_prob = std::log(best_pr);
  return best;
}

/// P(X_{T+h} = k | x) for k = 0..x_max, enumerating the h extra steps too.
inline std::vector<long double> forecast(const hmmfit::NaturalParams& p, const hmmfit::ObservationSeq& x, int h,
                                         int x_max) {
  std::vector<long double> out(static_cast<std::size_t>(x_max) + 1, 0.0L);
  std::vector<int> obs = x.values();
  for (int s = 0; s < h; ++s) obs.push_back(hmmfit::ObservationSeq::kMissing);
  long double denom = 0.0L;
  enumerate(p, obs, [&](const std::vector<int>& path, long double pr) {
    denom += pr;
    for (int k = 0; k <= x_max; ++k) out[static_cast<std::size_t>(k)] += pr * emission(p, path.back(), k);
  });
  for (auto& v : out) v /= denom;
  return out;
}

/// Random well-conditioned m-state model.
inline hmmfit::NaturalParams random_model(int m, std::mt19937_64& rng, bool estimated_initial = false) {
  std::uniform_real_distribution<double> rate(0.3, 12.0);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> lambda(static_cast<std::size_t>(m));
  for (auto& l : lambda) l = rate(rng);
  std::vector<double> gamma(static_cast<std::size_t>(m * m));
  for (int i = 0; i < m; ++i) {
    double sum = 0.0;
    for (int j = 0; j < m; ++j) {
      auto& g = gamma[static_cast<std::size_t>(i * m + j)];
      g = u(rng) + (i == j ? 1.0 : 0.0);
      sum += g;
    }
    for (int j = 0; j < m; ++j) gamma[static_cast<std::size_t>(i * m + j)] /= sum;
  }
  std::vector<double> initial;
  if (estimated_initial) {
    double sum = 0.0;
    for (int i = 0; i < m; ++i) sum += initial.emplace_back(u(rng));
    for (auto& v : initial) v /= sum;
  }
  return hmmfit::make_natural(lambda, gamma, initial);
}

}  // namespace oracle
