#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "hmmfit/autodiff.hpp"
#include "hmmfit/hmm_core.hpp"

namespace hmmfit {

/// log(x!) from a table for x <= 256, log-gamma above.
double log_factorial(int x);

/// x log(lambda) - lambda - log(x!).
double poisson_log_pmf(int x, double lambda);

namespace detail {

/// Per distinct count value: log p_i(x) = shift + log(weight_i), with shift
/// the largest state log-density so the weights stay in (0, 1].
template <class S>
struct DensityTable {
  std::vector<S> shift;   // one per level
  std::vector<S> weight;  // levels x m
};

template <class S>
DensityTable<S> density_table(const ObservationSeq& x, std::span<const S> eta,
                              std::span<const S> lambda) {
  using ad::value_of;
  const std::size_t m = lambda.size();
  const auto& levels = x.levels();
  DensityTable<S> tab;
  tab.shift.resize(levels.size());
  tab.weight.resize(levels.size() * m);
  std::vector<S> logp(m);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const int count = levels[l];
    const double lf = log_factorial(count);
    std::size_t best = 0;
    for (std::size_t i = 0; i < m; ++i) {
      logp[i] = static_cast<double>(count) * eta[i] - lambda[i] - lf;
      if (value_of(logp[i]) > value_of(logp[best])) best = i;
    }
    tab.shift[l] = logp[best];
    for (std::size_t i = 0; i < m; ++i) tab.weight[l * m + i] = ad::exp(logp[i] - logp[best]);
  }
  return tab;
}

}  // namespace detail

/// Negative log-likelihood of a flat working vector by the scaled forward
/// recursion. Generic over the scalar so the same code yields value,
/// gradient and Hessian.
template <class S>
S nll_generic(int m, InitialDistMode mode, std::span<const S> w, const ObservationSeq& x) {
  using ad::value_of;
  const auto nat = natural_from_flat<S>(m, mode, w);
  const auto um = static_cast<std::size_t>(m);
  std::vector<S> eta(w.begin(), w.begin() + static_cast<long>(um));
  const auto tab = detail::density_table<S>(x, std::span<const S>(eta), std::span<const S>(nat.lambda));

  std::vector<S> phi = nat.initial;
  std::vector<S> next(um);
  S loglik(0.0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (t > 0) {
      for (std::size_t j = 0; j < um; ++j) {
        S acc = phi[0] * nat.gamma[j];
        for (std::size_t i = 1; i < um; ++i) acc += phi[i] * nat.gamma[i * um + j];
        next[j] = acc;
      }
      phi.swap(next);
    }
    const int level = x.level_of(t);
    if (level >= 0) {
      const auto l = static_cast<std::size_t>(level);
      for (std::size_t i = 0; i < um; ++i) phi[i] *= tab.weight[l * um + i];
      loglik += tab.shift[l];
    }
    S sum = phi[0];
    for (std::size_t i = 1; i < um; ++i) sum += phi[i];
    if (!(value_of(sum) > 0.0) || !std::isfinite(value_of(sum))) {
      throw HmmError(ErrorCode::NonFiniteLikelihood, "forward recursion underflowed at t=" +
                                                         std::to_string(t + 1));
    }
    loglik += ad::log(sum);
    for (auto& v : phi) v /= sum;
  }
  if (!std::isfinite(value_of(loglik))) {
    throw HmmError(ErrorCode::NonFiniteLikelihood, "log-likelihood is not finite");
  }
  return -loglik;
}

double nll(const WorkingParams& w, const ObservationSeq& x);

struct ForwardBackwardResult {
  std::size_t T = 0;
  int m = 0;
  std::vector<double> log_alpha;  // T x m
  std::vector<double> log_beta;   // T x m
  double log_likelihood = 0.0;

  double alpha(std::size_t t, int i) const { return log_alpha[t * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)]; }
  double beta(std::size_t t, int i) const { return log_beta[t * static_cast<std::size_t>(m) + static_cast<std::size_t>(i)]; }
};

ForwardBackwardResult forward_backward(const NaturalParams& p, const ObservationSeq& x);

/// Stable log(sum(exp(v))).
double logsumexp(std::span<const double> v);

}  // namespace hmmfit
