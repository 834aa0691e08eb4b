#include "hmmfit/likelihood.hpp"

#include <algorithm>
#include <array>
#include <limits>

#include <boost/math/special_functions/gamma.hpp>

namespace hmmfit {

namespace {

constexpr int kTableMax = 256;

const std::array<double, kTableMax + 1>& log_factorial_table() {
  static const auto table = [] {
    std::array<double, kTableMax + 1> t{};
    t[0] = 0.0;
    for (int k = 1; k <= kTableMax; ++k) t[static_cast<std::size_t>(k)] = t[static_cast<std::size_t>(k - 1)] + std::log(static_cast<double>(k));
    return t;
  }();
  return table;
}

}  // namespace

double log_factorial(int x) {
  if (x < 0) throw HmmError(ErrorCode::DomainError, "log_factorial of negative value");
  if (x <= kTableMax) return log_factorial_table()[static_cast<std::size_t>(x)];
  return boost::math::lgamma(static_cast<double>(x) + 1.0);
}

double poisson_log_pmf(int x, double lambda) {
  if (!(lambda > 0.0)) throw HmmError(ErrorCode::DomainError, "Poisson rate must be positive");
  if (x < 0) throw HmmError(ErrorCode::DomainError, "Poisson count must be non-negative");
  return static_cast<double>(x) * std::log(lambda) - lambda - log_factorial(x);
}

double nll(const WorkingParams& w, const ObservationSeq& x) {
  const auto flat = w.flatten();
  return nll_generic<double>(w.m, w.mode(), std::span<const double>(flat), x);
}

double logsumexp(std::span<const double> v) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double e : v) hi = std::max(hi, e);
  if (!std::isfinite(hi)) return hi;
  double s = 0.0;
  for (double e : v) s += std::exp(e - hi);
  return hi + std::log(s);
}

ForwardBackwardResult forward_backward(const NaturalParams& p, const ObservationSeq& x) {
  const int m = p.m;
  const auto um = static_cast<std::size_t>(m);
  const std::size_t T = x.size();
  if (T == 0) throw HmmError(ErrorCode::EmptyData, "observation sequence is empty");

  std::vector<double> eta(um);
  for (std::size_t i = 0; i < um; ++i) eta[i] = std::log(p.lambda[i]);
  const auto tab = detail::density_table<double>(x, eta, p.lambda);
  const auto init = p.initial_distribution();

  ForwardBackwardResult out;
  out.T = T;
  out.m = m;
  out.log_alpha.resize(T * um);
  out.log_beta.resize(T * um);

  auto to_log = [](double v) {
    return v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
  };

  // Forward: phi_t = alpha_t / (alpha_t 1'), log scale accumulated in c.
  std::vector<double> phi(init.begin(), init.end());
  std::vector<double> next(um);
  double c = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) {
      for (std::size_t j = 0; j < um; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < um; ++i) acc += phi[i] * p.gamma[i * um + j];
        next[j] = acc;
      }
      phi.swap(next);
    }
    const int level = x.level_of(t);
    if (level >= 0) {
      const auto l = static_cast<std::size_t>(level);
      for (std::size_t i = 0; i < um; ++i) phi[i] *= tab.weight[l * um + i];
      c += tab.shift[l];
    }
    double sum = 0.0;
    for (double v : phi) sum += v;
    if (!(sum > 0.0) || !std::isfinite(sum)) {
      throw HmmError(ErrorCode::NonFiniteLikelihood, "forward recursion underflowed");
    }
    c += std::log(sum);
    for (std::size_t i = 0; i < um; ++i) {
      phi[i] /= sum;
      out.log_alpha[t * um + i] = to_log(phi[i]) + c;
    }
  }
  out.log_likelihood = c;

  // Backward: beta_t = Gamma P(x_{t+1}) beta_{t+1}, beta_T = 1.
  std::vector<double> psi(um, 1.0);
  double d = 0.0;
  for (std::size_t i = 0; i < um; ++i) out.log_beta[(T - 1) * um + i] = 0.0;
  std::vector<double> weighted(um);
  for (std::size_t t = T - 1; t-- > 0;) {
    const int level = x.level_of(t + 1);
    double shift = 0.0;
    for (std::size_t j = 0; j < um; ++j) {
      weighted[j] = psi[j];
      if (level >= 0) weighted[j] *= tab.weight[static_cast<std::size_t>(level) * um + j];
    }
    if (level >= 0) shift = tab.shift[static_cast<std::size_t>(level)];
    double sum = 0.0;
    for (std::size_t i = 0; i < um; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < um; ++j) acc += p.gamma[i * um + j] * weighted[j];
      next[i] = acc;
      sum += acc;
    }
    if (!(sum > 0.0) || !std::isfinite(sum)) {
      throw HmmError(ErrorCode::NonFiniteLikelihood, "backward recursion underflowed");
    }
    d += shift + std::log(sum);
    for (std::size_t i = 0; i < um; ++i) {
      psi[i] = next[i] / sum;
      out.log_beta[t * um + i] = to_log(psi[i]) + d;
    }
  }
  return out;
}

}  // namespace hmmfit
