#include "hmmfit/inference.hpp"

#include <cmath>
#include <limits>

#include "hmmfit/likelihood.hpp"

namespace hmmfit {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double v) { return v > 0.0 ? std::log(v) : kNegInf; }

double emission_log(const NaturalParams& p, const ObservationSeq& x, std::size_t t, std::size_t i) {
  if (x.missing(t)) return 0.0;
  return poisson_log_pmf(x[t], p.lambda[i]);
}

}  // namespace

ad::Matrix smoothing(const NaturalParams& p, const ObservationSeq& x) {
  const auto fb = forward_backward(p, x);
  const auto um = static_cast<std::size_t>(p.m);
  ad::Matrix s(x.size(), um);
  for (std::size_t t = 0; t < x.size(); ++t) {
    double sum = 0.0;
    for (std::size_t i = 0; i < um; ++i) {
      const double v = std::exp(fb.log_alpha[t * um + i] + fb.log_beta[t * um + i] - fb.log_likelihood);
      s(t, i) = v;
      sum += v;
    }
    for (std::size_t i = 0; i < um; ++i) s(t, i) /= sum;
  }
  return s;
}

std::vector<int> local_decode(const ad::Matrix& smooth) {
  std::vector<int> path(smooth.rows);
  for (std::size_t t = 0; t < smooth.rows; ++t) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < smooth.cols; ++i) {
      if (smooth(t, i) > smooth(t, best)) best = i;
    }
    path[t] = static_cast<int>(best);
  }
  return path;
}

std::vector<int> viterbi(const NaturalParams& p, const ObservationSeq& x) {
  const auto um = static_cast<std::size_t>(p.m);
  const std::size_t T = x.size();
  std::vector<double> log_gamma(um * um);
  for (std::size_t k = 0; k < um * um; ++k) log_gamma[k] = safe_log(p.gamma[k]);
  const auto init = p.initial_distribution();

  std::vector<double> score(um);
  std::vector<double> next(um);
  std::vector<int> back(T * um, 0);
  for (std::size_t i = 0; i < um; ++i) score[i] = safe_log(init[i]) + emission_log(p, x, 0, i);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t j = 0; j < um; ++j) {
      std::size_t arg = 0;
      double best = score[0] + log_gamma[j];
      for (std::size_t i = 1; i < um; ++i) {
        const double v = score[i] + log_gamma[i * um + j];
        if (v > best) {
          best = v;
          arg = i;
        }
      }
      back[t * um + j] = static_cast<int>(arg);
      next[j] = best + emission_log(p, x, t, j);
    }
    score.swap(next);
  }
  std::vector<int> path(T);
  std::size_t last = 0;
  for (std::size_t i = 1; i < um; ++i) {
    if (score[i] > score[last]) last = i;
  }
  path[T - 1] = static_cast<int>(last);
  for (std::size_t t = T - 1; t > 0; --t) {
    path[t - 1] = back[t * um + static_cast<std::size_t>(path[t])];
  }
  return path;
}

double path_log_probability(const NaturalParams& p, const ObservationSeq& x, std::span<const int> path) {
  if (path.size() != x.size()) throw HmmError(ErrorCode::InvalidArgument, "path length differs from data length");
  const auto um = static_cast<std::size_t>(p.m);
  const auto init = p.initial_distribution();
  double lp = safe_log(init[static_cast<std::size_t>(path[0])]);
  for (std::size_t t = 0; t < path.size(); ++t) {
    const auto c = static_cast<std::size_t>(path[t]);
    if (t > 0) lp += safe_log(p.gamma[static_cast<std::size_t>(path[t - 1]) * um + c]);
    lp += emission_log(p, x, t, c);
  }
  return lp;
}

int default_forecast_cap(const NaturalParams& p) {
  double hi = 0.0;
  for (double l : p.lambda) hi = std::max(hi, l);
  return static_cast<int>(std::ceil(hi + 10.0 * std::sqrt(hi)));
}

std::vector<double> forecast(const NaturalParams& p, const ObservationSeq& x, int h, int x_max) {
  if (h < 1) throw HmmError(ErrorCode::InvalidArgument, "forecast horizon must be >= 1");
  if (x_max < 0) x_max = default_forecast_cap(p);
  const auto um = static_cast<std::size_t>(p.m);
  const auto fb = forward_backward(p, x);
  const std::size_t T = x.size();

  // phi_T = alpha_T / (alpha_T 1').
  std::vector<double> phi(um);
  double sum = 0.0;
  for (std::size_t i = 0; i < um; ++i) {
    phi[i] = std::exp(fb.log_alpha[(T - 1) * um + i] - fb.log_likelihood);
    sum += phi[i];
  }
  for (auto& v : phi) v /= sum;

  std::vector<double> next(um);
  for (int step = 0; step < h; ++step) {
    for (std::size_t j = 0; j < um; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < um; ++i) acc += phi[i] * p.gamma[i * um + j];
      next[j] = acc;
    }
    phi.swap(next);
  }

  std::vector<double> pmf(static_cast<std::size_t>(x_max) + 1, 0.0);
  for (int k = 0; k <= x_max; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < um; ++i) acc += phi[i] * std::exp(poisson_log_pmf(k, p.lambda[i]));
    pmf[static_cast<std::size_t>(k)] = acc;
  }
  return pmf;
}

StateInference infer_states(const NaturalParams& p, const ObservationSeq& x) {
  StateInference out;
  out.smoothing = smoothing(p, x);
  out.local_path = local_decode(out.smoothing);
  out.viterbi_path = viterbi(p, x);
  return out;
}

}  // namespace hmmfit
