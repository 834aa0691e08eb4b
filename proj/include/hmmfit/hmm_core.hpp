#pragma once

// Poisson HMM parameter types and the natural <-> working transforms.
//
// Working vector layout (the optimizer's space):
//   [ eta_1..eta_m | tau (m(m-1), off-diagonals of Gamma, column-major) | nu ]
// where eta_i = log lambda_i, tau_ij = log(gamma_ij / gamma_ii), and nu holds
// the m-1 logits of a freely estimated initial distribution (empty when the
// stationary distribution is used).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hmmfit/autodiff.hpp"
#include "hmmfit/error.hpp"

namespace hmmfit {

enum class InitialDistMode { Stationary, Estimated };

/// Number of off-diagonal TPM entries.
constexpr int num_tau(int m) { return m * (m - 1); }

/// Length of the working vector for an m-state model.
constexpr int num_working(int m, InitialDistMode mode) {
  return m + num_tau(m) + (mode == InitialDistMode::Estimated ? m - 1 : 0);
}

/// Position of gamma_ij (i != j) in the tau block: column-major, diagonal
/// skipped.
constexpr int tau_index(int m, int i, int j) { return j * (m - 1) + (i < j ? i : i - 1); }

struct NaturalParams {
  int m = 0;
  std::vector<double> lambda;
  std::vector<double> gamma;  // m x m, row-major
  std::vector<double> delta;  // stationary distribution of gamma
  // Freely estimated initial distribution; empty means "start from delta".
  std::vector<double> initial;

  double tpm(int i, int j) const { return gamma[static_cast<std::size_t>(i * m + j)]; }
  std::span<const double> initial_distribution() const {
    return initial.empty() ? std::span<const double>(delta) : std::span<const double>(initial);
  }
  InitialDistMode mode() const {
    return initial.empty() ? InitialDistMode::Stationary : InitialDistMode::Estimated;
  }
};

/// Validates lambda/gamma, renormalises rows and fills delta.
NaturalParams make_natural(std::vector<double> lambda, std::vector<double> gamma,
                           std::vector<double> initial = {});

struct WorkingParams {
  int m = 0;
  std::vector<double> eta;
  std::vector<double> tau;
  std::vector<double> nu;

  InitialDistMode mode() const {
    return nu.empty() ? InitialDistMode::Stationary : InitialDistMode::Estimated;
  }
  std::vector<double> flatten() const;
  static WorkingParams from_flat(int m, InitialDistMode mode, std::span<const double> w);
};

/// Observed counts with an optional missing marker. Also caches the distinct
/// count values so density tables are built per value, not per time step.
class ObservationSeq {
 public:
  static constexpr int kMissing = -1;

  ObservationSeq() = default;
  explicit ObservationSeq(std::vector<int> values);

  std::size_t size() const { return values_.size(); }
  bool missing(std::size_t t) const { return values_[t] == kMissing; }
  int operator[](std::size_t t) const { return values_[t]; }
  const std::vector<int>& values() const { return values_; }

  /// Sorted distinct observed counts.
  const std::vector<int>& levels() const { return levels_; }
  /// Index into levels() for each t, or -1 when missing.
  int level_of(std::size_t t) const { return level_of_[t]; }
  std::size_t num_present() const;

 private:
  std::vector<int> values_;
  std::vector<int> levels_;
  std::vector<int> level_of_;
};

// ---- generic pieces (instantiated for double and AD scalars) -------------

template <class S>
struct GenericNatural {
  std::vector<S> lambda;
  std::vector<S> gamma;    // row-major
  std::vector<S> delta;    // stationary
  std::vector<S> initial;  // distribution of C_1
};

/// Solves delta (I - Gamma + U) = 1 by Gaussian elimination with partial
/// pivoting (pivot choice uses values only, so AD scalars flow through).
template <class S>
std::vector<S> stationary_generic(int m, const std::vector<S>& gamma) {
  using ad::value_of;
  const auto n = static_cast<std::size_t>(m);
  // Transposed system A^T d^T = 1, A = I - Gamma + U.
  std::vector<S> a(n * n);
  std::vector<S> b(n, S(1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      // a(i, j) = A(j, i)
      a[i * n + j] = (i == j ? 2.0 : 1.0) - gamma[j * n + i];
    }
  }
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    double best = std::abs(value_of(a[col * n + col]));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double v = std::abs(value_of(a[r * n + col]));
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (!(best > 1e-13)) {
      throw HmmError(ErrorCode::SingularSystem,
                     "stationary distribution system is singular (reducible chain?)");
    }
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[col * n + j], a[piv * n + j]);
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const S factor = a[r * n + col] / a[col * n + col];
      for (std::size_t j = col; j < n; ++j) a[r * n + j] -= factor * a[col * n + j];
      b[r] -= factor * b[col];
    }
  }
  std::vector<S> d(n);
  for (std::size_t k = n; k-- > 0;) {
    S acc = b[k];
    for (std::size_t j = k + 1; j < n; ++j) acc -= a[k * n + j] * d[j];
    d[k] = acc / a[k * n + k];
  }
  return d;
}

/// Row-wise multinomial logit with the diagonal as reference category; the
/// max-shift keeps it total for any finite tau.
template <class S>
std::vector<S> tpm_from_tau(int m, std::span<const S> tau) {
  using ad::value_of;
  const auto n = static_cast<std::size_t>(m);
  std::vector<S> gamma(n * n, S(0.0));
  if (m == 1) {
    gamma[0] = S(1.0);
    return gamma;
  }
  for (int i = 0; i < m; ++i) {
    double shift = 0.0;
    for (int j = 0; j < m; ++j) {
      if (j != i) shift = std::max(shift, value_of(tau[static_cast<std::size_t>(tau_index(m, i, j))]));
    }
    S denom = S(std::exp(-shift));
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      auto& g = gamma[static_cast<std::size_t>(i * m + j)];
      g = ad::exp(tau[static_cast<std::size_t>(tau_index(m, i, j))] - shift);
      denom += g;
    }
    for (int j = 0; j < m; ++j) {
      auto& g = gamma[static_cast<std::size_t>(i * m + j)];
      g = (j == i) ? S(std::exp(-shift)) / denom : g / denom;
    }
  }
  return gamma;
}

template <class S>
GenericNatural<S> natural_from_flat(int m, InitialDistMode mode, std::span<const S> w) {
  using ad::value_of;
  const auto um = static_cast<std::size_t>(m);
  GenericNatural<S> out;
  out.lambda.resize(um);
  for (std::size_t i = 0; i < um; ++i) {
    out.lambda[i] = ad::exp(w[i]);
    if (!std::isfinite(value_of(out.lambda[i]))) {
      throw HmmError(ErrorCode::NumericOverflow, "exp(eta) overflowed");
    }
  }
  out.gamma = tpm_from_tau<S>(m, w.subspan(um, static_cast<std::size_t>(num_tau(m))));
  out.delta = stationary_generic<S>(m, out.gamma);
  if (mode == InitialDistMode::Estimated) {
    const auto nu = w.subspan(um + static_cast<std::size_t>(num_tau(m)), um - 1);
    double shift = 0.0;
    for (const auto& v : nu) shift = std::max(shift, value_of(v));
    out.initial.resize(um);
    out.initial[0] = S(std::exp(-shift));
    S denom = out.initial[0];
    for (std::size_t i = 1; i < um; ++i) {
      out.initial[i] = ad::exp(nu[i - 1] - shift);
      denom += out.initial[i];
    }
    for (auto& v : out.initial) v = v / denom;
  } else {
    out.initial = out.delta;
  }
  return out;
}

// ---- operations -----------------------------------------------------------

WorkingParams natural_to_working(const NaturalParams& p);
NaturalParams working_to_natural(const WorkingParams& w);
std::vector<double> stationary_dist(std::span<const double> gamma, int m);

/// Relabels states so lambda is ascending; gamma/delta/initial permuted
/// consistently.
NaturalParams canonicalize(const NaturalParams& p);

}  // namespace hmmfit
