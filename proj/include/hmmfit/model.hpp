#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hmmfit/autodiff.hpp"
#include "hmmfit/hmm_core.hpp"
#include "hmmfit/likelihood.hpp"
#include "hmmfit/optimize.hpp"

namespace hmmfit {

/// Per working parameter: nullopt = fixed at its initial value; otherwise a
/// group id. Parameters sharing an id are constrained equal. Free variables
/// are ordered by ascending group id.
class ParameterMap {
 public:
  ParameterMap() = default;
  explicit ParameterMap(std::vector<std::optional<int>> entries);

  static ParameterMap identity(std::size_t n);

  std::size_t size() const { return entries_.size(); }
  std::size_t num_free() const { return num_free_; }
  const std::vector<std::optional<int>>& entries() const { return entries_; }
  /// Free index of working parameter i, or -1 if fixed.
  int free_index(std::size_t i) const { return free_index_[i]; }
  bool is_identity() const;

  template <class S>
  std::vector<S> expand(std::span<const S> free, std::span<const double> base) const {
    std::vector<S> w(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const int k = free_index_[i];
      w[i] = k < 0 ? S(base[i]) : free[static_cast<std::size_t>(k)];
    }
    return w;
  }

  /// First working value of each group.
  std::vector<double> collapse(std::span<const double> w) const;

  /// Same map with every parameter of free variable k fixed.
  ParameterMap fixing(std::size_t k) const;

 private:
  void index();

  std::vector<std::optional<int>> entries_;
  std::vector<int> free_index_;
  std::size_t num_free_ = 0;
};

struct SdRow {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Delta-method standard errors of lambda, Gamma (column-wise), delta and,
/// in estimated-initial mode, the initial distribution.
struct SdReport {
  std::vector<SdRow> rows;
  ad::Matrix covariance;          // of the reported quantities
  std::vector<double> working_se;  // sqrt(diag(H^-1)) over free variables
  ad::Matrix hessian;             // of the nll at the optimum, free variables

  const SdRow* find(std::string_view name) const;
};

/// Immutable objective over the free-parameter vector (data + m + working
/// start values + map).
class Objective {
 public:
  Objective(ObservationSeq x, int m, WorkingParams w0, std::optional<ParameterMap> map = std::nullopt);

  int m() const { return m_; }
  InitialDistMode mode() const { return mode_; }
  const ObservationSeq& data() const { return x_; }
  const ParameterMap& map() const { return map_; }
  std::span<const double> base() const { return base_; }
  std::size_t num_free() const { return map_.num_free(); }

  /// Starting point of the free vector.
  std::vector<double> initial_free() const { return map_.collapse(base_); }

  template <class S>
  S eval(const std::vector<S>& free) const {
    const auto w = map_.expand<S>(std::span<const S>(free), base_);
    return nll_generic<S>(m_, mode_, std::span<const S>(w), x_);
  }

  /// Reported quantities (lambda, Gamma column-wise, delta[, initial]).
  template <class S>
  std::vector<S> report(const std::vector<S>& free) const {
    const auto w = map_.expand<S>(std::span<const S>(free), base_);
    const auto nat = natural_from_flat<S>(m_, mode_, std::span<const S>(w));
    std::vector<S> out(nat.lambda);
    const auto um = static_cast<std::size_t>(m_);
    for (std::size_t j = 0; j < um; ++j) {
      for (std::size_t i = 0; i < um; ++i) out.push_back(nat.gamma[i * um + j]);
    }
    out.insert(out.end(), nat.delta.begin(), nat.delta.end());
    if (mode_ == InitialDistMode::Estimated) out.insert(out.end(), nat.initial.begin(), nat.initial.end());
    return out;
  }
  std::vector<std::string> report_names() const;

  double fn(std::span<const double> free) const;
  std::vector<double> gr(std::span<const double> free) const;
  ad::Matrix he(std::span<const double> free) const;
  ad::SecondOrder fgh(std::span<const double> free) const;

  /// fn returns +inf instead of throwing where the model is undefined.
  ObjectiveFunctions functions() const;

  WorkingParams working(std::span<const double> free) const;
  NaturalParams natural(std::span<const double> free) const;

  /// Objective with free variable k pinned at `value`; the remaining free
  /// variables start from `at` (a full free vector).
  Objective fixing(std::size_t k, double value, std::span<const double> at) const;

  /// Same data and map, new starting point (a full free vector).
  Objective restarted(std::span<const double> at) const;

 private:
  ObservationSeq x_;
  int m_;
  InitialDistMode mode_;
  std::vector<double> base_;
  ParameterMap map_;
};

struct FitResult {
  OptimReport report;
  std::vector<double> free_opt;
  WorkingParams working;
  NaturalParams natural;
  double nll = 0.0;
  std::size_t num_obs = 0;
  bool canonicalized = false;
};

/// Minimises the objective. For unmapped models states are relabelled by
/// ascending lambda afterwards; free_opt is the relabelled optimum.
FitResult fit(const Objective& obj, const OptimizerConfig& cfg);

/// Throws NotConverged unless fit.report.converged.
void require_converged(const FitResult& fit);

SdReport sd_report(const Objective& obj, const FitResult& fit);

/// True when the fit converged and the nll Hessian at the optimum is
/// positive definite with smallest/largest eigenvalue ratio above `rel_tol`.
/// Degenerate optima (two states with equal rates, a rate at zero) fail.
bool proper_optimum(const Objective& obj, const FitResult& fit, double rel_tol = 1e-8);
bool proper_optimum(const Objective& obj, std::span<const double> free_opt, double rel_tol = 1e-8);

/// Starting values: lambda at equally spaced points from the 10% to the 90%
/// data quantile, diagonal 0.8 and off-diagonals 0.2/(m-1).
NaturalParams default_initial(const ObservationSeq& x, int m);

/// Free-parameter count used by AIC/BIC.
int num_parameters(int m, InitialDistMode mode);

struct SelectionRow {
  int m = 0;
  double nll = 0.0;
  int k = 0;
  double aic = 0.0;
  double bic = 0.0;
  bool ok = false;
  std::string error;
};

std::vector<SelectionRow> model_select(const ObservationSeq& x, std::span<const int> m_range,
                                       const OptimizerConfig& cfg,
                                       InitialDistMode mode = InitialDistMode::Stationary);

}  // namespace hmmfit
