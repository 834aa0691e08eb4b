#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "hmmfit/autodiff.hpp"

namespace hmmfit {

/// Which derivatives the optimizer takes from AD. NoDeriv and Hess build the
/// gradient from central finite differences of the objective.
enum class OptimMode { NoDeriv, Grad, Hess, GradHess };

std::string_view to_string(OptimMode mode);
std::optional<OptimMode> parse_optim_mode(std::string_view name);

struct OptimizerConfig {
  OptimMode mode = OptimMode::GradHess;
  int max_iter = 500;
  double rel_tol = 1e-10;
  double grad_tol = 1e-8;
};

enum class Termination {
  GradientTolerance,
  RelativeTolerance,
  NoFreeParameters,
  MaxIterExceeded,
  LineSearchFailed,
  NonFiniteEncountered,
};

std::string_view to_string(Termination t);

struct OptimReport {
  std::vector<double> x_opt;
  double f_opt = 0.0;
  int iterations = 0;
  int fn_evals = 0;
  bool converged = false;
  Termination termination = Termination::MaxIterExceeded;
  double grad_norm = 0.0;  // infinity norm at x_opt
};

/// Callbacks over the free-parameter vector. `fn` must return +inf (not
/// throw) where the objective is undefined. `gr`/`he` are required by the
/// modes that use them; `fgh`, when set, replaces separate gr+he calls.
struct ObjectiveFunctions {
  std::function<double(std::span<const double>)> fn;
  std::function<std::vector<double>(std::span<const double>)> gr;
  std::function<ad::Matrix(std::span<const double>)> he;
  std::function<ad::SecondOrder(std::span<const double>)> fgh;
};

/// Central differences with step 1e-7 * max(1, |x_i|).
std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& fn,
                                std::span<const double> x);

/// BFGS (NoDeriv, Grad) or damped Newton (Hess, GradHess), both with
/// backtracking Armijo line search. The accepted objective never increases.
OptimReport minimize(const ObjectiveFunctions& obj, std::vector<double> x0,
                     const OptimizerConfig& cfg);

}  // namespace hmmfit
