#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hmmfit/model.hpp"

namespace hmmfit {

enum class CiMethod { Wald, Profile, Bootstrap };
enum class CiStatus { OK, FailedLower, FailedUpper, Failed, Unavailable };

std::string_view to_string(CiMethod m);
std::string_view to_string(CiStatus s);
std::optional<CiMethod> parse_ci_method(std::string_view name);

struct IntervalRow {
  std::string name;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  CiMethod method = CiMethod::Wald;
  double level = 0.95;
  CiStatus status = CiStatus::OK;

  bool contains(double v) const { return status == CiStatus::OK && lower <= v && v <= upper; }
};

struct IntervalTable {
  std::vector<IntervalRow> rows;

  const IntervalRow* find(std::string_view name, CiMethod method) const;
  void append(const IntervalTable& other);
};

/// estimate -/+ z * SE. With `clip`, bounds of probabilities (gamma, delta,
/// init rows) are clamped to [0, 1]. A level of 1 gives unbounded intervals.
IntervalTable wald_ci(const SdReport& report, double level, bool clip = false);

struct ProfilePoint {
  double value = 0.0;  // working-parameter value
  double rp = 0.0;     // 2 * (profile nll - nll at the optimum)
};

struct ProfileOptions {
  double level = 0.95;
  int max_steps = 50;
  double target_dnll = 0.25;
  int refine_steps = 3;  // regula falsi steps inside the final bracket
  OptimizerConfig cfg{};
};

struct ProfileResult {
  std::size_t which = 0;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double critical = 0.0;
  CiStatus status = CiStatus::OK;
  std::vector<ProfilePoint> trace;  // sorted by value, includes the optimum
};

/// Profile interval of free variable `which` in working space. `se` seeds
/// the first step (0.5 * se); pass 0 to have it computed from the Hessian.
ProfileResult profile_ci(const Objective& obj, const FitResult& fit, std::size_t which,
                         const ProfileOptions& opt, double se = 0.0);

/// Natural-space profile intervals for lambda and Gamma of an unmapped
/// model. Delta rows are reported as Unavailable. For m > 2 the TPM bounds
/// are built row-wise from all lower (upper) tau bounds and a caveat is
/// appended to `warnings`.
IntervalTable profile_table(const Objective& obj, const FitResult& fit, const ProfileOptions& opt,
                            std::vector<std::string>* warnings = nullptr,
                            std::vector<ProfileResult>* details = nullptr);

struct BootstrapOptions {
  int B = 200;
  double level = 0.95;
  std::uint64_t seed = 1;
  int threads = 0;
  bool serial = false;
  int max_attempts = 50;
  OptimizerConfig cfg{};
};

struct BootstrapArchive {
  std::vector<std::string> names;
  std::vector<std::vector<double>> estimates;  // one row per accepted replicate
  int rejected_states = 0;
  int rejected_fit = 0;
  int failed = 0;  // replicates that exhausted max_attempts
};

struct BootstrapResult {
  IntervalTable table;
  BootstrapArchive archive;
};

/// Parametric percentile bootstrap. Replicates are simulated from the fitted
/// model with the data's missing pattern and refitted from the estimate;
/// replicates whose state path misses a state or whose refit does not reach
/// a proper optimum are redrawn.
BootstrapResult bootstrap_ci(const Objective& obj, const FitResult& fit, const BootstrapOptions& opt);

struct CoverageOptions {
  std::size_t T = 2000;
  int n_reps = 200;
  double level = 0.95;
  std::vector<CiMethod> methods{CiMethod::Wald};
  std::uint64_t seed = 1;
  int threads = 0;
  bool serial = false;
  int B = 200;
  int max_attempts = 50;
  OptimizerConfig cfg{};
};

struct CoverageRow {
  std::string name;
  double truth = 0.0;
  CiMethod method = CiMethod::Wald;
  int covered = 0;
  int evaluated = 0;

  double coverage_percent() const { return evaluated == 0 ? 0.0 : 100.0 * covered / evaluated; }
};

struct CoverageResult {
  std::vector<CoverageRow> rows;
  int reps_used = 0;
  int rejected_states = 0;
  int rejected_fit = 0;
  int rejected_profile = 0;
  int failed = 0;

  const CoverageRow* find(std::string_view name, CiMethod method) const;
};

/// Monte-Carlo coverage of the requested interval methods at the true
/// parameters. Fits start from the truth.
CoverageResult coverage_study(const NaturalParams& truth, const CoverageOptions& opt);

}  // namespace hmmfit
