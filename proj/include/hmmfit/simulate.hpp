#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hmmfit/hmm_core.hpp"
#include "hmmfit/optimize.hpp"

namespace hmmfit {

using Rng = std::mt19937_64;

std::uint64_t splitmix64(std::uint64_t x);

/// Independent stream for (seed, domain, replicate, attempt). Streams for
/// different keys are decorrelated by splitmix64 mixing, so results depend
/// only on the key and never on which thread ran the replicate.
Rng make_rng(std::uint64_t seed, std::uint64_t domain, std::uint64_t replicate = 0,
             std::uint64_t attempt = 0);

/// Stream domains.
inline constexpr std::uint64_t kDomainSimulate = 1;
inline constexpr std::uint64_t kDomainBootstrap = 2;
inline constexpr std::uint64_t kDomainCoverage = 3;
inline constexpr std::uint64_t kDomainBench = 4;

struct Simulation {
  ObservationSeq x;
  std::vector<int> states;  // 0-based
};

/// C_1 from the initial distribution (stationary unless estimated), then the
/// chain and Poisson emissions.
Simulation simulate_hmm(const NaturalParams& p, std::size_t T, Rng& rng);
Simulation simulate_hmm(const NaturalParams& p, std::size_t T, std::uint64_t seed);

/// Like simulate_hmm, but positions missing in `pattern` stay missing.
Simulation simulate_like(const NaturalParams& p, const ObservationSeq& pattern, Rng& rng);

bool visits_all_states(std::span<const int> states, int m);

/// Named generating models: sim2, sim3, sim4.
NaturalParams preset(std::string_view name);
std::vector<std::string> preset_names();
bool is_preset(std::string_view name);

// ---- benchmark harness ------------------------------------------------------

struct BenchOptions {
  std::vector<OptimMode> modes{OptimMode::NoDeriv, OptimMode::Grad, OptimMode::Hess,
                               OptimMode::GradHess};
  int n_reps = 200;
  std::uint64_t seed = 1;
  int threads = 1;
  int max_attempts = 50;
  double level = 0.95;
  int max_iter = 500;
};

struct BenchModeRow {
  OptimMode mode = OptimMode::NoDeriv;
  double mean_time_ms = 0.0;
  double time_lower_ms = 0.0;  // normal-theory interval for the mean time
  double time_upper_ms = 0.0;
  double mean_iterations = 0.0;
  double iter_lower = 0.0;  // percentile interval over replicates
  double iter_upper = 0.0;
  double ratio = 1.0;  // mean over replicates of t(NoDeriv) / t(mode)
  double ratio_lower = 1.0;
  double ratio_upper = 1.0;
  double mean_nll = 0.0;
};

struct BenchResult {
  std::vector<BenchModeRow> rows;
  int reps_used = 0;
  int rejected_states = 0;
  int rejected_fit = 0;
  int failed_reps = 0;
  std::vector<std::vector<double>> times_ms;      // [mode][replicate]
  std::vector<std::vector<double>> iterations;   // [mode][replicate]
};

/// Fits x (GradHess, default starting values), then times every mode on
/// n_reps parametric resamples of the fitted model, each fit starting from
/// the resample's default initial values. NoDeriv always runs as the ratio
/// baseline even when not listed.
BenchResult bench(const ObservationSeq& x, int m, const BenchOptions& opt);

}  // namespace hmmfit
