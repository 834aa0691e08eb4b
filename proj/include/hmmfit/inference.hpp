#pragma once

#include <span>
#include <vector>

#include "hmmfit/autodiff.hpp"
#include "hmmfit/hmm_core.hpp"

namespace hmmfit {

/// P(C_t = i | all observations) as a T x m matrix; rows sum to one.
ad::Matrix smoothing(const NaturalParams& p, const ObservationSeq& x);

/// Row-wise argmax of a smoothing matrix; ties go to the lower state.
std::vector<int> local_decode(const ad::Matrix& smooth);

/// Jointly most probable state path (log-space dynamic programming); ties go
/// to the lower state.
std::vector<int> viterbi(const NaturalParams& p, const ObservationSeq& x);

/// log P(C = path, X = x).
double path_log_probability(const NaturalParams& p, const ObservationSeq& x, std::span<const int> path);

/// Default support cap for forecasts: ceil(max lambda + 10 sqrt(max lambda)).
int default_forecast_cap(const NaturalParams& p);

/// P(X_{T+h} = k | observations) for k = 0..x_max (x_max < 0 picks the
/// default cap).
std::vector<double> forecast(const NaturalParams& p, const ObservationSeq& x, int h, int x_max = -1);

struct StateInference {
  ad::Matrix smoothing;
  std::vector<int> local_path;
  std::vector<int> viterbi_path;
};

StateInference infer_states(const NaturalParams& p, const ObservationSeq& x);

}  // namespace hmmfit
