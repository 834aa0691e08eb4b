#include "hmmfit/hmm_core.hpp"

#include <numeric>
#include <set>
#include <sstream>

namespace hmmfit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateTPM: return "DegenerateTPM";
    case ErrorCode::NonPositiveRate: return "NonPositiveRate";
    case ErrorCode::NumericOverflow: return "NumericOverflow";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NonFiniteLikelihood: return "NonFiniteLikelihood";
    case ErrorCode::MapShapeMismatch: return "MapShapeMismatch";
    case ErrorCode::SingularHessian: return "SingularHessian";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyData: return "EmptyData";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

namespace {

constexpr double kRowSumTolerance = 1e-8;

void check_distribution(std::span<const double> p, const char* what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw HmmError(ErrorCode::InvalidArgument, std::string(what) + " entries must lie in [0, 1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kRowSumTolerance) {
    std::ostringstream os;
    os << what << " sums to " << sum << ", expected 1";
    throw HmmError(ErrorCode::InvalidArgument, os.str());
  }
}

}  // namespace

NaturalParams make_natural(std::vector<double> lambda, std::vector<double> gamma,
                           std::vector<double> initial) {
  const int m = static_cast<int>(lambda.size());
  if (m < 1) throw HmmError(ErrorCode::InvalidArgument, "need at least one state");
  if (gamma.size() != lambda.size() * lambda.size()) {
    throw HmmError(ErrorCode::InvalidArgument, "gamma must be m x m");
  }
  for (double l : lambda) {
    if (!(l > 0.0) || !std::isfinite(l)) {
      throw HmmError(ErrorCode::NonPositiveRate, "all lambda must be positive and finite");
    }
  }
  for (int i = 0; i < m; ++i) {
    std::span<double> row(gamma.data() + i * m, static_cast<std::size_t>(m));
    check_distribution(row, "gamma row");
    const double sum = std::accumulate(row.begin(), row.end(), 0.0);
    for (double& v : row) v /= sum;
  }
  if (!initial.empty()) {
    if (initial.size() != lambda.size()) {
      throw HmmError(ErrorCode::InvalidArgument, "initial distribution must have m entries");
    }
    check_distribution(initial, "initial distribution");
  }
  NaturalParams p;
  p.m = m;
  p.lambda = std::move(lambda);
  p.gamma = std::move(gamma);
  p.delta = stationary_dist(p.gamma, m);
  p.initial = std::move(initial);
  return p;
}

std::vector<double> WorkingParams::flatten() const {
  std::vector<double> w;
  w.reserve(eta.size() + tau.size() + nu.size());
  w.insert(w.end(), eta.begin(), eta.end());
  w.insert(w.end(), tau.begin(), tau.end());
  w.insert(w.end(), nu.begin(), nu.end());
  return w;
}

WorkingParams WorkingParams::from_flat(int m, InitialDistMode mode, std::span<const double> w) {
  if (w.size() != static_cast<std::size_t>(num_working(m, mode))) {
    throw HmmError(ErrorCode::InvalidArgument, "working vector length does not match m");
  }
  const auto um = static_cast<std::size_t>(m);
  const auto nt = static_cast<std::size_t>(num_tau(m));
  WorkingParams out;
  out.m = m;
  out.eta.assign(w.begin(), w.begin() + static_cast<long>(um));
  out.tau.assign(w.begin() + static_cast<long>(um), w.begin() + static_cast<long>(um + nt));
  out.nu.assign(w.begin() + static_cast<long>(um + nt), w.end());
  return out;
}

ObservationSeq::ObservationSeq(std::vector<int> values) : values_(std::move(values)) {
  if (values_.empty()) throw HmmError(ErrorCode::EmptyData, "observation sequence is empty");
  std::set<int> distinct;
  for (int v : values_) {
    if (v < 0 && v != kMissing) {
      throw HmmError(ErrorCode::InvalidArgument, "counts must be non-negative");
    }
    if (v != kMissing) distinct.insert(v);
  }
  levels_.assign(distinct.begin(), distinct.end());
  level_of_.resize(values_.size());
  for (std::size_t t = 0; t < values_.size(); ++t) {
    if (values_[t] == kMissing) {
      level_of_[t] = -1;
    } else {
      level_of_[t] = static_cast<int>(
          std::lower_bound(levels_.begin(), levels_.end(), values_[t]) - levels_.begin());
    }
  }
}

std::size_t ObservationSeq::num_present() const {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [](int v) { return v != kMissing; }));
}

WorkingParams natural_to_working(const NaturalParams& p) {
  const int m = p.m;
  WorkingParams w;
  w.m = m;
  w.eta.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double l = p.lambda[static_cast<std::size_t>(i)];
    if (!(l > 0.0)) throw HmmError(ErrorCode::NonPositiveRate, "lambda must be positive");
    w.eta[static_cast<std::size_t>(i)] = std::log(l);
  }
  w.tau.resize(static_cast<std::size_t>(num_tau(m)));
  for (int i = 0; i < m; ++i) {
    const double gii = p.tpm(i, i);
    if (!(gii > 0.0)) {
      throw HmmError(ErrorCode::DegenerateTPM, "gamma_ii = 0: working transform undefined");
    }
    for (int j = 0; j < m; ++j) {
      if (j == i) continue;
      w.tau[static_cast<std::size_t>(tau_index(m, i, j))] = std::log(p.tpm(i, j) / gii);
    }
  }
  if (!p.initial.empty()) {
    const double ref = p.initial[0];
    if (!(ref > 0.0)) {
      throw HmmError(ErrorCode::DegenerateTPM, "initial distribution reference entry is zero");
    }
    w.nu.resize(static_cast<std::size_t>(m - 1));
    for (int i = 1; i < m; ++i) {
      w.nu[static_cast<std::size_t>(i - 1)] = std::log(p.initial[static_cast<std::size_t>(i)] / ref);
    }
  }
  return w;
}

NaturalParams working_to_natural(const WorkingParams& w) {
  const auto flat = w.flatten();
  const auto g = natural_from_flat<double>(w.m, w.mode(), std::span<const double>(flat));
  NaturalParams p;
  p.m = w.m;
  p.lambda = g.lambda;
  p.gamma = g.gamma;
  p.delta = g.delta;
  if (w.mode() == InitialDistMode::Estimated) p.initial = g.initial;
  return p;
}

std::vector<double> stationary_dist(std::span<const double> gamma, int m) {
  std::vector<double> g(gamma.begin(), gamma.end());
  return stationary_generic<double>(m, g);
}

NaturalParams canonicalize(const NaturalParams& p) {
  const int m = p.m;
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return p.lambda[static_cast<std::size_t>(a)] < p.lambda[static_cast<std::size_t>(b)];
  });
  NaturalParams q = p;
  for (int i = 0; i < m; ++i) {
    const auto oi = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
    q.lambda[static_cast<std::size_t>(i)] = p.lambda[oi];
    q.delta[static_cast<std::size_t>(i)] = p.delta[oi];
    if (!p.initial.empty()) q.initial[static_cast<std::size_t>(i)] = p.initial[oi];
    for (int j = 0; j < m; ++j) {
      q.gamma[static_cast<std::size_t>(i * m + j)] = p.tpm(order[static_cast<std::size_t>(i)],
                                                            order[static_cast<std::size_t>(j)]);
    }
  }
  return q;
}

}  // namespace hmmfit
