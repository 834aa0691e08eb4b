#include "hmmfit/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Dense>

#include "hmmfit/stats.hpp"

namespace hmmfit {

// ---- ParameterMap -----------------------------------------------------------

ParameterMap::ParameterMap(std::vector<std::optional<int>> entries) : entries_(std::move(entries)) {
  index();
}

ParameterMap ParameterMap::identity(std::size_t n) {
  std::vector<std::optional<int>> e(n);
  for (std::size_t i = 0; i < n; ++i) e[i] = static_cast<int>(i);
  return ParameterMap(std::move(e));
}

void ParameterMap::index() {
  std::map<int, int> rank;
  for (const auto& e : entries_) {
    if (e) rank.emplace(*e, 0);
  }
  int next = 0;
  for (auto& [id, k] : rank) k = next++;
  num_free_ = rank.size();
  free_index_.assign(entries_.size(), -1);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i]) free_index_[i] = rank.at(*entries_[i]);
  }
}

bool ParameterMap::is_identity() const {
  if (num_free_ != entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (free_index_[i] != static_cast<int>(i)) return false;
  }
  return true;
}

std::vector<double> ParameterMap::collapse(std::span<const double> w) const {
  if (w.size() != entries_.size()) {
    throw HmmError(ErrorCode::MapShapeMismatch, "working vector length differs from map length");
  }
  std::vector<double> free(num_free_, 0.0);
  std::vector<bool> seen(num_free_, false);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const int k = free_index_[i];
    if (k < 0 || seen[static_cast<std::size_t>(k)]) continue;
    free[static_cast<std::size_t>(k)] = w[i];
    seen[static_cast<std::size_t>(k)] = true;
  }
  return free;
}

ParameterMap ParameterMap::fixing(std::size_t k) const {
  if (k >= num_free_) throw HmmError(ErrorCode::InvalidArgument, "free index out of range");
  auto e = entries_;
  for (std::size_t i = 0; i < e.size(); ++i) {
    if (free_index_[i] == static_cast<int>(k)) e[i].reset();
  }
  return ParameterMap(std::move(e));
}

const SdRow* SdReport::find(std::string_view name) const {
  for (const auto& r : rows) {
    if (r.name == name) return &r;
  }
  return nullptr;
}

// ---- Objective ----------------------------------------------------------------

Objective::Objective(ObservationSeq x, int m, WorkingParams w0, std::optional<ParameterMap> map)
    : x_(std::move(x)), m_(m), mode_(w0.mode()) {
  if (m < 1) throw HmmError(ErrorCode::InvalidArgument, "need at least one state");
  if (w0.m != m || w0.eta.size() != static_cast<std::size_t>(m) ||
      w0.tau.size() != static_cast<std::size_t>(num_tau(m)) ||
      (!w0.nu.empty() && w0.nu.size() != static_cast<std::size_t>(m - 1))) {
    throw HmmError(ErrorCode::InvalidArgument, "starting values do not match the state count");
  }
  if (m == 1 && !w0.nu.empty()) mode_ = InitialDistMode::Stationary;
  base_ = w0.flatten();
  if (map) {
    if (map->size() != base_.size()) {
      throw HmmError(ErrorCode::MapShapeMismatch,
                     "map has " + std::to_string(map->size()) + " entries, working vector has " +
                         std::to_string(base_.size()));
    }
    map_ = std::move(*map);
  } else {
    map_ = ParameterMap::identity(base_.size());
  }
  if (map_.num_free() > static_cast<std::size_t>(ad::kMaxWidth)) {
    throw HmmError(ErrorCode::InvalidArgument, "too many free parameters for the derivative engine");
  }
}

std::vector<std::string> Objective::report_names() const {
  std::vector<std::string> names;
  for (int i = 1; i <= m_; ++i) names.push_back("lambda" + std::to_string(i));
  for (int j = 1; j <= m_; ++j) {
    for (int i = 1; i <= m_; ++i) names.push_back("gamma" + std::to_string(i) + std::to_string(j));
  }
  for (int i = 1; i <= m_; ++i) names.push_back("delta" + std::to_string(i));
  if (mode_ == InitialDistMode::Estimated) {
    for (int i = 1; i <= m_; ++i) names.push_back("init" + std::to_string(i));
  }
  return names;
}

double Objective::fn(std::span<const double> free) const {
  try {
    const double v = eval<double>(std::vector<double>(free.begin(), free.end()));
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  } catch (const HmmError&) {
    return std::numeric_limits<double>::infinity();
  }
}

std::vector<double> Objective::gr(std::span<const double> free) const {
  return ad::gradient([this](const auto& v) { return eval(v); }, free);
}

ad::Matrix Objective::he(std::span<const double> free) const {
  return ad::hessian([this](const auto& v) { return eval(v); }, free);
}

ad::SecondOrder Objective::fgh(std::span<const double> free) const {
  return ad::second_order([this](const auto& v) { return eval(v); }, free);
}

ObjectiveFunctions Objective::functions() const {
  ObjectiveFunctions f;
  f.fn = [this](std::span<const double> v) { return fn(v); };
  f.gr = [this](std::span<const double> v) { return gr(v); };
  f.he = [this](std::span<const double> v) { return he(v); };
  f.fgh = [this](std::span<const double> v) { return fgh(v); };
  return f;
}

WorkingParams Objective::working(std::span<const double> free) const {
  const auto w = map_.expand<double>(free, base_);
  return WorkingParams::from_flat(m_, mode_, w);
}

NaturalParams Objective::natural(std::span<const double> free) const {
  return working_to_natural(working(free));
}

Objective Objective::fixing(std::size_t k, double value, std::span<const double> at) const {
  if (k >= num_free() || at.size() != num_free()) {
    throw HmmError(ErrorCode::InvalidArgument, "free index or vector out of range");
  }
  std::vector<double> free(at.begin(), at.end());
  free[k] = value;
  const auto w = map_.expand<double>(std::span<const double>(free), base_);
  return Objective(x_, m_, WorkingParams::from_flat(m_, mode_, w), map_.fixing(k));
}

Objective Objective::restarted(std::span<const double> at) const {
  if (at.size() != num_free()) throw HmmError(ErrorCode::InvalidArgument, "free vector has wrong length");
  const auto w = map_.expand<double>(at, base_);
  return Objective(x_, m_, WorkingParams::from_flat(m_, mode_, w), map_);
}

// ---- fitting ------------------------------------------------------------------

FitResult fit(const Objective& obj, const OptimizerConfig& cfg) {
  FitResult out;
  out.report = minimize(obj.functions(), obj.initial_free(), cfg);
  out.free_opt = out.report.x_opt;
  out.nll = out.report.f_opt;
  out.num_obs = obj.data().size();
  out.working = obj.working(out.free_opt);
  out.natural = working_to_natural(out.working);

  if (obj.map().is_identity() && obj.m() > 1 &&
      !std::is_sorted(out.natural.lambda.begin(), out.natural.lambda.end())) {
    try {
      const auto canon = canonicalize(out.natural);
      auto w = natural_to_working(canon);
      out.free_opt = w.flatten();
      out.working = std::move(w);
      out.natural = canon;
      out.canonicalized = true;
    } catch (const HmmError&) {
      // A zero diagonal has no working representation; keep the raw labels.
    }
  }
  return out;
}

void require_converged(const FitResult& fit) {
  if (!fit.report.converged) {
    throw HmmError(ErrorCode::NotConverged,
                   "optimizer stopped without converging (" +
                       std::string(to_string(fit.report.termination)) + ")");
  }
}

SdReport sd_report(const Objective& obj, const FitResult& fit) {
  const std::size_t n = obj.num_free();
  const auto& x = fit.free_opt;
  SdReport out;
  out.hessian = obj.he(x);
  const auto report_fn = [&obj](const auto& v) { return obj.report(v); };
  const ad::Matrix J = ad::jacobian(report_fn, x);
  const auto values = obj.report(std::vector<double>(x.begin(), x.end()));
  const std::size_t k = values.size();

  Eigen::MatrixXd hinv = Eigen::MatrixXd::Zero(static_cast<long>(n), static_cast<long>(n));
  if (n > 0) {
    Eigen::MatrixXd H(static_cast<long>(n), static_cast<long>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) H(static_cast<long>(i), static_cast<long>(j)) = out.hessian(i, j);
    }
    if (!H.allFinite()) throw HmmError(ErrorCode::SingularHessian, "Hessian has non-finite entries");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const auto ev = es.eigenvalues();
    const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
    if (!(ev.minCoeff() > 1e-12 * scale)) {
      throw HmmError(ErrorCode::SingularHessian,
                     "Hessian at the optimum is not positive definite; standard errors unavailable");
    }
    hinv = es.eigenvectors() * ev.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
  }
  Eigen::MatrixXd Je(static_cast<long>(k), static_cast<long>(n));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < n; ++j) Je(static_cast<long>(i), static_cast<long>(j)) = J(i, j);
  }
  const Eigen::MatrixXd cov = Je * hinv * Je.transpose();

  out.covariance = ad::Matrix(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) out.covariance(i, j) = cov(static_cast<long>(i), static_cast<long>(j));
  }
  const auto names = obj.report_names();
  out.rows.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double var = cov(static_cast<long>(i), static_cast<long>(i));
    out.rows.push_back({names[i], values[i], std::sqrt(std::max(0.0, var))});
  }
  out.working_se.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.working_se[i] = std::sqrt(std::max(0.0, hinv(static_cast<long>(i), static_cast<long>(i))));
  }
  return out;
}

bool proper_optimum(const Objective& obj, std::span<const double> free_opt, double rel_tol) {
  const std::size_t n = obj.num_free();
  if (n == 0) return true;
  ad::Matrix H;
  try {
    H = obj.he(free_opt);
  } catch (const HmmError&) {
    return false;
  }
  Eigen::MatrixXd h(static_cast<long>(n), static_cast<long>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) h(static_cast<long>(i), static_cast<long>(j)) = H(i, j);
  }
  if (!h.allFinite()) return false;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h, Eigen::EigenvaluesOnly);
  const auto ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  return top > 0.0 && ev.minCoeff() > rel_tol * top;
}

bool proper_optimum(const Objective& obj, const FitResult& fit, double rel_tol) {
  return fit.report.converged && proper_optimum(obj, fit.free_opt, rel_tol);
}

NaturalParams default_initial(const ObservationSeq& x, int m) {
  if (m < 1) throw HmmError(ErrorCode::InvalidArgument, "need at least one state");
  std::vector<double> present;
  present.reserve(x.size());
  for (int v : x.values()) {
    if (v != ObservationSeq::kMissing) present.push_back(static_cast<double>(v));
  }
  if (present.empty()) throw HmmError(ErrorCode::EmptyData, "no observed counts");
  std::sort(present.begin(), present.end());

  const auto um = static_cast<std::size_t>(m);
  std::vector<double> lambda(um);
  if (m == 1) {
    lambda[0] = stats::mean(present);
  } else {
    const double lo = stats::quantile_sorted(present, 0.1);
    const double hi = stats::quantile_sorted(present, 0.9);
    for (std::size_t i = 0; i < um; ++i) {
      lambda[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(m - 1);
    }
  }
  constexpr double kFloor = 0.1;
  lambda[0] = std::max(lambda[0], kFloor);
  for (std::size_t i = 1; i < um; ++i) {
    if (lambda[i] < lambda[i - 1] * 1.05) lambda[i] = lambda[i - 1] + std::max(0.5, 0.1 * lambda[i - 1]);
  }

  std::vector<double> gamma(um * um, m == 1 ? 1.0 : 0.2 / static_cast<double>(m - 1));
  for (std::size_t i = 0; i < um; ++i) gamma[i * um + i] = m == 1 ? 1.0 : 0.8;
  return make_natural(std::move(lambda), std::move(gamma));
}

int num_parameters(int m, InitialDistMode mode) {
  return m * m + (mode == InitialDistMode::Estimated ? m - 1 : 0);
}

std::vector<SelectionRow> model_select(const ObservationSeq& x, std::span<const int> m_range,
                                       const OptimizerConfig& cfg, InitialDistMode mode) {
  if (m_range.empty()) throw HmmError(ErrorCode::InvalidArgument, "empty state-count range");
  const double log_t = std::log(static_cast<double>(x.num_present()));
  std::vector<SelectionRow> rows;
  for (int m : m_range) {
    SelectionRow row;
    row.m = m;
    row.k = num_parameters(m, mode);
    try {
      auto init = default_initial(x, m);
      if (mode == InitialDistMode::Estimated && m > 1) {
        init.initial.assign(static_cast<std::size_t>(m), 1.0 / m);
      }
      const Objective obj(x, m, natural_to_working(init));
      const auto f = fit(obj, cfg);
      require_converged(f);
      row.nll = f.nll;
      row.aic = 2.0 * row.k + 2.0 * row.nll;
      row.bic = row.k * log_t + 2.0 * row.nll;
      row.ok = true;
    } catch (const HmmError& e) {
      row.error = e.what();
      row.nll = row.aic = row.bic = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace hmmfit
