#include "hmmfit/confint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "hmmfit/parallel.hpp"
#include "hmmfit/simulate.hpp"
#include "hmmfit/stats.hpp"

namespace hmmfit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_level(double level) {
  if (!(level > 0.0 && level <= 1.0)) {
    throw HmmError(ErrorCode::InvalidArgument, "confidence level must lie in (0, 1]");
  }
}

bool is_probability(std::string_view name) {
  return name.starts_with("gamma") || name.starts_with("delta") || name.starts_with("init");
}

}  // namespace

std::string_view to_string(CiMethod m) {
  switch (m) {
    case CiMethod::Wald: return "wald";
    case CiMethod::Profile: return "profile";
    case CiMethod::Bootstrap: return "bootstrap";
  }
  return "?";
}

std::string_view to_string(CiStatus s) {
  switch (s) {
    case CiStatus::OK: return "ok";
    case CiStatus::FailedLower: return "failed_lower";
    case CiStatus::FailedUpper: return "failed_upper";
    case CiStatus::Failed: return "failed";
    case CiStatus::Unavailable: return "unavailable";
  }
  return "?";
}

std::optional<CiMethod> parse_ci_method(std::string_view name) {
  if (name == "wald") return CiMethod::Wald;
  if (name == "profile") return CiMethod::Profile;
  if (name == "bootstrap") return CiMethod::Bootstrap;
  return std::nullopt;
}

const IntervalRow* IntervalTable::find(std::string_view name, CiMethod method) const {
  for (const auto& r : rows) {
    if (r.name == name && r.method == method) return &r;
  }
  return nullptr;
}

void IntervalTable::append(const IntervalTable& other) {
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
}

// ---- Wald -----------------------------------------------------------------------

IntervalTable wald_ci(const SdReport& report, double level, bool clip) {
  check_level(level);
  const double z = stats::normal_quantile(0.5 + level / 2.0);
  IntervalTable t;
  for (const auto& r : report.rows) {
    IntervalRow row;
    row.name = r.name;
    row.estimate = r.estimate;
    row.method = CiMethod::Wald;
    row.level = level;
    if (r.std_error == 0.0) {
      row.lower = row.upper = r.estimate;
    } else {
      row.lower = r.estimate - z * r.std_error;
      row.upper = r.estimate + z * r.std_error;
    }
    if (clip && is_probability(r.name)) {
      row.lower = std::clamp(row.lower, 0.0, 1.0);
      row.upper = std::clamp(row.upper, 0.0, 1.0);
    }
    t.rows.push_back(row);
  }
  return t;
}

// ---- profile --------------------------------------------------------------------

namespace {

double working_se(const Objective& obj, const FitResult& fitted, std::size_t which) {
  const auto H = obj.he(fitted.free_opt);
  const auto n = static_cast<Eigen::Index>(obj.num_free());
  Eigen::MatrixXd h(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      h(i, j) = H(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  if (llt.info() != Eigen::Success) return 0.0;
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  const double v = inv(static_cast<Eigen::Index>(which), static_cast<Eigen::Index>(which));
  return v > 0.0 && std::isfinite(v) ? std::sqrt(v) : 0.0;
}

std::optional<double> profile_value(const Objective& obj, const FitResult& fitted, std::size_t which,
                                    std::span<const double> at, double v, const ProfileOptions& opt) {
  try {
    const auto f = fit(obj.fixing(which, v, at), opt.cfg);
    if (f.report.converged && std::isfinite(f.nll)) return 2.0 * (f.nll - fitted.nll);
  } catch (const HmmError&) {
  }
  return std::nullopt;
}

// Regula falsi on the bracket [inside, outside] of the critical value, then
// a final linear interpolation between the bracketing points.
double refine_crossing(const Objective& obj, const FitResult& fitted, std::size_t which,
                       std::span<const double> at, ProfilePoint inside, ProfilePoint outside, double crit,
                       const ProfileOptions& opt, std::vector<ProfilePoint>& trace) {
  auto interpolate = [&] {
    if (!(outside.rp > inside.rp)) return outside.value;
    return inside.value + (crit - inside.rp) / (outside.rp - inside.rp) * (outside.value - inside.value);
  };
  for (int k = 0; k < opt.refine_steps; ++k) {
    const double v = interpolate();
    const auto r = profile_value(obj, fitted, which, at, v, opt);
    if (!r) break;
    trace.push_back({v, *r});
    if (std::abs(*r - crit) < 1e-6) return v;
    if (*r < crit) {
      inside = {v, *r};
    } else {
      outside = {v, *r};
    }
  }
  return interpolate();
}

struct WalkOutcome {
  std::optional<double> bound;
  std::vector<ProfilePoint> points;
};

WalkOutcome walk(const Objective& obj, const FitResult& fitted, std::size_t which, double dir, double se,
                 double crit, const ProfileOptions& opt) {
  WalkOutcome out;
  const double est = fitted.free_opt[which];
  double prev_v = est;
  double prev_r = 0.0;
  double h = std::max(0.5 * se, 1e-4);
  std::vector<double> at = fitted.free_opt;
  for (int step = 0; step < opt.max_steps; ++step) {
    const double v = prev_v + dir * h;
    std::optional<FitResult> sub_fit;
    try {
      const auto sub = obj.fixing(which, v, at);
      auto f = fit(sub, opt.cfg);
      if (f.report.converged && std::isfinite(f.nll)) sub_fit = std::move(f);
    } catch (const HmmError&) {
    }
    if (!sub_fit) {
      h *= 0.5;
      continue;
    }
    const double r = 2.0 * (sub_fit->nll - fitted.nll);
    out.points.push_back({v, r});
    if (r >= crit) {
      out.bound = refine_crossing(obj, fitted, which, at, {prev_v, prev_r}, {v, r}, crit, opt, out.points);
      return out;
    }
    // Carry the nuisance optimum forward as the next warm start.
    for (std::size_t i = 0, j = 0; i < at.size(); ++i) {
      at[i] = i == which ? v : sub_fit->free_opt[j++];
    }
    const double dn = 0.5 * (r - prev_r);
    const double factor = dn > 1e-12 ? std::clamp(opt.target_dnll / dn, 0.5, 2.0) : 2.0;
    h *= factor;
    prev_v = v;
    prev_r = r;
  }
  return out;
}

}  // namespace

ProfileResult profile_ci(const Objective& obj, const FitResult& fitted, std::size_t which,
                         const ProfileOptions& opt, double se) {
  check_level(opt.level);
  if (which >= obj.num_free()) throw HmmError(ErrorCode::InvalidArgument, "profile index out of range");
  require_converged(fitted);
  ProfileResult res;
  res.which = which;
  res.estimate = fitted.free_opt[which];
  res.critical = stats::chisq_quantile(opt.level, 1.0);
  if (opt.level >= 1.0) {
    res.lower = -kInf;
    res.upper = kInf;
    res.trace = {{res.estimate, 0.0}};
    return res;
  }
  if (!(se > 0.0)) se = working_se(obj, fitted, which);
  if (!(se > 0.0)) se = 0.1;

  auto down = walk(obj, fitted, which, -1.0, se, res.critical, opt);
  auto up = walk(obj, fitted, which, +1.0, se, res.critical, opt);
  res.lower = down.bound.value_or(kNaN);
  res.upper = up.bound.value_or(kNaN);
  if (!down.bound && !up.bound) {
    res.status = CiStatus::Failed;
  } else if (!down.bound) {
    res.status = CiStatus::FailedLower;
  } else if (!up.bound) {
    res.status = CiStatus::FailedUpper;
  }
  res.trace = std::move(down.points);
  res.trace.push_back({res.estimate, 0.0});
  res.trace.insert(res.trace.end(), up.points.begin(), up.points.end());
  std::sort(res.trace.begin(), res.trace.end(),
            [](const ProfilePoint& a, const ProfilePoint& b) { return a.value < b.value; });
  return res;
}

namespace {

IntervalRow make_row(std::string name, double est, double lo, double hi, double level, CiMethod method) {
  IntervalRow row;
  row.name = std::move(name);
  row.estimate = est;
  row.lower = lo;
  row.upper = hi;
  row.method = method;
  row.level = level;
  const bool bl = std::isnan(lo);
  const bool bu = std::isnan(hi);
  row.status = bl && bu ? CiStatus::Failed : bl ? CiStatus::FailedLower : bu ? CiStatus::FailedUpper : CiStatus::OK;
  return row;
}

}  // namespace

IntervalTable profile_table(const Objective& obj, const FitResult& fitted, const ProfileOptions& opt,
                            std::vector<std::string>* warnings, std::vector<ProfileResult>* details) {
  if (!obj.map().is_identity()) {
    throw HmmError(ErrorCode::InvalidArgument, "profile table needs an unmapped model");
  }
  require_converged(fitted);
  const int m = obj.m();
  const auto um = static_cast<std::size_t>(m);
  const auto nt = static_cast<std::size_t>(num_tau(m));
  const auto& nat = fitted.natural;

  if (opt.level >= 1.0) {
    IntervalTable t;
    const auto names = obj.report_names();
    const auto est = obj.report(fitted.free_opt);
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto row = make_row(names[i], est[i], -kInf, kInf, opt.level, CiMethod::Profile);
      if (names[i].starts_with("delta") || names[i].starts_with("init")) {
        row.lower = row.upper = kNaN;
        row.status = CiStatus::Unavailable;
      }
      t.rows.push_back(row);
    }
    return t;
  }

  std::vector<double> se(obj.num_free(), 0.0);
  try {
    se = sd_report(obj, fitted).working_se;
  } catch (const HmmError&) {
  }

  std::vector<ProfileResult> results;
  for (std::size_t k = 0; k < um + nt; ++k) results.push_back(profile_ci(obj, fitted, k, opt, se[k]));

  IntervalTable t;
  for (std::size_t i = 0; i < um; ++i) {
    const auto& r = results[i];
    t.rows.push_back(make_row("lambda" + std::to_string(i + 1), nat.lambda[i], std::exp(r.lower),
                              std::exp(r.upper), opt.level, CiMethod::Profile));
  }

  // Row-wise TPMs from all lower / all upper tau bounds.
  auto bounded_tpm = [&](bool upper_side) {
    std::vector<double> g(um * um, kNaN);
    for (std::size_t i = 0; i < um; ++i) {
      std::vector<double> tau(fitted.working.tau);
      bool complete = true;
      for (std::size_t j = 0; j < um; ++j) {
        if (j == i) continue;
        const auto idx = static_cast<std::size_t>(tau_index(m, static_cast<int>(i), static_cast<int>(j)));
        const double b = upper_side ? results[um + idx].upper : results[um + idx].lower;
        if (std::isnan(b)) complete = false;
        tau[idx] = b;
      }
      if (!complete) continue;
      const auto full = tpm_from_tau<double>(m, tau);
      for (std::size_t j = 0; j < um; ++j) g[i * um + j] = full[i * um + j];
    }
    return g;
  };
  const auto gl = bounded_tpm(false);
  const auto gu = bounded_tpm(true);
  for (std::size_t j = 0; j < um; ++j) {
    for (std::size_t i = 0; i < um; ++i) {
      const std::size_t c = i * um + j;
      double lo = i == j ? gu[c] : gl[c];
      double hi = i == j ? gl[c] : gu[c];
      if (m == 1) lo = hi = 1.0;
      if (!std::isnan(lo) && !std::isnan(hi) && lo > hi) std::swap(lo, hi);
      t.rows.push_back(make_row("gamma" + std::to_string(i + 1) + std::to_string(j + 1), nat.gamma[c], lo, hi,
                                opt.level, CiMethod::Profile));
    }
  }
  for (std::size_t i = 0; i < um; ++i) {
    auto row = make_row("delta" + std::to_string(i + 1), nat.delta[i], kNaN, kNaN, opt.level, CiMethod::Profile);
    row.status = CiStatus::Unavailable;
    t.rows.push_back(row);
  }
  if (obj.mode() == InitialDistMode::Estimated) {
    for (std::size_t i = 0; i < um; ++i) {
      auto row = make_row("init" + std::to_string(i + 1), nat.initial[i], kNaN, kNaN, opt.level, CiMethod::Profile);
      row.status = CiStatus::Unavailable;
      t.rows.push_back(row);
    }
  }
  if (m > 2 && warnings) {
    warnings->push_back(
        "profile intervals for transition probabilities with more than two states combine the "
        "bounds of all working parameters of a row; treat them with care");
  }
  if (details) *details = std::move(results);
  return t;
}

// ---- bootstrap ------------------------------------------------------------------

namespace {

struct ReplicateDraw {
  bool ok = false;
  int rejected_states = 0;
  int rejected_fit = 0;
  std::vector<double> estimates;
};

IntervalTable percentile_table(const std::vector<std::string>& names, const std::vector<double>& estimates,
                               const std::vector<std::vector<double>>& draws, double level) {
  IntervalTable t;
  const double alpha = 1.0 - level;
  for (std::size_t k = 0; k < names.size(); ++k) {
    IntervalRow row;
    row.name = names[k];
    row.estimate = estimates[k];
    row.method = CiMethod::Bootstrap;
    row.level = level;
    if (level >= 1.0) {
      row.lower = -kInf;
      row.upper = kInf;
    } else if (draws.empty()) {
      row.lower = row.upper = kNaN;
      row.status = CiStatus::Failed;
    } else {
      std::vector<double> col(draws.size());
      for (std::size_t b = 0; b < draws.size(); ++b) col[b] = draws[b][k];
      std::sort(col.begin(), col.end());
      row.lower = stats::quantile_sorted(col, alpha / 2.0);
      row.upper = stats::quantile_sorted(col, 1.0 - alpha / 2.0);
    }
    t.rows.push_back(row);
  }
  return t;
}

}  // namespace

BootstrapResult bootstrap_ci(const Objective& obj, const FitResult& fitted, const BootstrapOptions& opt) {
  check_level(opt.level);
  if (opt.B < 2) throw HmmError(ErrorCode::InvalidArgument, "bootstrap needs B >= 2");
  require_converged(fitted);
  const int m = obj.m();

  std::vector<ReplicateDraw> draws(static_cast<std::size_t>(opt.B));
  for_replicates(draws.size(), resolve_threads(opt.threads), opt.serial, [&](std::size_t b) {
    auto& out = draws[b];
    for (int a = 0; a < opt.max_attempts; ++a) {
      auto rng = make_rng(opt.seed, kDomainBootstrap, b, static_cast<std::uint64_t>(a));
      const auto sim = simulate_like(fitted.natural, obj.data(), rng);
      if (!visits_all_states(sim.states, m)) {
        ++out.rejected_states;
        continue;
      }
      try {
        const Objective rep(sim.x, m, fitted.working, obj.map());
        const auto f = fit(rep, opt.cfg);
        if (!proper_optimum(rep, f)) {
          ++out.rejected_fit;
          continue;
        }
        out.estimates = rep.report(f.free_opt);
        out.ok = true;
        return;
      } catch (const HmmError&) {
        ++out.rejected_fit;
      }
    }
  });

  BootstrapResult res;
  res.archive.names = obj.report_names();
  for (auto& d : draws) {
    res.archive.rejected_states += d.rejected_states;
    res.archive.rejected_fit += d.rejected_fit;
    if (d.ok) {
      res.archive.estimates.push_back(std::move(d.estimates));
    } else {
      ++res.archive.failed;
    }
  }
  const auto est = obj.report(fitted.free_opt);
  res.table = percentile_table(res.archive.names, est, res.archive.estimates, opt.level);
  return res;
}

// ---- coverage -------------------------------------------------------------------

const CoverageRow* CoverageResult::find(std::string_view name, CiMethod method) const {
  for (const auto& r : rows) {
    if (r.name == name && r.method == method) return &r;
  }
  return nullptr;
}

namespace {

enum class RepOutcome { Ok, RejectedStates, RejectedFit, RejectedProfile };

struct CoverageReplicate {
  bool ok = false;
  int rejected_states = 0;
  int rejected_fit = 0;
  int rejected_profile = 0;
  std::vector<int> hits;  // per (method, name): 1 covered, 0 missed, -1 not evaluated
};

}  // namespace

CoverageResult coverage_study(const NaturalParams& truth_in, const CoverageOptions& opt) {
  check_level(opt.level);
  if (opt.n_reps < 1) throw HmmError(ErrorCode::InvalidArgument, "coverage needs n_reps >= 1");
  if (opt.methods.empty()) throw HmmError(ErrorCode::InvalidArgument, "no interval method selected");
  const auto truth = canonicalize(truth_in);
  const int m = truth.m;
  const auto w_true = natural_to_working(truth);

  // Names and true values in report order.
  const Objective probe(ObservationSeq(std::vector<int>{0}), m, w_true);
  const auto names = probe.report_names();
  const auto truth_vals = probe.report(probe.initial_free());
  const std::size_t k = names.size();
  const std::size_t nm = opt.methods.size();

  std::vector<CoverageReplicate> reps(static_cast<std::size_t>(opt.n_reps));
  for_replicates(reps.size(), resolve_threads(opt.threads), opt.serial, [&](std::size_t r) {
    auto& out = reps[r];
    for (int a = 0; a < opt.max_attempts; ++a) {
      auto rng = make_rng(opt.seed, kDomainCoverage, r, static_cast<std::uint64_t>(a));
      const auto sim = simulate_hmm(truth, opt.T, rng);
      if (!visits_all_states(sim.states, m)) {
        ++out.rejected_states;
        continue;
      }
      const Objective obj(sim.x, m, w_true);
      FitResult f;
      try {
        f = fit(obj, opt.cfg);
      } catch (const HmmError&) {
        ++out.rejected_fit;
        continue;
      }
      if (!proper_optimum(obj, f)) {
        ++out.rejected_fit;
        continue;
      }
      std::vector<IntervalTable> tables(nm);
      RepOutcome outcome = RepOutcome::Ok;
      for (std::size_t mi = 0; mi < nm && outcome == RepOutcome::Ok; ++mi) {
        try {
          switch (opt.methods[mi]) {
            case CiMethod::Wald:
              tables[mi] = wald_ci(sd_report(obj, f), opt.level);
              break;
            case CiMethod::Profile: {
              ProfileOptions po;
              po.level = opt.level;
              po.cfg = opt.cfg;
              tables[mi] = profile_table(obj, f, po);
              for (const auto& row : tables[mi].rows) {
                if (row.status != CiStatus::OK && row.status != CiStatus::Unavailable) {
                  outcome = RepOutcome::RejectedProfile;
                }
              }
              break;
            }
            case CiMethod::Bootstrap: {
              BootstrapOptions bo;
              bo.B = opt.B;
              bo.level = opt.level;
              bo.seed = splitmix64(opt.seed ^ splitmix64(r * 1000003ULL + static_cast<std::uint64_t>(a)));
              bo.serial = true;
              bo.max_attempts = opt.max_attempts;
              bo.cfg = opt.cfg;
              tables[mi] = bootstrap_ci(obj, f, bo).table;
              break;
            }
          }
        } catch (const HmmError&) {
          outcome = RepOutcome::RejectedFit;
        }
      }
      if (outcome == RepOutcome::RejectedFit) {
        ++out.rejected_fit;
        continue;
      }
      if (outcome == RepOutcome::RejectedProfile) {
        ++out.rejected_profile;
        continue;
      }
      out.hits.assign(nm * k, -1);
      for (std::size_t mi = 0; mi < nm; ++mi) {
        for (std::size_t i = 0; i < k; ++i) {
          const auto* row = tables[mi].find(names[i], opt.methods[mi]);
          if (!row || row->status == CiStatus::Unavailable) continue;
          out.hits[mi * k + i] = row->contains(truth_vals[i]) ? 1 : 0;
        }
      }
      out.ok = true;
      return;
    }
  });

  CoverageResult res;
  for (std::size_t mi = 0; mi < nm; ++mi) {
    for (std::size_t i = 0; i < k; ++i) {
      CoverageRow row;
      row.name = names[i];
      row.truth = truth_vals[i];
      row.method = opt.methods[mi];
      res.rows.push_back(row);
    }
  }
  for (const auto& rep : reps) {
    res.rejected_states += rep.rejected_states;
    res.rejected_fit += rep.rejected_fit;
    res.rejected_profile += rep.rejected_profile;
    if (!rep.ok) {
      ++res.failed;
      continue;
    }
    ++res.reps_used;
    for (std::size_t c = 0; c < rep.hits.size(); ++c) {
      if (rep.hits[c] < 0) continue;
      ++res.rows[c].evaluated;
      res.rows[c].covered += rep.hits[c];
    }
  }
  return res;
}

}  // namespace hmmfit
