#include "hmmfit/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "hmmfit/error.hpp"

namespace hmmfit {

std::string_view to_string(OptimMode mode) {
  switch (mode) {
    case OptimMode::NoDeriv: return "none";
    case OptimMode::Grad: return "G";
    case OptimMode::Hess: return "H";
    case OptimMode::GradHess: return "GH";
  }
  return "?";
}

std::optional<OptimMode> parse_optim_mode(std::string_view name) {
  if (name == "none" || name == "noderiv" || name == "NoDeriv" || name == "0") return OptimMode::NoDeriv;
  if (name == "G" || name == "grad" || name == "Grad") return OptimMode::Grad;
  if (name == "H" || name == "hess" || name == "Hess") return OptimMode::Hess;
  if (name == "GH" || name == "gradhess" || name == "GradHess") return OptimMode::GradHess;
  return std::nullopt;
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::GradientTolerance: return "gradient_tolerance";
    case Termination::RelativeTolerance: return "relative_tolerance";
    case Termination::NoFreeParameters: return "no_free_parameters";
    case Termination::MaxIterExceeded: return "max_iter_exceeded";
    case Termination::LineSearchFailed: return "line_search_failed";
    case Termination::NonFiniteEncountered: return "non_finite_encountered";
  }
  return "?";
}

std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& fn,
                                std::span<const double> x) {
  std::vector<double> g(x.size());
  std::vector<double> xp(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = 1e-7 * std::max(1.0, std::abs(x[i]));
    xp[i] = x[i] + h;
    const double fp = fn(xp);
    xp[i] = x[i] - h;
    const double fm = fn(xp);
    xp[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

namespace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

constexpr double kArmijo = 1e-4;
constexpr int kMaxHalvings = 60;
// Largest move of any working coordinate in one iteration.
constexpr double kMaxStep = 1.0;

Vec to_vec(std::span<const double> v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

std::span<const double> as_span(const Vec& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

struct Evaluator {
  const ObjectiveFunctions& obj;
  OptimMode mode;
  int fn_evals = 0;

  double f(const Vec& x) {
    ++fn_evals;
    const double v = obj.fn(as_span(x));
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  }

  Vec grad(const Vec& x) {
    if (mode == OptimMode::Grad || mode == OptimMode::GradHess) return to_vec(obj.gr(as_span(x)));
    fn_evals += 2 * static_cast<int>(x.size());
    return to_vec(fd_gradient(obj.fn, as_span(x)));
  }

  // Gradient and Hessian for the Newton modes.
  std::pair<Vec, Mat> grad_hess(const Vec& x) {
    const auto n = x.size();
    if (mode == OptimMode::GradHess && obj.fgh) {
      auto so = obj.fgh(as_span(x));
      Mat h = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
          so.hessian.data.data(), n, n);
      return {to_vec(so.gradient), h};
    }
    Vec g = grad(x);
    const auto hm = obj.he(as_span(x));
    Mat h = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        hm.data.data(), n, n);
    return {g, h};
  }
};

struct LineSearchResult {
  bool ok = false;
  double step = 0.0;
  double f = 0.0;
  Vec x;
};

void cap_step(Vec& p) {
  const double len = p.lpNorm<Eigen::Infinity>();
  if (len > kMaxStep) p *= kMaxStep / len;
}

LineSearchResult backtrack(Evaluator& ev, const Vec& x, double f0, const Vec& g, Vec p) {
  cap_step(p);
  const double slope = g.dot(p);
  double alpha = 1.0;
  for (int k = 0; k < kMaxHalvings; ++k, alpha *= 0.5) {
    Vec trial = x + alpha * p;
    const double ft = ev.f(trial);
    if (std::isfinite(ft) && ft <= f0 + kArmijo * alpha * slope) return {true, alpha, ft, trial};
  }
  return {};
}

bool relative_change_small(double f_old, double f_new, double rel_tol) {
  return std::abs(f_old - f_new) <= rel_tol * (std::abs(f_old) + rel_tol);
}

// Gradient size at which finite-difference noise (or rounding of f) makes
// further decrease unobservable.
double stall_threshold(double f, OptimMode mode) {
  const bool fd = mode == OptimMode::NoDeriv || mode == OptimMode::Hess;
  return (fd ? 1e-6 : 1e-7) * std::max(1.0, std::abs(f));
}

OptimReport finish(OptimReport rep, const Vec& x, double f, double gnorm, Termination why,
                   int fn_evals) {
  rep.x_opt.assign(x.data(), x.data() + x.size());
  rep.f_opt = f;
  rep.grad_norm = gnorm;
  rep.termination = why;
  rep.converged = why == Termination::GradientTolerance || why == Termination::RelativeTolerance ||
                  why == Termination::NoFreeParameters;
  rep.fn_evals = fn_evals;
  return rep;
}

OptimReport run_newton(Evaluator& ev, Vec x, double f, const OptimizerConfig& cfg) {
  OptimReport rep;
  for (;;) {
    auto [g, h] = ev.grad_hess(x);
    if (!g.allFinite() || !h.allFinite()) {
      return finish(rep, x, f, std::numeric_limits<double>::infinity(),
                    Termination::NonFiniteEncountered, ev.fn_evals);
    }
    const double gnorm = g.lpNorm<Eigen::Infinity>();
    if (gnorm <= cfg.grad_tol) return finish(rep, x, f, gnorm, Termination::GradientTolerance, ev.fn_evals);
    if (rep.iterations >= cfg.max_iter) {
      return finish(rep, x, f, gnorm, Termination::MaxIterExceeded, ev.fn_evals);
    }

    // Damped Newton: add rho*I until Cholesky succeeds.
    Vec p;
    double rho = 0.0;
    for (;;) {
      Mat damped = h;
      damped.diagonal().array() += rho;
      Eigen::LLT<Mat> llt(damped);
      if (llt.info() == Eigen::Success) {
        p = llt.solve(-g);
        if (p.allFinite() && g.dot(p) < 0.0) break;
      }
      rho = rho == 0.0 ? 1e-8 : 2.0 * rho;
      if (rho > 1e16) {
        p = -g;
        break;
      }
    }

    auto ls = backtrack(ev, x, f, g, p);
    if (!ls.ok) {
      const auto why = gnorm <= stall_threshold(f, ev.mode) ? Termination::RelativeTolerance
                                                            : Termination::LineSearchFailed;
      return finish(rep, x, f, gnorm, why, ev.fn_evals);
    }
    ++rep.iterations;
    const double f_old = f;
    x = ls.x;
    f = ls.f;
    if (relative_change_small(f_old, f, cfg.rel_tol) && gnorm <= stall_threshold(f, ev.mode)) {
      Vec g_end = ev.grad(x);
      return finish(rep, x, f, g_end.lpNorm<Eigen::Infinity>(), Termination::RelativeTolerance,
                    ev.fn_evals);
    }
  }
}

OptimReport run_bfgs(Evaluator& ev, Vec x, double f, const OptimizerConfig& cfg) {
  OptimReport rep;
  const auto n = x.size();
  Vec g = ev.grad(x);
  if (!g.allFinite()) {
    return finish(rep, x, f, std::numeric_limits<double>::infinity(),
                  Termination::NonFiniteEncountered, ev.fn_evals);
  }
  auto initial_scale = [&](const Vec& grad) {
    const double gi = grad.lpNorm<Eigen::Infinity>();
    return gi > 1.0 ? 1.0 / gi : 1.0;
  };
  Mat hinv = Mat::Identity(n, n) * initial_scale(g);
  bool scaled = false;
  for (;;) {
    const double gnorm = g.lpNorm<Eigen::Infinity>();
    if (gnorm <= cfg.grad_tol) return finish(rep, x, f, gnorm, Termination::GradientTolerance, ev.fn_evals);
    if (rep.iterations >= cfg.max_iter) {
      return finish(rep, x, f, gnorm, Termination::MaxIterExceeded, ev.fn_evals);
    }
    Vec p = -hinv * g;
    if (!(g.dot(p) < 0.0)) {
      hinv = Mat::Identity(n, n) * initial_scale(g);
      scaled = false;
      p = -hinv * g;
    }
    auto ls = backtrack(ev, x, f, g, p);
    if (!ls.ok) {
      // Retry once along steepest descent before giving up.
      hinv = Mat::Identity(n, n) * initial_scale(g);
      scaled = false;
      p = -hinv * g;
      ls = backtrack(ev, x, f, g, p);
      if (!ls.ok) {
        const auto why = gnorm <= stall_threshold(f, ev.mode) ? Termination::RelativeTolerance
                                                              : Termination::LineSearchFailed;
        return finish(rep, x, f, gnorm, why, ev.fn_evals);
      }
    }
    ++rep.iterations;
    Vec g_new = ev.grad(ls.x);
    if (!g_new.allFinite()) {
      return finish(rep, ls.x, ls.f, std::numeric_limits<double>::infinity(),
                    Termination::NonFiniteEncountered, ev.fn_evals);
    }
    const Vec s = ls.x - x;
    const Vec y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        hinv = Mat::Identity(n, n) * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Vec hy = hinv * y;
      hinv += ((sy + y.dot(hy)) * rho * rho) * (s * s.transpose()) -
              rho * (hy * s.transpose() + s * hy.transpose());
    }
    const double f_old = f;
    x = ls.x;
    f = ls.f;
    g = g_new;
    const double gn = g.lpNorm<Eigen::Infinity>();
    if (relative_change_small(f_old, f, cfg.rel_tol) && gn <= stall_threshold(f, ev.mode)) {
      return finish(rep, x, f, gn, Termination::RelativeTolerance, ev.fn_evals);
    }
  }
}

}  // namespace

OptimReport minimize(const ObjectiveFunctions& obj, std::vector<double> x0,
                     const OptimizerConfig& cfg) {
  if (cfg.max_iter < 1 || !(cfg.rel_tol > 0.0) || !(cfg.grad_tol > 0.0)) {
    throw HmmError(ErrorCode::InvalidArgument, "optimizer tolerances must be positive, max_iter >= 1");
  }
  const bool needs_grad = cfg.mode == OptimMode::Grad || cfg.mode == OptimMode::GradHess;
  const bool needs_hess = cfg.mode == OptimMode::Hess || cfg.mode == OptimMode::GradHess;
  if (!obj.fn || (needs_grad && !obj.gr) || (needs_hess && !obj.he && !obj.fgh)) {
    throw HmmError(ErrorCode::InvalidArgument, "objective lacks the derivatives the mode requires");
  }
  Evaluator ev{obj, cfg.mode};
  Vec x = to_vec(x0);
  const double f0 = ev.f(x);
  if (x.size() == 0) {
    return finish(OptimReport{}, x, f0, 0.0, Termination::NoFreeParameters, ev.fn_evals);
  }
  if (!std::isfinite(f0)) {
    return finish(OptimReport{}, x, f0, std::numeric_limits<double>::infinity(),
                  Termination::NonFiniteEncountered, ev.fn_evals);
  }
  if (cfg.mode == OptimMode::Hess || cfg.mode == OptimMode::GradHess) return run_newton(ev, x, f0, cfg);
  return run_bfgs(ev, x, f0, cfg);
}

}  // namespace hmmfit
