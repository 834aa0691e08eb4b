#include "hmmfit/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "hmmfit/model.hpp"
#include "hmmfit/parallel.hpp"
#include "hmmfit/stats.hpp"

namespace hmmfit {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng make_rng(std::uint64_t seed, std::uint64_t domain, std::uint64_t replicate, std::uint64_t attempt) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ domain);
  h = splitmix64(h ^ replicate);
  h = splitmix64(h ^ attempt);
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

namespace {

int draw_categorical(std::span<const double> probs, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  // Rounding left u above the cumulative sum: take the last positive entry.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<int>(i);
  }
  return 0;
}

std::vector<int> simulate_states(const NaturalParams& p, std::size_t T, Rng& rng) {
  std::vector<int> states(T);
  const auto um = static_cast<std::size_t>(p.m);
  int c = draw_categorical(p.initial_distribution(), rng);
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) {
      c = draw_categorical(std::span<const double>(p.gamma.data() + static_cast<std::size_t>(c) * um, um), rng);
    }
    states[t] = c;
  }
  return states;
}

int draw_count(double lambda, Rng& rng) {
  std::poisson_distribution<int> pois(lambda);
  return pois(rng);
}

}  // namespace

Simulation simulate_hmm(const NaturalParams& p, std::size_t T, Rng& rng) {
  if (T == 0) throw HmmError(ErrorCode::InvalidArgument, "simulation length must be >= 1");
  auto states = simulate_states(p, T, rng);
  std::vector<int> x(T);
  for (std::size_t t = 0; t < T; ++t) x[t] = draw_count(p.lambda[static_cast<std::size_t>(states[t])], rng);
  return {ObservationSeq(std::move(x)), std::move(states)};
}

Simulation simulate_hmm(const NaturalParams& p, std::size_t T, std::uint64_t seed) {
  auto rng = make_rng(seed, kDomainSimulate);
  return simulate_hmm(p, T, rng);
}

Simulation simulate_like(const NaturalParams& p, const ObservationSeq& pattern, Rng& rng) {
  const std::size_t T = pattern.size();
  auto states = simulate_states(p, T, rng);
  std::vector<int> x(T);
  for (std::size_t t = 0; t < T; ++t) {
    const int draw = draw_count(p.lambda[static_cast<std::size_t>(states[t])], rng);
    x[t] = pattern.missing(t) ? ObservationSeq::kMissing : draw;
  }
  return {ObservationSeq(std::move(x)), std::move(states)};
}

bool visits_all_states(std::span<const int> states, int m) {
  std::vector<bool> seen(static_cast<std::size_t>(m), false);
  int count = 0;
  for (int s : states) {
    const auto i = static_cast<std::size_t>(s);
    if (seen[i]) continue;
    seen[i] = true;
    if (++count == m) return true;
  }
  return count == m;
}

NaturalParams preset(std::string_view name) {
  if (name == "sim2") return make_natural({1, 7}, {0.95, 0.05, 0.15, 0.85});
  if (name == "sim3") {
    return make_natural({1, 4, 7}, {0.95, 0.025, 0.025, 0.05, 0.90, 0.05, 0.075, 0.075, 0.85});
  }
  if (name == "sim4") {
    return make_natural({1, 5, 9, 13}, {0.85, 0.05, 0.05, 0.05,  //
                                         0.05, 0.85, 0.05, 0.05,  //
                                         0.05, 0.10, 0.80, 0.05,  //
                                         0.034, 0.033, 0.033, 0.90});
  }
  throw HmmError(ErrorCode::InvalidArgument, "unknown preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() { return {"sim2", "sim3", "sim4"}; }

bool is_preset(std::string_view name) { return name == "sim2" || name == "sim3" || name == "sim4"; }

// ---- bench ----------------------------------------------------------------------

namespace {

struct BenchReplicate {
  bool ok = false;
  int rejected_states = 0;
  int rejected_fit = 0;
  std::vector<double> time_ms;
  std::vector<double> iterations;
  std::vector<double> nll;
};

}  // namespace

BenchResult bench(const ObservationSeq& x, int m, const BenchOptions& opt) {
  if (opt.n_reps < 2) throw HmmError(ErrorCode::InvalidArgument, "bench needs at least 2 replicates");
  std::vector<OptimMode> modes{OptimMode::NoDeriv};
  for (auto md : opt.modes) {
    if (std::find(modes.begin(), modes.end(), md) == modes.end()) modes.push_back(md);
  }

  OptimizerConfig base_cfg;
  base_cfg.max_iter = opt.max_iter;
  const Objective original(x, m, natural_to_working(default_initial(x, m)));
  const auto fitted = fit(original, base_cfg);
  require_converged(fitted);

  std::vector<BenchReplicate> reps(static_cast<std::size_t>(opt.n_reps));
  parallel_for(reps.size(), resolve_threads(opt.threads), [&](std::size_t r) {
    auto& out = reps[r];
    for (int a = 0; a < opt.max_attempts; ++a) {
      auto rng = make_rng(opt.seed, kDomainBench, r, static_cast<std::uint64_t>(a));
      const auto sim = simulate_like(fitted.natural, x, rng);
      if (!visits_all_states(sim.states, m)) {
        ++out.rejected_states;
        continue;
      }
      NaturalParams start;
      try {
        start = default_initial(sim.x, m);
      } catch (const HmmError&) {
        ++out.rejected_fit;
        continue;
      }
      const Objective obj(sim.x, m, natural_to_working(start));
      out.time_ms.assign(modes.size(), 0.0);
      out.iterations.assign(modes.size(), 0.0);
      out.nll.assign(modes.size(), 0.0);
      bool all_ok = true;
      for (std::size_t k = 0; k < modes.size() && all_ok; ++k) {
        OptimizerConfig cfg = base_cfg;
        cfg.mode = modes[k];
        const auto fns = obj.functions();
        const auto x0 = obj.initial_free();
        const auto t0 = std::chrono::steady_clock::now();
        const auto rep = minimize(fns, x0, cfg);
        const auto t1 = std::chrono::steady_clock::now();
        all_ok = rep.converged && proper_optimum(obj, rep.x_opt);
        out.time_ms[k] = std::chrono::duration<double, std::milli>(t1 - t0).count();
        out.iterations[k] = rep.iterations;
        out.nll[k] = rep.f_opt;
      }
      if (!all_ok) {
        ++out.rejected_fit;
        continue;
      }
      out.ok = true;
      return;
    }
  });

  BenchResult res;
  res.times_ms.assign(modes.size(), {});
  res.iterations.assign(modes.size(), {});
  std::vector<std::vector<double>> nll(modes.size());
  for (const auto& r : reps) {
    res.rejected_states += r.rejected_states;
    res.rejected_fit += r.rejected_fit;
    if (!r.ok) {
      ++res.failed_reps;
      continue;
    }
    ++res.reps_used;
    for (std::size_t k = 0; k < modes.size(); ++k) {
      res.times_ms[k].push_back(r.time_ms[k]);
      res.iterations[k].push_back(r.iterations[k]);
      nll[k].push_back(r.nll[k]);
    }
  }
  if (res.reps_used == 0) throw HmmError(ErrorCode::NotConverged, "no bench replicate succeeded");

  const double alpha = 1.0 - opt.level;
  const double z = stats::normal_quantile(1.0 - alpha / 2.0);
  const auto n = static_cast<double>(res.reps_used);
  for (std::size_t k = 0; k < modes.size(); ++k) {
    BenchModeRow row;
    row.mode = modes[k];
    const auto& t = res.times_ms[k];
    row.mean_time_ms = stats::mean(t);
    const double half = z * stats::sample_sd(t) / std::sqrt(n);
    row.time_lower_ms = std::max(0.0, row.mean_time_ms - half);
    row.time_upper_ms = row.mean_time_ms + half;
    row.mean_iterations = stats::mean(res.iterations[k]);
    row.iter_lower = stats::quantile(res.iterations[k], alpha / 2.0);
    row.iter_upper = stats::quantile(res.iterations[k], 1.0 - alpha / 2.0);
    std::vector<double> ratios(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double denom = std::max(t[i], 1e-9);
      ratios[i] = k == 0 ? 1.0 : res.times_ms[0][i] / denom;
    }
    row.ratio = stats::mean(ratios);
    row.ratio_lower = stats::quantile(ratios, alpha / 2.0);
    row.ratio_upper = stats::quantile(ratios, 1.0 - alpha / 2.0);
    row.mean_nll = stats::mean(nll[k]);
    res.rows.push_back(row);
  }
  return res;
}

}  // namespace hmmfit
