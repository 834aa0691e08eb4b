#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "hmmfit/dataset.hpp"
#include "hmmfit/model.hpp"
#include "hmmfit/simulate.hpp"

using namespace hmmfit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

NaturalParams tyt_start() { return make_natural({1.0, 3.0}, {0.8, 0.2, 0.2, 0.8}); }

}  // namespace

TEST_CASE("parameter maps expand, collapse and fix", "[model]") {
  const ParameterMap map({0, std::nullopt, 1, 0});
  CHECK(map.size() == 4);
  CHECK(map.num_free() == 2);
  CHECK(map.free_index(0) == 0);
  CHECK(map.free_index(1) == -1);
  CHECK(map.free_index(2) == 1);
  CHECK(map.free_index(3) == 0);
  CHECK_FALSE(map.is_identity());
  CHECK(ParameterMap::identity(3).is_identity());

  const std::vector<double> base{9.0, 8.0, 7.0, 6.0};
  const std::vector<double> free{1.0, 2.0};
  CHECK(map.expand<double>(free, base) == std::vector<double>{1.0, 8.0, 2.0, 1.0});
  CHECK(map.collapse(base) == std::vector<double>{9.0, 7.0});

  const auto fixed = map.fixing(0);
  CHECK(fixed.num_free() == 1);
  CHECK(fixed.free_index(0) == -1);
  CHECK(fixed.free_index(3) == -1);
  CHECK(fixed.free_index(2) == 0);
}

TEST_CASE("objective rejects a map of the wrong length", "[model]") {
  try {
    Objective obj(tyt_data(), 2, natural_to_working(tyt_start()), ParameterMap::identity(3));
    FAIL("expected MapShapeMismatch");
  } catch (const HmmError& e) {
    CHECK(e.code() == ErrorCode::MapShapeMismatch);
  }
}

TEST_CASE("mapped gradient is the summed expanded gradient", "[model]") {
  const auto x = tyt_data();
  const auto w = natural_to_working(make_natural({1.2, 5.0}, {0.9, 0.1, 0.3, 0.7}));
  // tau entries tied, eta_1 fixed.
  const ParameterMap map({std::nullopt, 0, 1, 1});
  const Objective mapped(x, 2, w, map);
  const Objective full(x, 2, w);
  const std::vector<double> free{1.7, -1.5};
  const auto g = mapped.gr(free);
  const auto expanded = map.expand<double>(free, w.flatten());
  const auto gf = full.gr(expanded);
  CHECK_THAT(g[0], WithinRel(gf[1], 1e-12));
  CHECK_THAT(g[1], WithinRel(gf[2] + gf[3], 1e-12));

  // and against central differences of the mapped objective
  for (std::size_t k = 0; k < 2; ++k) {
    auto up = free;
    auto dn = free;
    up[k] += 1e-6;
    dn[k] -= 1e-6;
    CHECK_THAT(g[k], WithinAbs((mapped.fn(up) - mapped.fn(dn)) / 2e-6, 1e-5));
  }
  const auto so = mapped.fgh(free);
  CHECK(so.value == mapped.fn(free));
  CHECK_THAT(so.hessian(0, 1), WithinRel(mapped.he(free)(0, 1), 1e-14));
}

TEST_CASE("TYT fit from default starting values", "[model]") {
  const auto x = tyt_data();
  const auto init = default_initial(x, 2);
  const Objective obj(x, 2, natural_to_working(init));
  const auto f = fit(obj, OptimizerConfig{});
  REQUIRE(f.report.converged);
  CHECK_THAT(f.nll, WithinAbs(168.536055869, 1e-6));
  CHECK(f.natural.lambda[0] < f.natural.lambda[1]);
  CHECK(f.num_obs == 87);
  CHECK_FALSE(f.canonicalized);

  const auto sd = sd_report(obj, f);
  CHECK_THAT(sd.find("gamma11")->std_error, WithinRel(sd.find("gamma12")->std_error, 1e-8));
  CHECK_THAT(sd.find("gamma21")->std_error, WithinRel(sd.find("gamma22")->std_error, 1e-8));
  CHECK_THAT(sd.find("delta1")->std_error, WithinRel(sd.find("delta2")->std_error, 1e-8));
  CHECK(sd.working_se.size() == 4);
  CHECK(proper_optimum(obj, f));
}

TEST_CASE("fit is invariant under relabelling the start", "[model]") {
  const auto x = tyt_data();
  const Objective a(x, 2, natural_to_working(make_natural({1.0, 3.0}, {0.8, 0.2, 0.3, 0.7})));
  const Objective b(x, 2, natural_to_working(make_natural({3.0, 1.0}, {0.7, 0.3, 0.2, 0.8})));
  const auto fa = fit(a, OptimizerConfig{});
  const auto fb = fit(b, OptimizerConfig{});
  CHECK(fb.canonicalized);
  CHECK_THAT(fa.nll, WithinAbs(fb.nll, 1e-8));
  CHECK_THAT(fa.natural.lambda[0], WithinAbs(fb.natural.lambda[0], 1e-5));
  CHECK_THAT(fa.natural.tpm(0, 1), WithinAbs(fb.natural.tpm(0, 1), 1e-5));
}

TEST_CASE("fixed parameters have zero standard error", "[model]") {
  auto start = tyt_start();
  start.lambda[0] = 1.0;
  const Objective obj(tyt_data(), 2, natural_to_working(start), ParameterMap({std::nullopt, 0, 1, 2}));
  const auto f = fit(obj, OptimizerConfig{});
  CHECK_FALSE(f.canonicalized);
  const auto sd = sd_report(obj, f);
  CHECK(sd.find("lambda1")->estimate == 1.0);
  CHECK(sd.find("lambda1")->std_error == 0.0);
  CHECK_THAT(sd.find("lambda2")->estimate, WithinAbs(5.50164872, 1e-6));
}

TEST_CASE("pinning and restarting objectives", "[model]") {
  const Objective obj(tyt_data(), 2, natural_to_working(tyt_start()));
  const auto f = fit(obj, OptimizerConfig{});
  const auto pinned = obj.fixing(1, 1.75, f.free_opt);
  CHECK(pinned.num_free() == 3);
  const auto pf = fit(pinned, OptimizerConfig{});
  CHECK(pf.nll >= f.nll);
  CHECK(pf.working.eta[1] == 1.75);

  const auto again = obj.restarted(f.free_opt);
  CHECK(again.initial_free() == f.free_opt);
}

TEST_CASE("require_converged signals NotConverged", "[model]") {
  const Objective obj(tyt_data(), 2, natural_to_working(tyt_start()));
  OptimizerConfig cfg;
  cfg.max_iter = 1;
  const auto f = fit(obj, cfg);
  try {
    require_converged(f);
    FAIL("expected NotConverged");
  } catch (const HmmError& e) {
    CHECK(e.code() == ErrorCode::NotConverged);
  }
}

TEST_CASE("degenerate points are not proper optima", "[model]") {
  const auto x = tyt_data();
  const Objective obj(x, 2, natural_to_working(make_natural({3.8, 3.8}, {0.5, 0.5, 0.5, 0.5})));
  CHECK_FALSE(proper_optimum(obj, obj.initial_free()));
}

TEST_CASE("default starting values follow the quantile grid", "[model]") {
  const ObservationSeq x({0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10});
  const auto p2 = default_initial(x, 2);
  CHECK_THAT(p2.lambda[0], WithinAbs(1.0, 1e-12));
  CHECK_THAT(p2.lambda[1], WithinAbs(9.0, 1e-12));
  CHECK(p2.tpm(0, 0) == 0.8);
  const auto p3 = default_initial(x, 3);
  CHECK_THAT(p3.lambda[1], WithinAbs(5.0, 1e-12));
  CHECK_THAT(p3.tpm(0, 2), WithinAbs(0.1, 1e-12));
  CHECK_THAT(default_initial(x, 1).lambda[0], WithinAbs(5.0, 1e-12));

  // ties and zeros are pushed apart
  const auto z = default_initial(ObservationSeq({0, 0, 0, 0, 1}), 3);
  CHECK(z.lambda[0] > 0.0);
  CHECK(z.lambda[1] > z.lambda[0]);
  CHECK(z.lambda[2] > z.lambda[1]);
}

TEST_CASE("parameter counts", "[model]") {
  CHECK(num_parameters(1, InitialDistMode::Stationary) == 1);
  CHECK(num_parameters(2, InitialDistMode::Stationary) == 4);
  CHECK(num_parameters(3, InitialDistMode::Estimated) == 11);
}

TEST_CASE("model selection on TYT prefers two states", "[model]") {
  const std::vector<int> ms{1, 2, 3, 4};
  const auto rows = model_select(tyt_data(), ms, OptimizerConfig{});
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) CHECK(r.ok);
  CHECK_THAT(rows[0].bic, WithinAbs(std::log(87.0) + 2.0 * rows[0].nll, 1e-12));
  int best_aic = 0;
  int best_bic = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].aic < rows[static_cast<std::size_t>(best_aic)].aic) best_aic = static_cast<int>(i);
    if (rows[i].bic < rows[static_cast<std::size_t>(best_bic)].bic) best_bic = static_cast<int>(i);
  }
  CHECK(rows[static_cast<std::size_t>(best_aic)].m == 2);
  CHECK(rows[static_cast<std::size_t>(best_bic)].m == 2);
}

TEST_CASE("BIC recovers three states from sim3 data", "[model]") {
  const auto x = simulate_hmm(preset("sim3"), 5000, 17).x;
  const std::vector<int> ms{2, 3, 4};
  const auto rows = model_select(x, ms, OptimizerConfig{});
  double best = INFINITY;
  int best_m = 0;
  for (const auto& r : rows) {
    if (r.ok && r.bic < best) best = r.bic, best_m = r.m;
  }
  CHECK(best_m == 3);
}

TEST_CASE("estimated initial distribution adds parameters and cannot worsen the fit", "[model]") {
  const auto x = tyt_data();
  auto start = tyt_start();
  const auto fs = fit(Objective(x, 2, natural_to_working(start)), OptimizerConfig{});
  start.initial = {0.5, 0.5};
  const Objective obj(x, 2, natural_to_working(start));
  CHECK(obj.mode() == InitialDistMode::Estimated);
  CHECK(obj.num_free() == 5);
  const auto fe = fit(obj, OptimizerConfig{});
  REQUIRE(fe.report.converged);
  CHECK(fe.nll <= fs.nll + 1e-8);
  CHECK(obj.report_names().back() == "init2");
}
