#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hmmfit/confint.hpp"
#include "hmmfit/dataset.hpp"
#include "hmmfit/error.hpp"
#include "hmmfit/inference.hpp"
#include "hmmfit/model.hpp"
#include "hmmfit/parallel.hpp"
#include "hmmfit/simulate.hpp"

namespace hmmfit::cli {
namespace {

using Json = nlohmann::ordered_json;

/// A computation error that carries extra machine-readable detail.
struct Failure {
  ErrorCode code;
  std::string message;
  Json detail;
};

struct UsageError {
  std::string message;
};

// ---- number formatting -----------------------------------------------------

Json num(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

Json num_array(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

std::string csv_number(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string text_number(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "Inf" : "-Inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---- tabular output ----------------------------------------------------------

struct Cell {
  std::string text;
  std::optional<double> value;
};

Cell cell(std::string s) { return {std::move(s), std::nullopt}; }
Cell cell(double v) { return {{}, v}; }
Cell cell(int v) { return {std::to_string(v), std::nullopt}; }

struct Table {
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<Cell>> rows;
};

struct Output {
  Json results = Json::object();
  std::vector<std::pair<std::string, std::string>> summary;
  std::vector<Table> tables;  // the first one is the CSV table
  std::optional<std::string> raw_text;
};

void write_csv(std::ostream& os, const Table& t) {
  for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      os << (i ? "," : "") << (row[i].value ? csv_number(*row[i].value) : row[i].text);
    }
    os << '\n';
  }
}

void write_text_table(std::ostream& os, const Table& t) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> width(t.header.size(), 0);
  for (std::size_t i = 0; i < t.header.size(); ++i) width[i] = t.header[i].size();
  for (const auto& row : t.rows) {
    auto& out = cells.emplace_back();
    for (std::size_t i = 0; i < row.size(); ++i) {
      out.push_back(row[i].value ? text_number(*row[i].value) : row[i].text);
      width[i] = std::max(width[i], out.back().size());
    }
  }
  if (!t.title.empty()) os << t.title << '\n';
  auto line = [&](const std::vector<std::string>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      os << (i ? "  " : "") << std::setw(static_cast<int>(width[i])) << v[i];
    }
    os << '\n';
  };
  line(t.header);
  for (const auto& row : cells) line(row);
}

// ---- parsing helpers -----------------------------------------------------------

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto pos = s.find(sep, start);
    const auto end = pos == std::string_view::npos ? s.size() : pos;
    if (end > start) out.emplace_back(s.substr(start, end - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

int parse_int(std::string_view s, std::string_view what) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw UsageError{"invalid " + std::string(what) + " '" + std::string(s) + "'"};
  }
  return v;
}

double parse_double(std::string_view s, std::string_view what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(s), &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw UsageError{"invalid " + std::string(what) + " '" + std::string(s) + "'"};
}

int single_m(const RunConfig& c) {
  const int m = c.states.empty() ? 2 : parse_int(c.states, "--states");
  if (m < 1) throw UsageError{"--states must be at least 1"};
  return m;
}

std::vector<int> m_range(const RunConfig& c) {
  const std::string spec = c.states.empty() ? "1-4" : c.states;
  std::vector<int> out;
  for (const auto& part : split(spec, ',')) {
    const auto dash = part.find('-');
    if (dash == std::string::npos) {
      out.push_back(parse_int(part, "--states"));
    } else {
      const int lo = parse_int(std::string_view(part).substr(0, dash), "--states");
      const int hi = parse_int(std::string_view(part).substr(dash + 1), "--states");
      if (hi < lo) throw UsageError{"empty --states range '" + part + "'"};
      for (int m = lo; m <= hi; ++m) out.push_back(m);
    }
  }
  if (out.empty()) throw UsageError{"--states range is empty"};
  for (int m : out) {
    if (m < 1) throw UsageError{"--states must be at least 1"};
  }
  return out;
}

OptimMode optim_mode(const std::string& name) {
  const auto mode = parse_optim_mode(name);
  if (!mode) throw UsageError{"unknown optimizer mode '" + name + "' (none, G, H, GH)"};
  return *mode;
}

std::vector<CiMethod> ci_methods(const RunConfig& c, std::string_view fallback) {
  std::vector<CiMethod> out;
  for (const auto& name : split(c.methods.empty() ? fallback : c.methods, ',')) {
    const auto m = parse_ci_method(name);
    if (!m) throw UsageError{"unknown CI method '" + name + "' (wald, profile, bootstrap)"};
    if (std::find(out.begin(), out.end(), *m) == out.end()) out.push_back(*m);
  }
  if (out.empty()) throw UsageError{"--methods is empty"};
  return out;
}

InitialDistMode initial_mode(const RunConfig& c) {
  if (c.initial == "stationary") return InitialDistMode::Stationary;
  if (c.initial == "estimated") return InitialDistMode::Estimated;
  throw UsageError{"--initial must be 'stationary' or 'estimated'"};
}

OptimizerConfig optimizer(const RunConfig& c) {
  OptimizerConfig cfg;
  cfg.mode = optim_mode(c.mode);
  cfg.max_iter = c.max_iter;
  return cfg;
}

// ---- data and parameters -----------------------------------------------------

ObservationSeq load_data(const RunConfig& c, std::istream& in) {
  if (c.data.empty() || c.data == "-") return parse_counts(in);
  if (is_preset(c.data)) return simulate_hmm(preset(c.data), c.length, c.seed).x;
  return load_dataset(c.data);
}

Json matrix_json(const std::vector<double>& flat, int m) {
  Json rows = Json::array();
  for (int i = 0; i < m; ++i) {
    Json row = Json::array();
    for (int j = 0; j < m; ++j) row.push_back(num(flat[static_cast<std::size_t>(i * m + j)]));
    rows.push_back(row);
  }
  return rows;
}

Json natural_json(const NaturalParams& p) {
  Json j;
  j["m"] = p.m;
  j["lambda"] = num_array(p.lambda);
  j["gamma"] = matrix_json(p.gamma, p.m);
  j["delta"] = num_array(p.delta);
  if (!p.initial.empty()) j["initial"] = num_array(p.initial);
  return j;
}

/// Accepts either a `fit` JSON document or a bare {lambda, gamma[, initial]}.
NaturalParams read_init(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw HmmError(ErrorCode::ParseError, "cannot open --init-from file '" + path + "'");
  Json doc;
  try {
    doc = Json::parse(f);
  } catch (const std::exception& e) {
    throw HmmError(ErrorCode::ParseError, "--init-from: " + std::string(e.what()));
  }
  const Json* nat = &doc;
  if (doc.contains("results") && doc["results"].contains("natural")) nat = &doc["results"]["natural"];
  else if (doc.contains("natural")) nat = &doc["natural"];
  try {
    const auto lambda = (*nat).at("lambda").get<std::vector<double>>();
    const auto rows = (*nat).at("gamma").get<std::vector<std::vector<double>>>();
    std::vector<double> gamma;
    for (const auto& r : rows) {
      if (r.size() != lambda.size()) throw HmmError(ErrorCode::ParseError, "--init-from: gamma is not m x m");
      gamma.insert(gamma.end(), r.begin(), r.end());
    }
    if (rows.size() != lambda.size()) throw HmmError(ErrorCode::ParseError, "--init-from: gamma is not m x m");
    std::vector<double> initial;
    if (nat->contains("initial")) initial = (*nat)["initial"].get<std::vector<double>>();
    return make_natural(lambda, gamma, initial);
  } catch (const nlohmann::json::exception& e) {
    throw HmmError(ErrorCode::ParseError, "--init-from: " + std::string(e.what()));
  }
}

Json optim_json(const OptimReport& r, OptimMode mode) {
  Json j;
  j["mode"] = std::string(to_string(mode));
  j["converged"] = r.converged;
  j["termination"] = std::string(to_string(r.termination));
  j["iterations"] = r.iterations;
  j["fn_evals"] = r.fn_evals;
  j["grad_norm"] = num(r.grad_norm);
  j["nll"] = num(r.f_opt);
  j["x_opt"] = num_array(r.x_opt);
  return j;
}

struct Fitted {
  Objective obj;
  FitResult fit;
  int m;
};

/// Starting values, fixed parameters and state count from the config.
Objective build_objective(const RunConfig& c, const ObservationSeq& x, int m, bool m_given) {
  NaturalParams start;
  if (!c.init_from.empty()) {
    start = read_init(c.init_from);
    if (m_given && start.m != m) {
      throw UsageError{"--states " + std::to_string(m) + " disagrees with the " + std::to_string(start.m) +
                       "-state --init-from model"};
    }
    m = start.m;
  } else {
    start = default_initial(x, m);
  }
  if (initial_mode(c) == InitialDistMode::Estimated && start.initial.empty()) start.initial = start.delta;
  if (initial_mode(c) == InitialDistMode::Stationary) start.initial.clear();

  std::vector<bool> fixed(static_cast<std::size_t>(m), false);
  for (const auto& f : c.fix) {
    const auto eq = f.find('=');
    if (f.rfind("lambda", 0) != 0 || eq == std::string::npos) {
      throw UsageError{"--fix expects lambda<i>=<value>, got '" + f + "'"};
    }
    const int i = parse_int(std::string_view(f).substr(6, eq - 6), "--fix state");
    const double v = parse_double(std::string_view(f).substr(eq + 1), "--fix value");
    if (i < 1 || i > m) throw UsageError{"--fix state out of range in '" + f + "'"};
    if (!(v > 0.0)) throw UsageError{"--fix value must be positive in '" + f + "'"};
    start.lambda[static_cast<std::size_t>(i - 1)] = v;
    fixed[static_cast<std::size_t>(i - 1)] = true;
  }
  auto w = natural_to_working(start);
  std::optional<ParameterMap> map;
  if (std::find(fixed.begin(), fixed.end(), true) != fixed.end()) {
    const auto n = static_cast<std::size_t>(num_working(m, w.mode()));
    std::vector<std::optional<int>> entries(n);
    int id = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k < fixed.size() && fixed[k]) continue;
      entries[k] = id++;
    }
    map = ParameterMap(entries);
  }
  return Objective(x, m, std::move(w), map);
}

Fitted fit_data(const RunConfig& c, const ObservationSeq& x) {
  const bool m_given = !c.states.empty();
  int m = single_m(c);
  Objective obj = build_objective(c, x, m, m_given);
  m = obj.m();
  const auto cfg = optimizer(c);
  FitResult fit = hmmfit::fit(obj, cfg);
  if (!fit.report.converged) {
    Json detail;
    detail["report"] = optim_json(fit.report, cfg.mode);
    throw Failure{ErrorCode::NotConverged,
                  "optimizer did not converge (" + std::string(to_string(fit.report.termination)) + ")", detail};
  }
  return {std::move(obj), std::move(fit), m};
}

int num_free_parameters(const Objective& obj) { return static_cast<int>(obj.num_free()); }

// ---- interval output -----------------------------------------------------------

Json interval_json(const IntervalRow& r) {
  Json j;
  j["name"] = r.name;
  j["method"] = std::string(to_string(r.method));
  j["level"] = r.level;
  j["estimate"] = num(r.estimate);
  j["lower"] = num(r.lower);
  j["upper"] = num(r.upper);
  j["status"] = std::string(to_string(r.status));
  return j;
}

Table interval_table(const IntervalTable& t) {
  Table out{"", {"name", "method", "level", "estimate", "lower", "upper", "status"}, {}};
  for (const auto& r : t.rows) {
    out.rows.push_back({cell(r.name), cell(std::string(to_string(r.method))), cell(r.level), cell(r.estimate),
                        cell(r.lower), cell(r.upper), cell(std::string(to_string(r.status)))});
  }
  return out;
}

Json archive_summary(const BootstrapArchive& a, int B) {
  Json j;
  j["B"] = B;
  j["accepted"] = a.estimates.size();
  j["rejected_states"] = a.rejected_states;
  j["rejected_fit"] = a.rejected_fit;
  j["failed"] = a.failed;
  return j;
}

BootstrapOptions bootstrap_options(const RunConfig& c) {
  BootstrapOptions o;
  o.B = c.B;
  o.level = c.level;
  o.seed = c.seed;
  o.threads = resolve_threads(c.threads);
  o.serial = c.serial;
  o.cfg = optimizer(c);
  return o;
}

ProfileOptions profile_options(const RunConfig& c) {
  ProfileOptions o;
  o.level = c.level;
  o.cfg = optimizer(c);
  return o;
}

void add_fit_summary(Output& o, const Fitted& f) {
  o.summary.emplace_back("states", std::to_string(f.m));
  o.summary.emplace_back("nll", text_number(f.fit.nll));
  o.summary.emplace_back("observations", std::to_string(f.fit.num_obs));
}

// ---- commands -------------------------------------------------------------------

Output cmd_fit(const RunConfig& c, std::istream& in, std::vector<std::string>& warnings) {
  const auto x = load_data(c, in);
  const auto f = fit_data(c, x);
  const int k = num_free_parameters(f.obj);
  const double T = static_cast<double>(f.fit.num_obs);
  const double aic = 2.0 * f.fit.nll + 2.0 * k;
  const double bic = 2.0 * f.fit.nll + k * std::log(T);

  std::optional<SdReport> sd;
  try {
    sd = sd_report(f.obj, f.fit);
  } catch (const HmmError& e) {
    warnings.push_back(std::string("standard errors unavailable: ") + e.what());
  }

  Output o;
  auto& r = o.results;
  r["m"] = f.m;
  r["initial"] = c.initial;
  r["nll"] = num(f.fit.nll);
  r["k"] = k;
  r["aic"] = num(aic);
  r["bic"] = num(bic);
  r["num_obs"] = f.fit.num_obs;
  r["optimizer"] = optim_json(f.fit.report, optim_mode(c.mode));
  Json est = Json::array();
  Table t{"", {"name", "estimate", "std_error"}, {}};
  const auto names = f.obj.report_names();
  const auto values = f.obj.report(f.fit.free_opt);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double se = sd ? sd->rows[i].std_error : std::nan("");
    Json e;
    e["name"] = names[i];
    e["estimate"] = num(values[i]);
    e["std_error"] = num(se);
    est.push_back(e);
    t.rows.push_back({cell(names[i]), cell(values[i]), cell(se)});
  }
  r["estimates"] = est;
  r["natural"] = natural_json(f.fit.natural);
  r["working"] = num_array(f.fit.working.flatten());
  add_fit_summary(o, f);
  o.summary.emplace_back("parameters", std::to_string(k));
  o.summary.emplace_back("AIC", text_number(aic));
  o.summary.emplace_back("BIC", text_number(bic));
  o.summary.emplace_back("iterations", std::to_string(f.fit.report.iterations));
  o.tables.push_back(std::move(t));
  return o;
}

Output cmd_ci(const RunConfig& c, std::istream& in, std::vector<std::string>& warnings) {
  const auto methods = ci_methods(c, "wald");
  const auto x = load_data(c, in);
  const auto f = fit_data(c, x);
  IntervalTable all;
  Output o;
  for (const auto method : methods) {
    switch (method) {
      case CiMethod::Wald:
        all.append(wald_ci(sd_report(f.obj, f.fit), c.level, c.clip));
        break;
      case CiMethod::Profile:
        all.append(profile_table(f.obj, f.fit, profile_options(c), &warnings));
        break;
      case CiMethod::Bootstrap: {
        const auto b = bootstrap_ci(f.obj, f.fit, bootstrap_options(c));
        all.append(b.table);
        o.results["bootstrap"] = archive_summary(b.archive, c.B);
        break;
      }
    }
  }
  o.results["m"] = f.m;
  o.results["nll"] = num(f.fit.nll);
  o.results["level"] = c.level;
  Json rows = Json::array();
  for (const auto& row : all.rows) rows.push_back(interval_json(row));
  o.results["intervals"] = rows;
  add_fit_summary(o, f);
  o.tables.push_back(interval_table(all));
  return o;
}

/// Working-parameter index for eta<i>/lambda<i>, tau<i><j> or nu<i>.
std::size_t working_index(const std::string& name, int m, InitialDistMode mode) {
  auto digits = [&](std::size_t from) { return std::string_view(name).substr(from); };
  if (name.rfind("eta", 0) == 0 || name.rfind("lambda", 0) == 0) {
    const int i = parse_int(digits(name[0] == 'e' ? 3 : 6), "--param");
    if (i >= 1 && i <= m) return static_cast<std::size_t>(i - 1);
  } else if (name.rfind("tau", 0) == 0 && name.size() == 5) {
    const int i = name[3] - '0';
    const int j = name[4] - '0';
    if (i >= 1 && j >= 1 && i <= m && j <= m && i != j) {
      return static_cast<std::size_t>(m + tau_index(m, i - 1, j - 1));
    }
  } else if (name.rfind("nu", 0) == 0 && mode == InitialDistMode::Estimated) {
    const int i = parse_int(digits(2), "--param");
    if (i >= 1 && i < m) return static_cast<std::size_t>(m + num_tau(m) + i - 1);
  }
  throw UsageError{"unknown or out-of-range --param '" + name + "'"};
}

Output cmd_profile(const RunConfig& c, std::istream& in, std::vector<std::string>& warnings) {
  const auto x = load_data(c, in);
  const auto f = fit_data(c, x);
  Output o;
  o.results["m"] = f.m;
  o.results["nll"] = num(f.fit.nll);
  o.results["level"] = c.level;
  add_fit_summary(o, f);
  if (c.param.empty()) {
    const auto table = profile_table(f.obj, f.fit, profile_options(c), &warnings);
    Json rows = Json::array();
    for (const auto& row : table.rows) rows.push_back(interval_json(row));
    o.results["intervals"] = rows;
    o.tables.push_back(interval_table(table));
    return o;
  }
  const auto w = working_index(c.param, f.m, f.obj.mode());
  const int k = f.obj.map().free_index(w);
  if (k < 0) throw UsageError{"--param '" + c.param + "' is fixed in this model"};
  const auto p = profile_ci(f.obj, f.fit, static_cast<std::size_t>(k), profile_options(c));
  const bool is_rate = w < static_cast<std::size_t>(f.m);

  auto& r = o.results;
  r["param"] = c.param;
  r["working_index"] = w;
  r["estimate"] = num(p.estimate);
  r["lower"] = num(p.lower);
  r["upper"] = num(p.upper);
  r["critical"] = num(p.critical);
  r["status"] = std::string(to_string(p.status));
  if (is_rate) {
    Json nat;
    nat["name"] = "lambda" + std::to_string(w + 1);
    nat["estimate"] = num(std::exp(p.estimate));
    nat["lower"] = num(std::exp(p.lower));
    nat["upper"] = num(std::exp(p.upper));
    r["natural"] = nat;
  }
  Json trace = Json::array();
  Table t{"profile trace", {"value", "natural", "rp"}, {}};
  for (const auto& pt : p.trace) {
    Json e;
    e["value"] = num(pt.value);
    e["rp"] = num(pt.rp);
    trace.push_back(e);
    t.rows.push_back({cell(pt.value), cell(is_rate ? std::exp(pt.value) : std::nan("")), cell(pt.rp)});
  }
  r["trace"] = trace;
  o.summary.emplace_back("param", c.param);
  o.summary.emplace_back("estimate", text_number(p.estimate));
  o.summary.emplace_back("interval", "(" + text_number(p.lower) + ", " + text_number(p.upper) + ")");
  if (is_rate) {
    o.summary.emplace_back("natural interval",
                           "(" + text_number(std::exp(p.lower)) + ", " + text_number(std::exp(p.upper)) + ")");
  }
  o.summary.emplace_back("status", std::string(to_string(p.status)));
  o.tables.push_back(std::move(t));
  return o;
}

Output cmd_bootstrap(const RunConfig& c, std::istream& in, std::vector<std::string>&) {
  const auto x = load_data(c, in);
  const auto f = fit_data(c, x);
  const auto b = bootstrap_ci(f.obj, f.fit, bootstrap_options(c));
  Output o;
  auto& r = o.results;
  r["m"] = f.m;
  r["nll"] = num(f.fit.nll);
  r["level"] = c.level;
  r["bootstrap"] = archive_summary(b.archive, c.B);
  Json rows = Json::array();
  for (const auto& row : b.table.rows) rows.push_back(interval_json(row));
  r["intervals"] = rows;
  r["names"] = b.archive.names;
  Json reps = Json::array();
  for (const auto& e : b.archive.estimates) reps.push_back(num_array(e));
  r["replicates"] = reps;
  add_fit_summary(o, f);
  o.summary.emplace_back("accepted", std::to_string(b.archive.estimates.size()));
  o.summary.emplace_back("rejected (unvisited states)", std::to_string(b.archive.rejected_states));
  o.summary.emplace_back("rejected (improper fit)", std::to_string(b.archive.rejected_fit));
  o.tables.push_back(interval_table(b.table));
  return o;
}

Output cmd_coverage(const RunConfig& c, std::istream&, std::vector<std::string>&) {
  NaturalParams truth;
  std::string source;
  if (!c.init_from.empty()) {
    truth = read_init(c.init_from);
    source = c.init_from;
  } else {
    if (!is_preset(c.preset)) throw UsageError{"unknown --preset '" + c.preset + "'"};
    truth = preset(c.preset);
    source = c.preset;
  }
  CoverageOptions opt;
  opt.T = c.length;
  opt.n_reps = c.reps;
  opt.level = c.level;
  opt.methods = ci_methods(c, "wald,bootstrap");
  opt.seed = c.seed;
  opt.threads = resolve_threads(c.threads);
  opt.serial = c.serial;
  opt.B = c.B;
  opt.cfg = optimizer(c);
  const auto res = coverage_study(truth, opt);

  Output o;
  auto& r = o.results;
  r["truth"] = natural_json(truth);
  r["source"] = source;
  r["T"] = c.length;
  r["reps"] = c.reps;
  r["reps_used"] = res.reps_used;
  r["rejected_states"] = res.rejected_states;
  r["rejected_fit"] = res.rejected_fit;
  r["rejected_profile"] = res.rejected_profile;
  r["failed"] = res.failed;
  Json rows = Json::array();
  Table t{"", {"name", "method", "truth", "covered", "evaluated", "coverage_percent"}, {}};
  for (const auto& row : res.rows) {
    Json e;
    e["name"] = row.name;
    e["method"] = std::string(to_string(row.method));
    e["truth"] = num(row.truth);
    e["covered"] = row.covered;
    e["evaluated"] = row.evaluated;
    e["coverage_percent"] = num(row.coverage_percent());
    rows.push_back(e);
    t.rows.push_back({cell(row.name), cell(std::string(to_string(row.method))), cell(row.truth),
                      cell(row.covered), cell(row.evaluated), cell(row.coverage_percent())});
  }
  r["rows"] = rows;
  o.summary.emplace_back("truth", source);
  o.summary.emplace_back("replicates used", std::to_string(res.reps_used));
  o.summary.emplace_back("rejected", std::to_string(res.rejected_states + res.rejected_fit + res.rejected_profile));
  o.tables.push_back(std::move(t));
  return o;
}

Output cmd_bench(const RunConfig& c, std::istream& in, std::vector<std::string>& warnings) {
  const auto x = load_data(c, in);
  BenchOptions opt;
  opt.modes.clear();
  for (const auto& name : split(c.modes, ',')) {
    const auto mode = optim_mode(name);
    if (std::find(opt.modes.begin(), opt.modes.end(), mode) == opt.modes.end()) opt.modes.push_back(mode);
  }
  if (opt.modes.empty()) throw UsageError{"--modes is empty"};
  opt.n_reps = c.reps;
  opt.seed = c.seed;
  opt.threads = c.threads > 0 ? c.threads : 1;
  opt.level = c.level;
  opt.max_iter = c.max_iter;
  if (opt.threads > 1) warnings.push_back("timings taken with several threads share the machine");
  const auto res = bench(x, single_m(c), opt);

  Output o;
  auto& r = o.results;
  r["m"] = single_m(c);
  r["reps"] = c.reps;
  r["reps_used"] = res.reps_used;
  r["rejected_states"] = res.rejected_states;
  r["rejected_fit"] = res.rejected_fit;
  r["failed"] = res.failed_reps;
  Json rows = Json::array();
  Table t{"",
          {"mode", "mean_time_ms", "time_lower_ms", "time_upper_ms", "mean_iterations", "iter_lower", "iter_upper",
           "ratio", "ratio_lower", "ratio_upper"},
          {}};
  for (const auto& row : res.rows) {
    Json e;
    e["mode"] = std::string(to_string(row.mode));
    e["mean_time_ms"] = num(row.mean_time_ms);
    e["time_lower_ms"] = num(row.time_lower_ms);
    e["time_upper_ms"] = num(row.time_upper_ms);
    e["mean_iterations"] = num(row.mean_iterations);
    e["iter_lower"] = num(row.iter_lower);
    e["iter_upper"] = num(row.iter_upper);
    e["ratio"] = num(row.ratio);
    e["ratio_lower"] = num(row.ratio_lower);
    e["ratio_upper"] = num(row.ratio_upper);
    e["mean_nll"] = num(row.mean_nll);
    rows.push_back(e);
    t.rows.push_back({cell(std::string(to_string(row.mode))), cell(row.mean_time_ms), cell(row.time_lower_ms),
                      cell(row.time_upper_ms), cell(row.mean_iterations), cell(row.iter_lower),
                      cell(row.iter_upper), cell(row.ratio), cell(row.ratio_lower), cell(row.ratio_upper)});
  }
  r["rows"] = rows;
  o.summary.emplace_back("replicates used", std::to_string(res.reps_used));
  o.summary.emplace_back("rejected", std::to_string(res.rejected_states + res.rejected_fit));
  o.tables.push_back(std::move(t));
  return o;
}

Output cmd_decode(const RunConfig& c, std::istream& in, std::vector<std::string>&) {
  const auto x = load_data(c, in);
  const auto f = fit_data(c, x);
  const auto s = infer_states(f.fit.natural, x);
  Output o;
  auto& r = o.results;
  r["m"] = f.m;
  r["nll"] = num(f.fit.nll);
  r["natural"] = natural_json(f.fit.natural);
  Json xs = Json::array();
  Json vit = Json::array();
  Json loc = Json::array();
  Json probs = Json::array();
  std::vector<std::string> header{"t", "x", "viterbi", "local"};
  for (int i = 1; i <= f.m; ++i) header.push_back("p" + std::to_string(i));
  Table t{"", header, {}};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const bool miss = x.missing(i);
    xs.push_back(miss ? Json(nullptr) : Json(x[i]));
    vit.push_back(s.viterbi_path[i] + 1);
    loc.push_back(s.local_path[i] + 1);
    Json row = Json::array();
    std::vector<Cell> cells{cell(static_cast<int>(i + 1)), miss ? cell(std::string("NA")) : cell(x[i]),
                            cell(s.viterbi_path[i] + 1), cell(s.local_path[i] + 1)};
    for (int k = 0; k < f.m; ++k) {
      const double p = s.smoothing(i, static_cast<std::size_t>(k));
      row.push_back(num(p));
      cells.push_back(cell(p));
    }
    probs.push_back(row);
    t.rows.push_back(std::move(cells));
  }
  r["x"] = xs;
  r["viterbi"] = vit;
  r["local"] = loc;
  r["smoothing"] = probs;
  r["viterbi_log_probability"] = num(path_log_probability(f.fit.natural, x, s.viterbi_path));
  add_fit_summary(o, f);
  o.tables.push_back(std::move(t));
  return o;
}

Output cmd_forecast(const RunConfig& c, std::istream& in, std::vector<std::string>&) {
  if (c.horizon < 1) throw UsageError{"--horizon must be at least 1"};
  const auto x = load_data(c, in);
  const auto f = fit_data(c, x);
  const auto probs = forecast(f.fit.natural, x, c.horizon, c.x_max);
  double mean = 0.0;
  double total = 0.0;
  Table t{"", {"x", "probability"}, {}};
  for (std::size_t k = 0; k < probs.size(); ++k) {
    mean += static_cast<double>(k) * probs[k];
    total += probs[k];
    t.rows.push_back({cell(static_cast<int>(k)), cell(probs[k])});
  }
  Output o;
  auto& r = o.results;
  r["m"] = f.m;
  r["horizon"] = c.horizon;
  r["x_max"] = static_cast<int>(probs.size()) - 1;
  r["probabilities"] = num_array(probs);
  r["mass"] = num(total);
  r["mean"] = num(mean);
  add_fit_summary(o, f);
  o.summary.emplace_back("horizon", std::to_string(c.horizon));
  o.summary.emplace_back("mass", text_number(total));
  o.summary.emplace_back("mean", text_number(mean));
  o.tables.push_back(std::move(t));
  return o;
}

Output cmd_simulate(const RunConfig& c, std::istream&, std::vector<std::string>&) {
  NaturalParams p;
  std::string source;
  if (!c.init_from.empty()) {
    p = read_init(c.init_from);
    source = c.init_from;
  } else {
    if (!is_preset(c.preset)) throw UsageError{"unknown --preset '" + c.preset + "'"};
    p = preset(c.preset);
    source = c.preset;
  }
  const auto sim = simulate_hmm(p, c.length, c.seed);
  Output o;
  auto& r = o.results;
  r["source"] = source;
  r["natural"] = natural_json(p);
  r["length"] = c.length;
  Json xs = Json::array();
  Json st = Json::array();
  Table t{"", {"t", "x", "state"}, {}};
  std::ostringstream raw;
  for (std::size_t i = 0; i < sim.x.size(); ++i) {
    xs.push_back(sim.x[i]);
    st.push_back(sim.states[i] + 1);
    raw << sim.x[i] << '\n';
    t.rows.push_back({cell(static_cast<int>(i + 1)), cell(sim.x[i]), cell(sim.states[i] + 1)});
  }
  r["x"] = xs;
  r["states"] = st;
  o.tables.push_back(std::move(t));
  o.raw_text = raw.str();
  return o;
}

Output cmd_select(const RunConfig& c, std::istream& in, std::vector<std::string>& warnings) {
  const auto x = load_data(c, in);
  const auto ms = m_range(c);
  const auto rows = model_select(x, ms, optimizer(c), initial_mode(c));
  Output o;
  Json arr = Json::array();
  Table t{"", {"m", "nll", "k", "aic", "bic", "ok"}, {}};
  const SelectionRow* best_aic = nullptr;
  const SelectionRow* best_bic = nullptr;
  for (const auto& row : rows) {
    Json e;
    e["m"] = row.m;
    e["nll"] = num(row.nll);
    e["k"] = row.k;
    e["aic"] = num(row.aic);
    e["bic"] = num(row.bic);
    e["ok"] = row.ok;
    if (!row.ok) {
      e["error"] = row.error;
      warnings.push_back("m = " + std::to_string(row.m) + ": " + row.error);
    } else {
      if (!best_aic || row.aic < best_aic->aic) best_aic = &row;
      if (!best_bic || row.bic < best_bic->bic) best_bic = &row;
    }
    arr.push_back(e);
    t.rows.push_back({cell(row.m), cell(row.nll), cell(row.k), cell(row.aic), cell(row.bic),
                      cell(std::string(row.ok ? "true" : "false"))});
  }
  o.results["rows"] = arr;
  o.results["best_aic"] = best_aic ? Json(best_aic->m) : Json(nullptr);
  o.results["best_bic"] = best_bic ? Json(best_bic->m) : Json(nullptr);
  o.summary.emplace_back("best by AIC", best_aic ? std::to_string(best_aic->m) : "none");
  o.summary.emplace_back("best by BIC", best_bic ? std::to_string(best_bic->m) : "none");
  o.tables.push_back(std::move(t));
  return o;
}

// ---- driver ----------------------------------------------------------------------

bool uses_seed(const std::string& command) {
  return command == "bootstrap" || command == "coverage" || command == "bench" || command == "simulate" ||
         command == "ci";
}

Json config_json(const RunConfig& c) {
  Json j;
  j["data"] = c.data.empty() ? "-" : c.data;
  j["states"] = c.states;
  j["methods"] = c.methods;
  j["modes"] = c.modes;
  j["level"] = c.level;
  j["B"] = c.B;
  j["reps"] = c.reps;
  j["mode"] = c.mode;
  j["format"] = c.format;
  j["threads"] = c.threads;
  j["serial"] = c.serial;
  j["init_from"] = c.init_from;
  j["preset"] = c.preset;
  j["length"] = c.length;
  j["horizon"] = c.horizon;
  j["x_max"] = c.x_max;
  j["param"] = c.param;
  j["fix"] = c.fix;
  j["clip"] = c.clip;
  j["initial"] = c.initial;
  j["max_iter"] = c.max_iter;
  return j;
}

void render(std::ostream& os, const RunConfig& c, const Output& o, const std::vector<std::string>& warnings) {
  if (c.format == "json") {
    Json doc;
    doc["command"] = c.command;
    doc["config"] = config_json(c);
    doc["results"] = o.results;
    doc["warnings"] = warnings;
    doc["seed"] = uses_seed(c.command) || is_preset(c.data) ? Json(c.seed) : Json(nullptr);
    os << doc.dump(2) << '\n';
    return;
  }
  if (c.format == "csv") {
    if (!o.tables.empty()) write_csv(os, o.tables.front());
    return;
  }
  if (o.raw_text) {
    os << *o.raw_text;
    return;
  }
  std::size_t width = 0;
  for (const auto& [k, v] : o.summary) width = std::max(width, k.size());
  for (const auto& [k, v] : o.summary) {
    os << std::left << std::setw(static_cast<int>(width)) << k << std::right << "  " << v << '\n';
  }
  for (const auto& t : o.tables) {
    if (!o.summary.empty()) os << '\n';
    write_text_table(os, t);
  }
  for (const auto& w : warnings) os << "warning: " << w << '\n';
}

void report_error(const RunConfig& c, std::ostream& out, std::ostream& err, std::string_view code,
                  const std::string& message, const Json& detail) {
  err << "error: " << code << ": " << message << '\n';
  if (c.format != "json") return;
  Json doc;
  doc["command"] = c.command;
  doc["error"] = {{"code", std::string(code)}, {"message", message}};
  for (auto it = detail.begin(); detail.is_object() && it != detail.end(); ++it) doc["error"][it.key()] = it.value();
  out << doc.dump(2) << '\n';
}

void add_common(CLI::App* sub, RunConfig& c) {
  sub->add_option("--data", c.data, "tyt, sim2/sim3/sim4, a file of counts, or - for stdin");
  sub->add_option("--states", c.states, "number of states (select: a range such as 1-4)");
  sub->add_option("--mode", c.mode, "optimizer derivatives: none, G, H or GH")->capture_default_str();
  sub->add_option("--format", c.format, "output format")
      ->check(CLI::IsMember({"json", "csv", "text"}))
      ->capture_default_str();
  sub->add_option("--output", c.output, "write output to this file");
  sub->add_option("--seed", c.seed, "random seed")->capture_default_str();
  sub->add_option("--threads", c.threads, "worker threads (default HMMFIT_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  sub->add_option("--init-from", c.init_from, "starting values from a fit JSON document");
  sub->add_option("--initial", c.initial, "initial distribution: stationary or estimated")
      ->check(CLI::IsMember({"stationary", "estimated"}))
      ->capture_default_str();
  sub->add_option("--max-iter", c.max_iter, "optimizer iteration limit")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--length", c.length, "series length for simulated data")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--fix", c.fix, "hold a rate fixed, e.g. lambda1=1");
}

const CLI::Validator kLevel(
    [](std::string& s) -> std::string {
      try {
        const double v = std::stod(s);
        if (v > 0.0 && v <= 1.0) return {};
      } catch (const std::exception&) {
      }
      return "level must be in (0, 1]";
    },
    "LEVEL");

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  RunConfig c;
  CLI::App app{"Poisson hidden Markov models fitted by direct likelihood maximization", "hmmfit"};
  app.require_subcommand(1);

  struct Spec {
    const char* name;
    const char* help;
  };
  const Spec specs[] = {
      {"fit", "fit a model and report estimates with standard errors"},
      {"ci", "confidence intervals (wald, profile, bootstrap)"},
      {"profile", "profile-likelihood intervals or a single profile trace"},
      {"bootstrap", "parametric bootstrap intervals and replicate archive"},
      {"coverage", "Monte-Carlo coverage of interval methods"},
      {"bench", "optimizer timing and iteration comparison"},
      {"decode", "smoothing probabilities, local and Viterbi decoding"},
      {"forecast", "forecast distribution h steps ahead"},
      {"simulate", "simulate a series from a preset or fitted model"},
      {"select", "AIC/BIC over a range of state counts"},
  };
  for (const auto& s : specs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, c);
    const std::string name = s.name;
    if (name == "ci" || name == "profile" || name == "bootstrap" || name == "coverage") {
      sub->add_option("--level", c.level, "confidence level")->check(kLevel)->capture_default_str();
    }
    if (name == "ci" || name == "coverage") {
      sub->add_option("--methods", c.methods, "comma-separated: wald, profile, bootstrap");
    }
    if (name == "ci" || name == "bootstrap" || name == "coverage") {
      sub->add_option("--B", c.B, "bootstrap replicates")->check(CLI::Range(2, 1000000))->capture_default_str();
    }
    if (name == "ci" || name == "bootstrap" || name == "coverage") {
      sub->add_flag("--serial", c.serial, "use the serial reference replicate loop");
    }
    if (name == "ci") sub->add_flag("--clip", c.clip, "clamp Wald bounds of probabilities to [0, 1]");
    if (name == "coverage" || name == "bench") {
      sub->add_option("--reps", c.reps, "Monte-Carlo replicates")->check(CLI::PositiveNumber)->capture_default_str();
    }
    if (name == "coverage" || name == "simulate") {
      sub->add_option("--preset", c.preset, "generating model: sim2, sim3 or sim4")->capture_default_str();
    }
    if (name == "bench") {
      sub->add_option("--modes", c.modes, "comma-separated optimizer modes")->capture_default_str();
      sub->add_option("--level", c.level, "interval level")->check(kLevel)->capture_default_str();
    }
    if (name == "profile") sub->add_option("--param", c.param, "working parameter (eta2, lambda2, tau12, ...)");
    if (name == "forecast") {
      sub->add_option("--horizon", c.horizon, "steps ahead")->check(CLI::PositiveNumber)->capture_default_str();
      sub->add_option("--xmax", c.x_max, "largest count in the forecast support");
    }
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  for (const auto* sub : app.get_subcommands()) c.command = sub->get_name();

  std::vector<std::string> warnings;
  try {
    Output o;
    if (c.command == "fit") o = cmd_fit(c, in, warnings);
    else if (c.command == "ci") o = cmd_ci(c, in, warnings);
    else if (c.command == "profile") o = cmd_profile(c, in, warnings);
    else if (c.command == "bootstrap") o = cmd_bootstrap(c, in, warnings);
    else if (c.command == "coverage") o = cmd_coverage(c, in, warnings);
    else if (c.command == "bench") o = cmd_bench(c, in, warnings);
    else if (c.command == "decode") o = cmd_decode(c, in, warnings);
    else if (c.command == "forecast") o = cmd_forecast(c, in, warnings);
    else if (c.command == "simulate") o = cmd_simulate(c, in, warnings);
    else o = cmd_select(c, in, warnings);

    if (c.output.empty()) {
      render(out, c, o, warnings);
    } else {
      std::ofstream f(c.output);
      if (!f) throw UsageError{"cannot write --output file '" + c.output + "'"};
      render(f, c, o, warnings);
    }
    for (const auto& w : warnings) {
      if (c.format != "text" || !c.output.empty()) err << "warning: " << w << '\n';
    }
    return 0;
  } catch (const UsageError& e) {
    report_error(c, out, err, "InvalidArgument", e.message, Json());
    return 2;
  } catch (const Failure& e) {
    report_error(c, out, err, to_string(e.code), e.message, e.detail);
    return 1;
  } catch (const HmmError& e) {
    report_error(c, out, err, to_string(e.code()), e.what(), Json());
    return e.code() == ErrorCode::InvalidArgument ? 2 : 1;
  }
}

}  // namespace hmmfit::cli
