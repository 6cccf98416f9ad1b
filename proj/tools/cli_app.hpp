#pragma once

// Config-driven experiment runner. Every subcommand parses and validates its
// whole config into library types first, then computes, then writes
//   <out>/<subcommand>.csv   (plus extra tables for some subcommands)
//   <out>/summary.json       deterministic given config + seed
//   <out>/meta.json          timestamps and invocation details
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "roughvol/roughvol.hpp"

namespace roughvol::cli {

using json = nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Formatting

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json jnum(double v) {
  if (std::isfinite(v)) return v;
  return fmt(v);
}

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  template <class... Ts>
  void row(const Ts&... cells) {
    std::vector<std::string> r;
    (r.push_back(cell(cells)), ...);
    if (r.size() != header_.size()) throw std::logic_error("table row width mismatch");
    rows_.push_back(std::move(r));
  }

  [[nodiscard]] std::string str() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t k = 0; k < r.size(); ++k) os << (k ? "," : "") << r[k];
      os << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return os.str();
  }

  [[nodiscard]] std::size_t size() const { return rows_.size(); }

 private:
  static std::string cell(double v) { return fmt(v); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(bool b) { return b ? "true" : "false"; }
  template <class I>
    requires std::is_integral_v<I>
  static std::string cell(I v) {
    return std::to_string(v);
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

struct Report {
  std::map<std::string, Table> tables;  // file stem -> table
  json summary = json::object();
  std::vector<std::string> log;         // human-readable notes echoed to stderr
};

// ---------------------------------------------------------------------------
// Config reading. Every accessor names the full field path on failure.

class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  [[nodiscard]] bool has(const std::string& key) const { return j_.is_object() && j_.contains(key) && !j_[key].is_null(); }

  [[nodiscard]] Node child(const std::string& key) const {
    if (!has(key)) fail(key, "is required");
    if (!j_[key].is_object()) fail(key, "must be an object");
    return Node(j_[key], name(key));
  }

  [[nodiscard]] double num(const std::string& key) const {
    if (!has(key)) fail(key, "is required");
    return as_num(j_[key], name(key));
  }

  [[nodiscard]] double num(const std::string& key, double fallback) const { return has(key) ? num(key) : fallback; }

  [[nodiscard]] std::uint64_t count(const std::string& key) const {
    const double v = num(key);
    if (v < 0 || v != std::floor(v) || v > 1e15) fail(key, "must be a nonnegative integer");
    return static_cast<std::uint64_t>(v);
  }

  [[nodiscard]] std::uint64_t count(const std::string& key, std::uint64_t fallback) const {
    return has(key) ? count(key) : fallback;
  }

  [[nodiscard]] bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    if (!j_[key].is_boolean()) fail(key, "must be true or false");
    return j_[key].get<bool>();
  }

  [[nodiscard]] std::string text(const std::string& key) const {
    if (!has(key)) fail(key, "is required");
    if (!j_[key].is_string()) fail(key, "must be a string");
    return j_[key].get<std::string>();
  }

  [[nodiscard]] std::vector<double> nums(const std::string& key) const {
    if (!has(key)) fail(key, "is required");
    if (!j_[key].is_array()) fail(key, "must be an array of numbers");
    std::vector<double> out;
    for (std::size_t k = 0; k < j_[key].size(); ++k)
      out.push_back(as_num(j_[key][k], name(key) + "[" + std::to_string(k) + "]"));
    return out;
  }

  [[nodiscard]] std::vector<double> nums(const std::string& key, std::vector<double> fallback) const {
    return has(key) ? nums(key) : fallback;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ValidationError(name(key) + ": " + what);
  }

  [[nodiscard]] std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  [[nodiscard]] const json& raw() const { return j_; }
  [[nodiscard]] const std::string& path() const { return path_; }

 private:
  static double as_num(const json& v, const std::string& field) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf") return kInf;
    }
    throw ValidationError(field + ": must be a number");
  }

  const json& j_;
  std::string path_;
};

// Runs `fn` and rewrites library precondition failures as field-named
// validation errors.
template <class F>
auto checked(const std::string& field, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const NumericalError&) {
    throw;
  } catch (const std::logic_error& e) {
    throw ValidationError(field + ": " + e.what());
  }
}

inline void require_field(bool ok, const Node& n, const std::string& key, const std::string& constraint) {
  if (!ok) n.fail(key, constraint);
}

inline PowerKernel read_kernel(const Node& n) {
  PowerKernel k;
  if (n.has("alpha") && n.has("hurst")) n.fail("alpha", "give either alpha or hurst, not both");
  if (n.has("hurst")) {
    const double h = n.num("hurst");
    require_field(h > 0.0 && h < 1.0, n, "hurst", "must lie in (0, 1)");
    k = PowerKernel::from_hurst(h);
  } else {
    k.alpha = n.num("alpha");
  }
  require_field(std::isfinite(k.alpha) && k.alpha > 0.5, n, n.has("hurst") ? "hurst" : "alpha",
                "kernel exponent alpha must be > 1/2 for a square-integrable kernel");
  return k;
}

inline VolSpec read_vol(const Node& n) {
  const std::string fam = n.text("family");
  if (fam == "exponential") {
    const double eta = n.num("eta");
    require_field(std::isfinite(eta) && eta >= 0.0, n, "eta", "must be >= 0");
    ZetaCurve zeta;
    if (n.has("zeta")) {
      const json& z = n.raw()["zeta"];
      if (z.is_number()) {
        require_field(z.get<double>() >= 0.0, n, "zeta", "must be >= 0");
        zeta = ZetaCurve(z.get<double>());
      } else {
        const Node zn = n.child("zeta");
        zeta = checked(n.name("zeta"), [&] { return ZetaCurve(zn.nums("times"), zn.nums("values")); });
      }
    }
    return VolSpec::exponential(eta, zeta);
  }
  if (fam == "power") {
    const double c = n.num("c"), p = n.num("p");
    require_field(std::isfinite(c) && c > 0.0, n, "c", "must be > 0");
    require_field(std::isfinite(p) && p >= 1.0, n, "p", "must be >= 1");
    const std::string ext = n.has("extension") ? n.text("extension") : "zero";
    if (ext != "zero" && ext != "even") n.fail("extension", "must be \"zero\" or \"even\"");
    return VolSpec::power(c, p, ext == "even" ? PowerExtension::Even : PowerExtension::ZeroBelow);
  }
  if (fam == "constant") {
    const double s = n.num("sbar");
    require_field(std::isfinite(s) && s >= 0.0, n, "sbar", "must be >= 0");
    return VolSpec::constant(s);
  }
  n.fail("family", "must be one of exponential, power, constant");
}

inline ModelParams read_model(const Node& n) {
  ModelParams m;
  m.rho = n.num("rho");
  require_field(m.rho >= -1.0 && m.rho <= 1.0, n, "rho", "must lie in [-1, 1]");
  m.s0 = n.num("s0", 1.0);
  require_field(std::isfinite(m.s0) && m.s0 > 0.0, n, "s0", "must be > 0");
  m.horizon = n.num("horizon");
  require_field(std::isfinite(m.horizon) && m.horizon > 0.0, n, "horizon", "must be > 0");
  m.kernel = read_kernel(n);
  m.vol = read_vol(n.child("vol"));
  return m;
}

inline MCConfig read_mc(const Node& n, double horizon, std::uint64_t seed, unsigned threads) {
  MCConfig mc;
  mc.n_paths = n.count("n_paths");
  require_field(mc.n_paths >= 1, n, "n_paths", "must be >= 1");
  mc.grid = Grid{horizon, n.count("steps")};
  require_field(mc.grid.n >= 2, n, "steps", "must be >= 2");
  mc.explosion_cap = n.num("explosion_cap", kDefaultExplosionCap);
  require_field(mc.explosion_cap > 0.0, n, "explosion_cap", "must be > 0");
  mc.antithetic = n.flag("antithetic", false);
  require_field(!mc.antithetic || mc.n_paths % 2 == 0, n, "n_paths", "must be even with antithetic sampling");
  mc.master_seed = seed;
  mc.threads = threads;
  return mc;
}

inline VolterraProblem read_problem(const Node& n) {
  VolterraProblem p;
  p.kernel = read_kernel(n);
  const Node f = n.child("forcing");
  if (f.has("times")) {
    SampledForcing s{f.nums("times"), f.nums("values")};
    p.forcing = s;
  } else {
    p.forcing = AffineForcing{f.num("lambda"), f.num("offset")};
  }
  p.b.vol = read_vol(n.child("b"));
  p.b.multiplier = n.num("multiplier", 1.0);
  require_field(std::isfinite(p.b.multiplier) && p.b.multiplier > 0.0, n, "multiplier", "must be > 0");
  if (n.has("cap")) {
    p.b.cap = n.num("cap");
    require_field(*p.b.cap > 0.0, n, "cap", "must be > 0");
  }
  checked(n.path(), [&] {
    p.validate();
    return 0;
  });
  return p;
}

inline std::vector<double> increasing(const Node& n, const std::string& key, std::vector<double> v, bool positive) {
  require_field(!v.empty(), n, key, "must be a nonempty list");
  for (std::size_t k = 0; k < v.size(); ++k) {
    require_field(std::isfinite(v[k]), n, key, "entries must be finite");
    if (positive) require_field(v[k] > 0.0, n, key, "entries must be > 0");
    if (k) require_field(v[k] > v[k - 1], n, key, "entries must be strictly increasing");
  }
  return v;
}

inline json mc_json(const MCResult& r) {
  json j{{"mean", jnum(r.mean)},       {"std_error", jnum(r.std_error)}, {"ci95", {jnum(r.ci95.lo), jnum(r.ci95.hi)}},
         {"n_paths", r.n_paths},       {"n_exploded", r.n_exploded},     {"seed", r.config.master_seed},
         {"steps", r.config.steps},    {"horizon", r.config.horizon},    {"antithetic", r.config.antithetic}};
  if (r.wilson) j["wilson"] = {jnum(r.wilson->lo), jnum(r.wilson->hi)};
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands

struct RunContext {
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

inline Report cmd_bound(const Node& cfg, const RunContext&) {
  const VolterraProblem p = read_problem(cfg.child("problem"));
  const Node b = cfg.child("bound");
  const double T = b.num("horizon");
  require_field(T > 0.0, b, "horizon", "must be > 0");
  const auto Rs = b.nums("R", {});
  for (double R : Rs) require_field(R > 1.0 && std::isfinite(R), b, "R", "entries must be > 1");
  const auto& z = std::get_if<AffineForcing>(&p.forcing);
  if (!z) throw ValidationError("problem.forcing: the bound needs an affine forcing (lambda, offset)");
  if (z->lambda < 0.0) throw ValidationError("problem.forcing.lambda: must be >= 0 (nondecreasing forcing)");
  std::optional<double> xg;
  if (b.has("x")) {
    xg = b.num("x");
    require_field(*xg > 0.0, b, "x", "must be > 0");
  }

  const ExplosionBound eb = explosion_bound(p, T);
  Report rep;
  Table t({"x_star", "h", "integral", "bound", "osgood_finite", "R", "x_geometric", "geometric_bound"});
  json geo = json::array();
  const double x_geo = xg ? *xg : (std::isfinite(eb.minimizer_x) && eb.minimizer_x > 0.0 ? eb.minimizer_x : 1.0);
  if (Rs.empty()) t.row(eb.minimizer_x, eb.h_value, eb.integral_value, eb.bound, eb.osgood_finite, "", "", "");
  for (double R : Rs) {
    const double g = explosion_bound_geometric(p, T, x_geo, R);
    t.row(eb.minimizer_x, eb.h_value, eb.integral_value, eb.bound, eb.osgood_finite, R, x_geo, g);
    geo.push_back({{"R", R}, {"x", x_geo}, {"bound", jnum(g)}});
  }
  rep.tables.emplace("bound", std::move(t));
  rep.summary = {{"bound", jnum(eb.bound)},
                 {"minimizer_x", jnum(eb.minimizer_x)},
                 {"h_value", jnum(eb.h_value)},
                 {"integral_value", jnum(eb.integral_value)},
                 {"osgood_finite", eb.osgood_finite},
                 {"geometric", geo}};
  rep.log.push_back(std::string("Osgood integral ") + (eb.osgood_finite ? "finite" : "divergent") +
                    "; bound = " + fmt(eb.bound));
  return rep;
}

inline Report cmd_volterra(const Node& cfg, const RunContext&) {
  const VolterraProblem p = read_problem(cfg.child("problem"));
  const Node v = cfg.child("volterra");
  const double T = v.num("horizon");
  require_field(std::isfinite(T) && T > 0.0, v, "horizon", "must be > 0");
  const auto steps = increasing(v, "steps", v.nums("steps"), true);
  for (double s : steps) require_field(s >= 2 && s == std::floor(s), v, "steps", "entries must be integers >= 2");
  const double cap = v.num("explosion_cap", kDefaultExplosionCap);
  require_field(cap > 0.0, v, "explosion_cap", "must be > 0");
  std::vector<double> levels;
  if (v.has("levels")) levels = increasing(v, "levels", v.nums("levels"), true);

  Report rep;
  Table t({"steps", "i", "t", "z", "y"});
  json grids = json::array();
  std::vector<std::pair<std::size_t, BlowUpReport>> runs;
  for (double s : steps) {
    const auto n = static_cast<std::size_t>(s);
    auto r = checked("volterra", [&] { return solve_volterra(p, T, n, cap, levels); });
    const double dt = T / static_cast<double>(n);
    for (std::size_t i = 0; i < r.solution_path.size(); ++i)
      t.row(n, i, dt * static_cast<double>(i), p.z(dt * static_cast<double>(i)), r.solution_path[i]);
    json crossings = json::array();
    for (const auto& c : r.level_crossings) crossings.push_back({{"level", c.level}, {"time", c.time}});
    grids.push_back({{"steps", n}, {"exploded", r.exploded}, {"t_cap", jnum(r.t_cap)}, {"level_crossings", crossings}});
    runs.emplace_back(n, std::move(r));
  }
  json rich = json::array();
  for (std::size_t k = 1; k < runs.size(); ++k) {
    const auto& [n0, r0] = runs[k - 1];
    const auto& [n1, r1] = runs[k];
    if (n1 == 2 * n0 && r0.exploded && r1.exploded)
      rich.push_back({{"coarse", n0}, {"fine", n1}, {"t_cap", richardson_first_order(r0.t_cap, r1.t_cap)}});
  }
  rep.summary = {{"grids", grids}, {"richardson", rich}};
  if (const auto* z = std::get_if<AffineForcing>(&p.forcing); z && z->lambda >= 0.0) {
    const ExplosionBound eb = explosion_bound(p, T);
    rep.summary["explosion_bound"] = jnum(eb.bound);
    bool valid = true;
    for (const auto& [n, r] : runs)
      if (r.exploded && r.t_cap > eb.bound) valid = false;
    rep.summary["bound_dominates_t_cap"] = valid;
  }
  if (!rich.empty()) rep.log.push_back("extrapolated t_cap = " + fmt(rich.back()["t_cap"].get<double>()));
  rep.tables.emplace("volterra", std::move(t));
  return rep;
}

inline Report cmd_simulate(const Node& cfg, const RunContext& ctx) {
  const ModelParams m = read_model(cfg.child("model"));
  const MCConfig mc = read_mc(cfg.child("mc"), m.horizon, ctx.seed, ctx.threads);
  const auto est = conditional_price_estimator(m, mc);
  Report rep;
  Table t({"estimator", "mean", "std_error", "ci_lo", "ci_hi", "n_paths", "z_vs_s0"});
  auto z = [&](const MCResult& r) { return r.std_error > 0 ? (r.mean - 1.0) / r.std_error : 0.0; };
  // estimates are reported relative to S0
  t.row("conditional", est.conditional.mean, est.conditional.std_error, est.conditional.ci95.lo,
        est.conditional.ci95.hi, est.conditional.n_paths, z(est.conditional));
  t.row("plain", est.plain.mean, est.plain.std_error, est.plain.ci95.lo, est.plain.ci95.hi, est.plain.n_paths,
        z(est.plain));
  rep.tables.emplace("simulate", std::move(t));
  rep.summary = {{"conditional", mc_json(est.conditional)},
                 {"plain", mc_json(est.plain)},
                 {"conditional_within_3se", std::abs(z(est.conditional)) <= 3.0},
                 {"variance_ratio", jnum(std::pow(est.conditional.std_error / est.plain.std_error, 2))}};
  return rep;
}

inline Report cmd_defect(const Node& cfg, const RunContext& ctx) {
  const ModelParams m = read_model(cfg.child("model"));
  const MCConfig mc = read_mc(cfg.child("mc"), m.horizon, ctx.seed, ctx.threads);
  const Node d = cfg.child("defect");
  const auto levels = increasing(d, "levels", d.nums("levels"), true);
  require_field(levels.back() < mc.explosion_cap, d, "levels", "must lie below mc.explosion_cap");
  const auto refinements = d.count("refinements", 2);
  require_field(refinements >= 1 && refinements <= 8, d, "refinements", "must lie in [1, 8]");

  const auto res = martingale_defect(m, levels, mc, refinements);
  Report rep;
  Table t({"steps", "level", "estimate", "std_error", "wilson_lo", "wilson_hi", "n_paths", "n_exploded"});
  json ladders = json::array();
  for (const auto& l : res.ladders) {
    json rows = json::array();
    for (std::size_t k = 0; k < res.levels.size(); ++k) {
      const auto& r = l.hit_probs[k];
      t.row(l.steps, res.levels[k], r.mean, r.std_error, r.wilson->lo, r.wilson->hi, r.n_paths, r.n_exploded);
      rows.push_back({{"level", res.levels[k]}, {"hit", mc_json(r)}});
    }
    bool monotone = true;
    for (std::size_t k = 1; k < l.hit_probs.size(); ++k)
      if (l.hit_probs[k].mean > l.hit_probs[k - 1].mean) monotone = false;
    ladders.push_back({{"steps", l.steps}, {"levels", rows}, {"monotone_in_level", monotone}});
  }
  rep.tables.emplace("defect", std::move(t));
  rep.summary = {{"defect_estimate", jnum(res.defect_estimate)}, {"ladders", ladders}};
  rep.log.push_back("defect estimate (S0 x top-level hit probability, finest grid) = " + fmt(res.defect_estimate));
  return rep;
}

inline Report cmd_moment(const Node& cfg, const RunContext& ctx) {
  const ModelParams m = read_model(cfg.child("model"));
  const MCConfig mc = read_mc(cfg.child("mc"), m.horizon, ctx.seed, ctx.threads);
  const Node mo = cfg.child("moment");
  const double mm = mo.num("m");
  require_field(std::isfinite(mm) && mm > 1.0, mo, "m", "must be > 1");
  require_field(m.rho <= 0.0, cfg.child("model"), "rho", "must be <= 0 for the moment lower bound");
  double gamma = 0.0;
  if (mo.has("gamma")) {
    gamma = mo.num("gamma");
  } else {
    try {
      gamma = choose_gamma(m.rho, mm);
    } catch (const InfeasibleError& e) {
      throw ValidationError(std::string("model.rho / moment.m: ") + e.what());
    }
  }
  double A = 0.0;
  if (mo.has("barrier_A")) {
    A = mo.num("barrier_A");
  } else if (mo.has("lambda")) {
    A = mo.num("lambda") * m.horizon + 1.0;  // A = lambda T + 1
  } else {
    mo.fail("barrier_A", "is required (or give lambda for A = lambda T + 1)");
  }
  require_field(A > 0.0, mo, "barrier_A", "must be > 0");
  const auto caps_n = increasing(mo, "caps_n", mo.nums("caps_n"), true);
  std::vector<double> trunc;
  if (mo.has("truncation_caps")) trunc = increasing(mo, "truncation_caps", mo.nums("truncation_caps"), true);
  std::vector<ControlConfig> ctrls;
  for (double n : caps_n)
    ctrls.push_back(checked("moment", [&] { return ControlConfig(m.rho, mm, gamma, n, A); }));

  Report rep;
  Table t({"kind", "cap", "mean", "std_error", "ci_lo", "ci_hi", "n_exploded"});
  json lb = json::array(), tm = json::array();
  std::vector<double> prev;
  bool pathwise = true;
  for (const auto& c : ctrls) {
    const auto paths = boue_dupuis_payoffs(m, c, mc);
    if (!prev.empty())
      for (std::size_t k = 0; k < prev.size(); ++k)
        if (paths.payoff[k] < prev[k]) pathwise = false;
    prev = paths.payoff;
    std::size_t ex = 0;
    for (auto e : paths.exploded) ex += e;
    MCResult r = summarize(paths.payoff, mc.antithetic);
    r.n_exploded = ex;
    r.config = mc.echo();
    t.row("lower_bound", c.cap_n(), r.mean, r.std_error, r.ci95.lo, r.ci95.hi, r.n_exploded);
    lb.push_back({{"cap_n", c.cap_n()}, {"estimate", mc_json(r)}});
  }
  if (!trunc.empty()) {
    const auto res = truncated_moment(m, mm, trunc, mc);
    for (std::size_t k = 0; k < trunc.size(); ++k) {
      t.row("truncated_moment", trunc[k], res[k].mean, res[k].std_error, res[k].ci95.lo, res[k].ci95.hi, 0);
      tm.push_back({{"cap", trunc[k]}, {"estimate", mc_json(res[k])}});
    }
  }
  rep.tables.emplace("moment", std::move(t));
  rep.summary = {{"gamma", gamma},
                 {"barrier_A", A},
                 {"payoff_rate", ctrls.front().payoff_rate()},
                 {"lower_bound", lb},
                 {"lower_bound_pathwise_monotone", pathwise},
                 {"truncated_moment", tm}};
  return rep;
}

namespace detail {

inline double raw_cov(double a, double t, double u) {
  const double m = std::min(t, u);
  if (m <= 0.0) return 0.0;
  boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate(
      [&](double s, double xc) {
        const double d = xc > 0.0 ? xc : m - s;  // xc is -s on the left half
        const double rt = t == m ? d : t - s;
        const double ru = u == m ? d : u - s;
        return a * a * std::pow(rt, a - 1.0) * std::pow(ru, a - 1.0);
      },
      0.0, m, 1e-13);
}

}  // namespace detail

inline Report cmd_covcheck(const Node& cfg, const RunContext& ctx) {
  const Node c = cfg.child("covcheck");
  const PowerKernel K = read_kernel(c);
  const double rho = c.num("rho", 0.0);
  require_field(rho >= -1.0 && rho <= 1.0, c, "rho", "must lie in [-1, 1]");
  const double T = c.num("horizon", 1.0);
  require_field(T > 0.0, c, "horizon", "must be > 0");
  const auto times = increasing(c, "times", c.nums("times", {0.1, 0.5, 1.0}), true);
  const auto mesh = increasing(c, "mesh", c.nums("mesh", {0.001, 0.01, 0.1, 1.0}), true);
  require_field(mesh.back() <= T, c, "mesh", "lags must not exceed horizon");
  const auto resolution = c.count("resolution", 200);
  require_field(resolution >= 2, c, "resolution", "must be >= 2");
  const auto factor_steps = c.count("factor_steps", 32);
  require_field(factor_steps >= 2, c, "factor_steps", "must be >= 2");
  const auto n_samples = c.count("n_samples", 0);
  std::optional<Node> corridor;
  if (c.has("corridor")) corridor.emplace(c.child("corridor"));

  Report rep;
  // closed form / library versus an independent tanh-sinh rule on the raw integrand
  Table q({"quantity", "t", "u", "library", "quadrature", "rel_diff"});
  double worst = 0.0, brownian = 0.0;
  for (double t : times)
    for (double u : times) {
      if (u > t) continue;
      const double lib = t == u ? variance_Y(K, t) : covariance_YY(K, t, u);
      const double ref = detail::raw_cov(K.alpha, t, u);
      const double rel = std::abs(lib - ref) / std::abs(ref);
      worst = std::max(worst, rel);
      q.row(t == u ? "variance" : "covariance", t, u, lib, ref, rel);
      if (K.alpha == 1.0) brownian = std::max(brownian, std::abs(lib - std::min(t, u)));
    }
  rep.summary["max_rel_quadrature_diff"] = worst;
  if (K.alpha == 1.0) {
    const auto th = continuity_modulus(K, T, mesh, resolution);
    for (std::size_t k = 0; k < mesh.size(); ++k) brownian = std::max(brownian, std::abs(th[k] - std::sqrt(mesh[k])));
    for (double t : times)
      for (double u : times) brownian = std::max(brownian, std::abs(cross_cov_YW(K, 1.0, t, u) - std::min(t, u)));
    rep.summary["brownian_max_abs_diff"] = brownian;
    rep.summary["brownian_identities_pass"] = brownian <= 1e-12;
  }
  rep.tables.emplace("covcheck", std::move(q));

  const auto th = continuity_modulus(K, T, mesh, resolution);
  Table tt({"h", "theta"});
  std::vector<std::pair<double, double>> samples;
  for (std::size_t k = 0; k < mesh.size(); ++k) {
    tt.row(mesh[k], th[k]);
    samples.emplace_back(mesh[k], th[k]);
  }
  rep.tables.emplace("covcheck_theta", std::move(tt));
  if (samples.size() >= 2) {
    const auto d = dudley_diagnostic(samples);
    rep.summary["dudley"] = {{"integral_estimate", jnum(d.integral_estimate)},
                             {"converged", d.converged},
                             {"tail_exponent", d.tail_exponent}};
  }

  const Grid g{T, factor_steps};
  const auto f = build_joint_factor(K, rho, g, Components::YW);
  rep.summary["factor"] = {{"dim", f.dim()}, {"jitter", f.jitter}, {"jitter_escalations", f.jitter_escalations}};
  rep.log.push_back("factorisation: dim " + std::to_string(f.dim()) + ", jitter escalations " +
                    std::to_string(f.jitter_escalations) + ", jitter " + fmt(f.jitter));
  if (n_samples > 0) {
    const auto s = sample_covariance_check(f, ctx.seed, n_samples);
    rep.summary["sample_covariance"] = {{"entries", s.entries},         {"exceed_4se", s.exceed},
                                        {"max_abs_z", jnum(s.max_abs_z)}, {"n_samples", s.n_samples},
                                        {"pass", s.exceed == 0}};
  }

  if (corridor) {
    const auto alphas = corridor->nums("alphas");
    const auto lambdas = corridor->nums("lambdas");
    const auto steps = corridor->count("steps");
    const auto paths = corridor->count("n_paths");
    require_field(steps >= 2, *corridor, "steps", "must be >= 2");
    require_field(paths >= 100, *corridor, "n_paths", "must be >= 100");
    for (double a : alphas) require_field(a > 0.5, *corridor, "alphas", "entries must be > 1/2");
    Table ct({"alpha", "lambda", "steps", "n_paths", "estimate", "std_error", "wilson_lo", "wilson_hi"});
    json rows = json::array();
    for (double a : alphas)
      for (double lam : lambdas) {
        const auto r = corridor_probability(PowerKernel{a}, lam, Grid{T, steps}, ctx.seed, paths, ctx.threads);
        ct.row(a, lam, steps, paths, r.mean, r.std_error, r.wilson->lo, r.wilson->hi);
        rows.push_back({{"alpha", a}, {"lambda", lam}, {"estimate", mc_json(r)}});
      }
    rep.tables.emplace("covcheck_corridor", std::move(ct));
    rep.summary["corridor"] = rows;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Driver

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_file(const std::filesystem::path& p, const std::string& body) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << body;
}

/// Entry point shared by the executable and the tests.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"rough volatility blow-up and Monte Carlo laboratory"};
  app.require_subcommand(1, 1);
  std::string config_path, out_dir = "out";
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  const std::vector<std::string> names{"bound", "volterra", "simulate", "defect", "moment", "covcheck"};
  for (const auto& n : names) {
    auto* sc = app.add_subcommand(n);
    sc->add_option("--config", config_path, "JSON config file")->required();
    sc->add_option("--seed", seed, "master seed (overrides config)");
    sc->add_option("--out", out_dir, "output directory");
    sc->add_option("--threads", threads, "worker threads (results do not depend on it)")->check(CLI::Range(1, 1024));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kExitOk : kExitValidation;
  }
  const std::string sub = app.get_subcommands().front()->get_name();
  const std::string started = utc_now();

  try {
    json cfg;
    {
      std::ifstream is(config_path);
      if (!is) throw ValidationError("--config: cannot open " + config_path);
      try {
        cfg = json::parse(is);
      } catch (const json::parse_error& e) {
        throw ValidationError(std::string("--config: malformed JSON: ") + e.what());
      }
    }
    if (!cfg.is_object()) throw ValidationError("--config: top level must be an object");
    const Node root(cfg, "");
    if (root.has("subcommand") && root.text("subcommand") != sub)
      root.fail("subcommand", "config is for '" + root.text("subcommand") + "', not '" + sub + "'");
    RunContext ctx;
    ctx.seed = seed ? *seed : root.count("seed", 0);
    ctx.threads = threads ? *threads : static_cast<unsigned>(root.count("threads", 1));
    if (ctx.threads < 1) root.fail("threads", "must be >= 1");

    Report rep;
    if (sub == "bound") rep = cmd_bound(root, ctx);
    else if (sub == "volterra") rep = cmd_volterra(root, ctx);
    else if (sub == "simulate") rep = cmd_simulate(root, ctx);
    else if (sub == "defect") rep = cmd_defect(root, ctx);
    else if (sub == "moment") rep = cmd_moment(root, ctx);
    else rep = cmd_covcheck(root, ctx);

    std::filesystem::create_directories(out_dir);
    for (const auto& [stem, table] : rep.tables) write_file(std::filesystem::path(out_dir) / (stem + ".csv"), table.str());
    rep.summary["subcommand"] = sub;
    rep.summary["seed"] = ctx.seed;
    write_file(std::filesystem::path(out_dir) / "summary.json", rep.summary.dump(2) + "\n");
    const json meta{{"subcommand", sub},   {"config", config_path}, {"seed", ctx.seed},
                    {"threads", ctx.threads}, {"started_utc", started}, {"finished_utc", utc_now()}};
    write_file(std::filesystem::path(out_dir) / "meta.json", meta.dump(2) + "\n");
    for (const auto& l : rep.log) err << sub << ": " << l << '\n';
    out << rep.summary.dump(2) << '\n';
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::logic_error& e) {
    // library precondition failures (domain, data, infeasibility)
    err << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  }
}

}  // namespace roughvol::cli
