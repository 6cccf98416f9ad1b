#pragma once

// Deterministic nonlinear Volterra equations
//
//   y(t) = z(t) + int_0^t K(t-s) b(s, y(s)) ds,   K(r) = alpha r^(alpha-1),
//
// solved by explicit left-point product integration, together with the
// comparison check and the explicit upper bound on the blow-up time
//
//   T_inf ^ T <= inf_{x >= 0} h(x) + (1/alpha) int_x^inf (w / b0(w))^(1/alpha) dw / w,
//
// with h(x) = sup{t : z(t) <= x} and b0 = inf_{t in [0,T]} b(t, .).

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "roughvol/errors.hpp"
#include "roughvol/model_core.hpp"

namespace roughvol {

inline constexpr double kDefaultExplosionCap = 1e12;

/// z(t) = lambda t - offset
struct AffineForcing {
  double lambda = 1.0;
  double offset = 1.0;

  [[nodiscard]] double operator()(double t) const { return lambda * t - offset; }
};

/// Forcing given by samples, linearly interpolated between them.
struct SampledForcing {
  std::vector<double> times;
  std::vector<double> values;

  [[nodiscard]] double operator()(double t) const {
    if (t <= times.front()) return values.front();
    if (t >= times.back()) return values.back();
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const auto i = static_cast<std::size_t>(it - times.begin());
    const double w = (t - times[i - 1]) / (times[i] - times[i - 1]);
    return (1.0 - w) * values[i - 1] + w * values[i];
  }
};

using Forcing = std::variant<AffineForcing, SampledForcing>;

/// b(t, y) = min(multiplier * sigma(t, y), cap)
struct Nonlinearity {
  VolSpec vol;
  double multiplier = 1.0;
  std::optional<double> cap{};

  [[nodiscard]] double operator()(double t, double y) const {
    const double v = multiplier * eval_sigma(vol, t, y);
    return cap ? std::min(v, *cap) : v;
  }

  /// log inf_{t in [0, horizon]} b(t, w)
  [[nodiscard]] double log_time_infimum(double w, double horizon) const {
    const double l = std::log(multiplier) + vol.log_time_infimum(w, horizon);
    return cap ? std::min(l, std::log(*cap)) : l;
  }
};

struct VolterraProblem {
  PowerKernel kernel;
  Forcing forcing = AffineForcing{};
  Nonlinearity b;

  void validate() const {
    kernel.validate();
    detail::require<DomainError>(std::isfinite(b.multiplier) && b.multiplier > 0.0,
                                 "nonlinearity multiplier must be > 0");
    if (b.cap)
      detail::require<DomainError>(std::isfinite(*b.cap) && *b.cap > 0.0, "cap level must be > 0");
    if (const auto* s = std::get_if<SampledForcing>(&forcing)) {
      detail::require<DataError>(s->times.size() >= 2 && s->times.size() == s->values.size(),
                                 "sampled forcing needs >= 2 matching samples");
      for (std::size_t i = 1; i < s->times.size(); ++i)
        detail::require<DataError>(s->times[i] > s->times[i - 1],
                                   "sampled forcing times must be increasing");
    }
  }

  [[nodiscard]] double z(double t) const {
    return std::visit([t](const auto& f) { return f(t); }, forcing);
  }
};

struct LevelCrossing {
  double level = 0.0;
  double time = 0.0;
};

struct BlowUpReport {
  bool exploded = false;
  double t_cap = kInf;                       // first node with y > cap
  std::vector<LevelCrossing> level_crossings;  // crossed levels only, ascending
  std::size_t grid_steps = 0;
  double horizon = 0.0;
  std::vector<double> solution_path;  // y at nodes 0..k, truncated at explosion
};

namespace detail {

/// y_i = forcing_i + sum_{j<i} weights[i-j-1] b(j, t_j, y_j). `forcing` holds
/// the node values of z (size steps+1). Records explosion and level crossings.
template <class B>
BlowUpReport product_integration_solve(std::span<const double> forcing, double dt,
                                       std::span<const double> weights, B&& b, double cap,
                                       std::span<const double> levels, bool keep_path = true) {
  const std::size_t steps = forcing.size() - 1;
  BlowUpReport rep;
  rep.grid_steps = steps;
  rep.horizon = dt * static_cast<double>(steps);
  std::vector<double> bvals(steps + 1);
  std::vector<double> y;
  y.reserve(steps + 1);
  std::size_t next_level = 0;

  for (std::size_t i = 0; i <= steps; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < i; ++j) acc += weights[i - j - 1] * bvals[j];
    const double yi = forcing[i] + acc;
    const double ti = dt * static_cast<double>(i);
    y.push_back(yi);
    while (next_level < levels.size() && yi >= levels[next_level])
      rep.level_crossings.push_back({levels[next_level++], ti});
    if (yi > cap) {
      rep.exploded = true;
      rep.t_cap = ti;
      break;
    }
    bvals[i] = b(i, ti, yi);
  }
  if (keep_path) rep.solution_path = std::move(y);
  return rep;
}

inline void check_levels(std::span<const double> levels) {
  for (std::size_t k = 0; k < levels.size(); ++k) {
    require<DataError>(std::isfinite(levels[k]), "levels must be finite");
    if (k > 0) require<DataError>(levels[k] > levels[k - 1], "levels must be strictly increasing");
  }
}

}  // namespace detail

/// Explicit product-integration solve on a uniform grid of `steps` cells.
/// Stops at the first node where y exceeds `cap` and marks the run exploded.
inline BlowUpReport solve_volterra(const VolterraProblem& problem, double horizon,
                                   std::size_t steps, double cap = kDefaultExplosionCap,
                                   std::span<const double> levels = {}) {
  problem.validate();
  detail::require<DomainError>(steps >= 2, "solve_volterra: steps must be >= 2");
  detail::require<DomainError>(std::isfinite(horizon) && horizon > 0.0, "solve_volterra: horizon must be > 0");
  detail::check_levels(levels);
  if (const auto* s = std::get_if<SampledForcing>(&problem.forcing))
    detail::require<DataError>(s->times.front() <= 0.0 && s->times.back() >= horizon * (1 - 1e-12),
                               "sampled forcing must cover the solve horizon");

  const double dt = horizon / static_cast<double>(steps);
  std::vector<double> z(steps + 1);
  double zmax = 0.0;
  for (std::size_t i = 0; i <= steps; ++i) {
    z[i] = problem.z(dt * static_cast<double>(i));
    detail::require<DataError>(std::isfinite(z[i]), "solve_volterra: nonfinite forcing value");
    zmax = std::max(zmax, std::abs(z[i]));
  }
  detail::require<PreconditionError>(cap > zmax, "solve_volterra: cap must exceed sup |z|");

  const auto w = product_weights(problem.kernel.alpha, dt, steps);
  return detail::product_integration_solve(
      z, dt, w, [&](std::size_t, double t, double y) { return problem.b(t, y); }, cap, levels);
}

/// First-order Richardson extrapolation from a grid and its refinement by 2.
inline double richardson_first_order(double coarse, double fine) { return 2.0 * fine - coarse; }

enum class Direction { Sub, Super };

struct ComparisonResult {
  bool holds = false;
  double max_violation = 0.0;  // worst signed violation; <= 0 means strict
};

/// Checks u(t_i) <= (Sub) or >= (Super) z(t_i) + sum_j w_ij b(t_j, u(t_j)) at
/// every node of the uniform grid with `u.size() - 1 == steps` cells.
inline ComparisonResult check_comparison(std::span<const double> u, const VolterraProblem& problem,
                                         double horizon, std::size_t steps, Direction direction,
                                         double tol = 1e-9) {
  problem.validate();
  detail::require<DataError>(steps >= 1 && u.size() == steps + 1,
                             "check_comparison: candidate does not match the grid");
  for (double v : u) detail::require<DataError>(std::isfinite(v), "check_comparison: nonfinite candidate");

  const double dt = horizon / static_cast<double>(steps);
  const auto w = product_weights(problem.kernel.alpha, dt, steps);
  std::vector<double> bvals(steps + 1);
  ComparisonResult out;
  out.max_violation = -kInf;
  double scale = 1.0;
  for (std::size_t i = 0; i <= steps; ++i) {
    const double ti = dt * static_cast<double>(i);
    double rhs = problem.z(ti);
    for (std::size_t j = 0; j < i; ++j) rhs += w[i - j - 1] * bvals[j];
    const double viol = direction == Direction::Sub ? u[i] - rhs : rhs - u[i];
    out.max_violation = std::max(out.max_violation, viol);
    scale = std::max(scale, std::abs(u[i]));
    bvals[i] = problem.b(ti, u[i]);
  }
  out.holds = out.max_violation <= tol * scale;
  return out;
}

// ---------------------------------------------------------------------------
// Explosion-time bound

struct ExplosionBound {
  double bound = kInf;
  double minimizer_x = std::numeric_limits<double>::quiet_NaN();
  double h_value = kInf;
  double integral_value = kInf;
  bool osgood_finite = false;
};

namespace detail {

inline const AffineForcing& require_affine_monotone(const VolterraProblem& problem) {
  const auto* z = std::get_if<AffineForcing>(&problem.forcing);
  require<PreconditionError>(z != nullptr, "explosion bound requires affine forcing z(t) = lambda t - offset");
  require<PreconditionError>(std::isfinite(z->lambda) && z->lambda >= 0.0,
                             "explosion bound requires nondecreasing forcing (lambda >= 0)");
  return *z;
}

/// h(x) = sup{t >= 0 : z(t) <= x}; 0 when z(0) > x.
inline double level_time(const AffineForcing& z, double x) {
  if (z(0.0) > x) return 0.0;
  if (z.lambda == 0.0) return kInf;
  return (x + z.offset) / z.lambda;
}

/// (1/alpha) int_x^inf (w / b0(w))^(1/alpha) dw / w
inline OsgoodResult tail_integral(const VolterraProblem& problem, double x, double horizon) {
  if (problem.b.cap) return {};
  auto r = osgood_check(problem.b.vol, problem.kernel.alpha, x, horizon, problem.b.multiplier);
  if (r.finite) r.value /= problem.kernel.alpha;
  return r;
}

}  // namespace detail

/// Minimises the bound objective over x >= 0: log-spaced scan, then
/// golden-section refinement around the best local minima of the scan. Any
/// evaluated objective value is itself a valid bound.
inline ExplosionBound explosion_bound(const VolterraProblem& problem, double horizon) {
  problem.validate();
  detail::require<DomainError>(std::isfinite(horizon) && horizon > 0.0, "explosion_bound: T must be > 0");
  const AffineForcing& z = detail::require_affine_monotone(problem);

  ExplosionBound out;
  out.osgood_finite = detail::tail_integral(problem, 1.0, horizon).finite;
  if (!out.osgood_finite) return out;

  auto record = [&](double x, double h, double integral) {
    if (h + integral < out.bound) {
      out.bound = h + integral;
      out.minimizer_x = x;
      out.h_value = h;
      out.integral_value = integral;
    }
  };

  if (z.lambda == 0.0) {
    // h is 0 below z(0) and infinite above; I is decreasing, so the infimum
    // is approached as x -> z(0)-.
    const double z0 = z(0.0);
    if (z0 > 0.0) record(z0, 0.0, detail::tail_integral(problem, z0, horizon).value);
    return out;
  }

  auto objective = [&](double x) {
    const auto r = detail::tail_integral(problem, x, horizon);
    if (!r.finite) return kInf;
    return detail::level_time(z, x) + r.value;
  };

  if (const double f0 = objective(0.0); std::isfinite(f0))
    record(0.0, detail::level_time(z, 0.0), f0 - detail::level_time(z, 0.0));

  double x_hi = 1.0;
  for (int k = 0; k < 200; ++k) {
    if (objective(2.0 * x_hi) > objective(x_hi)) break;
    x_hi *= 2.0;
  }
  x_hi *= 4.0;

  constexpr std::size_t kScan = 121;
  const double x_lo = 1e-6;
  std::vector<double> xs(kScan), fs(kScan);
  for (std::size_t k = 0; k < kScan; ++k) {
    xs[k] = x_lo * std::pow(x_hi / x_lo, static_cast<double>(k) / (kScan - 1));
    fs[k] = objective(xs[k]);
  }

  std::vector<std::size_t> minima;
  for (std::size_t k = 0; k < kScan; ++k) {
    const bool left = k == 0 || fs[k] <= fs[k - 1];
    const bool right = k + 1 == kScan || fs[k] <= fs[k + 1];
    if (left && right && std::isfinite(fs[k])) minima.push_back(k);
  }
  std::sort(minima.begin(), minima.end(), [&](auto a, auto b) { return fs[a] < fs[b]; });
  if (minima.size() > 3) minima.resize(3);

  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (std::size_t k : minima) {
    double a = k == 0 ? 0.0 : xs[k - 1];
    double b = k + 1 == kScan ? xs[k] : xs[k + 1];
    double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
    double fc = objective(c), fd = objective(d);
    for (int it = 0; it < 200 && (b - a) > 1e-13 * std::max(1.0, b); ++it) {
      if (fc <= fd) {
        b = d; d = c; fd = fc;
        c = b - inv_phi * (b - a); fc = objective(c);
      } else {
        a = c; c = d; fc = fd;
        d = a + inv_phi * (b - a); fd = objective(d);
      }
    }
    for (double x : {xs[k], c, d}) {
      const double h = detail::level_time(z, x);
      const auto r = detail::tail_integral(problem, x, horizon);
      if (r.finite) record(x, h, r.value);
    }
  }
  return out;
}

/// The discrete form of the bound before the limit R -> 1:
///   h(x) + sum_{n >= 1} (x (R^n - R^(n-1)) / b0(x R^(n-1)))^(1/alpha).
/// The series is summed until a geometric tail bound (valid once the term
/// ratios are nonincreasing and below 1) is negligible; returns +inf when it
/// diverges within `max_levels` terms.
inline double explosion_bound_geometric(const VolterraProblem& problem, double horizon, double x,
                                        double R, std::size_t max_levels = 1'000'000) {
  problem.validate();
  detail::require<DomainError>(R > 1.0 && std::isfinite(R), "explosion_bound_geometric: R must be > 1");
  detail::require<DomainError>(x > 0.0 && std::isfinite(x), "explosion_bound_geometric: x must be > 0");
  const AffineForcing& z = detail::require_affine_monotone(problem);

  const double h = detail::level_time(z, x);
  if (!std::isfinite(h)) return kInf;

  const double inv_a = 1.0 / problem.kernel.alpha;
  const double log_x = std::log(x), log_r = std::log(R), log_rm1 = std::log(R - 1.0);
  double sum = 0.0, prev_term = 0.0, prev_ratio = kInf;
  for (std::size_t n = 1; n <= max_levels; ++n) {
    const double log_w = log_x + static_cast<double>(n - 1) * log_r;
    const double log_b = problem.b.log_time_infimum(std::exp(log_w), horizon);
    if (log_b == -kInf) return kInf;
    const double term = std::exp((log_w + log_rm1 - log_b) * inv_a);
    if (!std::isfinite(term)) return kInf;
    sum += term;
    if (term == 0.0) return h + sum;
    if (n > 1) {
      const double ratio = term / prev_term;
      if (ratio < 1.0 && ratio <= prev_ratio * (1.0 + 1e-12)) {
        const double tail = term * ratio / (1.0 - ratio);
        if (tail <= 1e-14 * (h + sum) || n == max_levels) return h + sum + tail;
      }
      prev_ratio = ratio;
    }
    prev_term = term;
  }
  return kInf;
}

}  // namespace roughvol
