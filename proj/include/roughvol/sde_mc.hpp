#pragma once

// Monte Carlo engines for the price process dS/S = sigma(t, Y) dW and for the
// drifted Volterra equations obtained from it by Girsanov transforms:
//
//  * hitting probabilities P^(tau_n <= T) of Y = Y0 + int K rho sigma(Y) ds,
//    whose limit in n is the martingale defect (S0 - E[S_T]) / S0;
//  * the truncated-feedback lower bound on ln E[S_T^m / S0^m] from the
//    variational representation, with the capped control drift
//    (rho m + gamma) sigma ^ n up to the barrier time theta_A.
//
// The left-point log-Euler scheme for S is an exact discrete martingale, so a
// plain estimate of E[S_T] cannot exhibit the defect on any fixed grid; the
// defect is measured only through the hitting-probability identity.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <vector>

#include "roughvol/errors.hpp"
#include "roughvol/gauss_path.hpp"
#include "roughvol/model_core.hpp"
#include "roughvol/parallel.hpp"
#include "roughvol/stats.hpp"
#include "roughvol/volterra_det.hpp"

namespace roughvol {

struct MCConfig {
  std::size_t n_paths = 10'000;
  Grid grid;
  std::uint64_t master_seed = 0;
  double explosion_cap = kDefaultExplosionCap;
  bool antithetic = false;
  unsigned threads = 1;

  void validate() const {
    grid.validate();
    detail::require<DomainError>(n_paths >= 1, "n_paths must be >= 1");
    detail::require<DomainError>(explosion_cap > 0.0, "explosion_cap must be > 0");
    if (antithetic) detail::require<DomainError>(n_paths % 2 == 0, "antithetic sampling needs an even n_paths");
  }

  [[nodiscard]] MCEcho echo() const { return {master_seed, grid.n, grid.horizon, n_paths, antithetic}; }
};

namespace detail {

inline void check_model_grid(const ModelParams& model, const MCConfig& mc) {
  model.validate();
  mc.validate();
  require<DomainError>(std::abs(mc.grid.horizon - model.horizon) <= 1e-12 * model.horizon,
                       "MC grid horizon must equal the model horizon T");
}

inline MCResult finish(std::span<const double> values, const MCConfig& mc, std::size_t exploded = 0) {
  MCResult r = summarize(values, mc.antithetic);
  r.n_exploded = exploded;
  r.config = mc.echo();
  return r;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Price simulation

struct PriceSample {
  std::vector<double> terminal;     // S_T per path
  std::vector<double> running_max;  // max_i S_{t_i} per path (including S0)
  MCResult mean_terminal;
};

/// ln S_{i+1} = ln S_i + sigma(t_i, Y_{t_i}) dW_i - sigma(t_i, Y_{t_i})^2 dt / 2
/// on exact joint (Y, W) draws.
inline PriceSample simulate_price_paths(const ModelParams& model, const MCConfig& mc) {
  detail::check_model_grid(model, mc);
  const JointFactor factor = build_joint_factor(model.kernel, model.rho, mc.grid, Components::YW);
  const std::size_t n = mc.grid.n;
  const double dt = mc.grid.dt();
  PriceSample out;
  out.terminal.resize(mc.n_paths);
  out.running_max.resize(mc.n_paths);
  parallel_for(mc.n_paths, mc.threads, [&](std::size_t b, std::size_t e) {
    Eigen::VectorXd xi, x;
    for (std::size_t k = b; k < e; ++k) {
      draw_nodes(factor, mc.master_seed, k, mc.antithetic, xi, x);
      double log_s = std::log(model.s0), max_log = log_s, w_prev = 0.0, y = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = mc.grid.time(i);
        const double w = x[static_cast<Eigen::Index>(n + i)];
        const double sig = eval_sigma(model.vol, t, y);
        log_s += sig * (w - w_prev) - 0.5 * eval_sigma_squared(model.vol, t, y) * dt;
        max_log = std::max(max_log, log_s);
        w_prev = w;
        y = x[static_cast<Eigen::Index>(i)];
      }
      out.terminal[k] = std::exp(log_s);
      out.running_max[k] = std::exp(max_log);
    }
  });
  out.mean_terminal = detail::finish(out.terminal, mc);
  return out;
}

struct ConditionalEstimate {
  MCResult conditional;  // E[S_T | Z] / S0 averaged over paths
  MCResult plain;        // S_T / S0 on the same draws
};

/// Mixing estimator: conditionally on Z the price is a stochastic exponential
/// of the W_bar part, so E[S_T | Z] / S0 = exp(rho sum sigma_i dZ_i
/// - rho^2 sum sigma_i^2 dt / 2). With left-point sigma_i it has expectation
/// exactly 1 on any grid. The plain estimator is evaluated on the same
/// (Y, W, Z) draws for a paired comparison.
inline ConditionalEstimate conditional_price_estimator(const ModelParams& model, const MCConfig& mc) {
  detail::check_model_grid(model, mc);
  const JointFactor factor = build_joint_factor(model.kernel, model.rho, mc.grid, Components::YWZ);
  const std::size_t n = mc.grid.n;
  const double dt = mc.grid.dt();
  const double rho = model.rho;
  std::vector<double> cond(mc.n_paths), plain(mc.n_paths);
  parallel_for(mc.n_paths, mc.threads, [&](std::size_t b, std::size_t e) {
    Eigen::VectorXd xi, x;
    for (std::size_t k = b; k < e; ++k) {
      draw_nodes(factor, mc.master_seed, k, mc.antithetic, xi, x);
      double sdz = 0.0, sdw = 0.0, s2 = 0.0, w_prev = 0.0, z_prev = 0.0, y = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = mc.grid.time(i);
        const double w = x[static_cast<Eigen::Index>(n + i)];
        const double z = x[static_cast<Eigen::Index>(2 * n + i)];
        const double sig = eval_sigma(model.vol, t, y);
        sdz += sig * (z - z_prev);
        sdw += sig * (w - w_prev);
        s2 += eval_sigma_squared(model.vol, t, y) * dt;
        w_prev = w;
        z_prev = z;
        y = x[static_cast<Eigen::Index>(i)];
      }
      cond[k] = rho == 0.0 ? 1.0 : std::exp(rho * sdz - 0.5 * rho * rho * s2);
      plain[k] = std::exp(sdw - 0.5 * s2);
    }
  });
  return {detail::finish(cond, mc), detail::finish(plain, mc)};
}

// ---------------------------------------------------------------------------
// Drifted Volterra paths

/// Drift d_j of Y_i = Y0_i + sum_{j<i} w_ij d_j:
///   d_j = min(coeff sigma(t_j, Y_j), cap)   while t_j <= theta_A,
///   d_j = post_barrier_coeff sigma(t_j, Y_j) afterwards,
/// where theta_A is the first node with Y0 >= barrier. Without a barrier the
/// first branch applies throughout; without a cap it is not truncated.
struct DriftSpec {
  double coeff = 0.0;
  std::optional<double> cap;
  std::optional<double> barrier;
  double post_barrier_coeff = 0.0;
};

namespace detail {

/// First node index with y0 >= barrier, or y0.size() when never reached.
inline std::size_t barrier_index(std::span<const double> y0, std::optional<double> barrier) {
  if (!barrier) return y0.size();
  for (std::size_t i = 0; i < y0.size(); ++i)
    if (y0[i] >= *barrier) return i;
  return y0.size();
}

inline BlowUpReport drifted_solve(const ModelParams& model, const DriftSpec& drift,
                                  std::span<const double> y0, std::span<const double> weights, double dt,
                                  double explosion_cap, std::span<const double> levels, bool keep_path) {
  const std::size_t hit = barrier_index(y0, drift.barrier);
  auto b = [&](std::size_t j, double t, double y) {
    const double sig = eval_sigma(model.vol, t, y);
    if (j > hit) return drift.post_barrier_coeff * sig;
    const double d = drift.coeff * sig;
    return drift.cap ? std::min(d, *drift.cap) : d;
  };
  return product_integration_solve(y0, dt, weights, b, explosion_cap, levels, keep_path);
}

inline void y0_nodes(const JointFactor& factor, std::uint64_t seed, std::uint64_t index, bool antithetic,
                     Eigen::VectorXd& xi, Eigen::VectorXd& x, std::vector<double>& y0) {
  draw_nodes(factor, seed, index, antithetic, xi, x);
  const std::size_t n = factor.grid.n;
  y0.assign(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) y0[i + 1] = x[static_cast<Eigen::Index>(i)];
}

}  // namespace detail

/// Per-path solutions of the drifted Volterra recursion driven by a fresh
/// Gaussian Y0 (the same law as Y under the original measure).
inline std::vector<BlowUpReport> drifted_volterra_paths(const ModelParams& model, const DriftSpec& drift,
                                                        const MCConfig& mc, std::span<const double> levels = {},
                                                        bool keep_paths = true) {
  detail::check_model_grid(model, mc);
  detail::check_levels(levels);
  if (drift.cap) detail::require<DomainError>(*drift.cap > 0.0, "drift cap must be > 0");
  const JointFactor factor = build_joint_factor(model.kernel, 0.0, mc.grid, Components::Y);
  const auto w = product_weights(model.kernel.alpha, mc.grid.dt(), mc.grid.n);
  std::vector<BlowUpReport> out(mc.n_paths);
  parallel_for(mc.n_paths, mc.threads, [&](std::size_t b, std::size_t e) {
    Eigen::VectorXd xi, x;
    std::vector<double> y0;
    for (std::size_t k = b; k < e; ++k) {
      detail::y0_nodes(factor, mc.master_seed, k, mc.antithetic, xi, x, y0);
      out[k] = detail::drifted_solve(model, drift, y0, w, mc.grid.dt(), mc.explosion_cap, levels, keep_paths);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Martingale defect

struct DefectLadder {
  std::size_t steps = 0;
  std::vector<MCResult> hit_probs;  // one per level
};

struct DefectReport {
  std::vector<double> levels;
  std::vector<DefectLadder> ladders;  // one per grid, coarsest first
  double defect_estimate = 0.0;       // S0 * hit probability at the largest level, finest grid
};

/// P^(tau_n <= T) for each level n, where Y = Y0 + int K rho sigma(Y) ds, on
/// `refinements` grids (mc.grid.n, 2 mc.grid.n, ...). Within a grid the paths
/// are common to all levels, so the ladder is nonincreasing exactly.
inline DefectReport martingale_defect(const ModelParams& model, std::span<const double> levels,
                                      const MCConfig& mc, std::size_t refinements = 2) {
  detail::require<DomainError>(!levels.empty(), "martingale_defect: empty level list");
  for (std::size_t k = 0; k < levels.size(); ++k) {
    detail::require<DomainError>(levels[k] > 0.0, "martingale_defect: levels must be positive");
    if (k > 0) detail::require<DomainError>(levels[k] > levels[k - 1], "martingale_defect: levels must increase");
  }
  detail::require<DomainError>(levels.back() < mc.explosion_cap, "martingale_defect: levels must lie below the explosion cap");
  detail::require<DomainError>(refinements >= 1, "martingale_defect: need at least one grid");

  DefectReport rep;
  rep.levels.assign(levels.begin(), levels.end());
  const DriftSpec drift{model.rho, std::nullopt, std::nullopt, 0.0};
  for (std::size_t g = 0; g < refinements; ++g) {
    MCConfig cfg = mc;
    cfg.grid.n = mc.grid.n << g;
    const auto paths = drifted_volterra_paths(model, drift, cfg, levels, false);
    DefectLadder ladder{cfg.grid.n, {}};
    std::size_t exploded = 0;
    for (const auto& p : paths) exploded += p.exploded ? 1 : 0;
    for (std::size_t l = 0; l < levels.size(); ++l) {
      std::size_t hits = 0;
      for (const auto& p : paths) hits += p.level_crossings.size() > l ? 1 : 0;
      MCResult r = summarize_proportion(hits, cfg.n_paths);
      r.n_exploded = exploded;
      r.config = cfg.echo();
      ladder.hit_probs.push_back(r);
    }
    rep.ladders.push_back(std::move(ladder));
  }
  rep.defect_estimate = model.s0 * rep.ladders.back().hit_probs.back().mean;
  return rep;
}

// ---------------------------------------------------------------------------
// Moment explosion

/// Midpoint of the feasible interval (-rho m, sqrt(m^2 - m)) for gamma with
/// rho m + gamma > 0 and m^2 - m - gamma^2 > 0; the interval is nonempty iff
/// rho^2 < (m - 1) / m.
inline double choose_gamma(double rho, double m) {
  detail::require<DomainError>(std::isfinite(m) && m > 1.0, "choose_gamma: m must be > 1");
  detail::require<DomainError>(std::isfinite(rho) && rho <= 0.0 && rho >= -1.0,
                               "choose_gamma: rho must lie in [-1, 0]");
  if (!(rho * rho < (m - 1.0) / m)) {
    std::ostringstream msg;
    msg << "infeasible moment exponent: need rho^2 < (m-1)/m, got rho^2 = " << rho * rho
        << " >= (m-1)/m = " << (m - 1.0) / m;
    throw InfeasibleError(msg.str());
  }
  const double gamma = 0.5 * (-rho * m + std::sqrt(m * m - m));
  if (!(rho * m + gamma > 0.0 && m * m - m - gamma * gamma > 0.0))
    throw NumericalError("choose_gamma: feasible interval too narrow to represent in double precision");
  return gamma;
}

/// Control parameters of the truncated feedback v = gamma sigma, capped so
/// that the total drift (rho m + gamma) sigma never exceeds cap_n, switched off
/// after the barrier time of Y0 at level barrier_A.
class ControlConfig {
 public:
  ControlConfig(double rho, double m, double gamma, double cap_n, double barrier_A)
      : m_(m), gamma_(gamma), cap_n_(cap_n), barrier_A_(barrier_A) {
    detail::require<DomainError>(std::isfinite(m) && m > 1.0, "control: m must be > 1");
    detail::require<DomainError>(std::isfinite(cap_n) && cap_n > 0.0, "control: cap_n must be > 0");
    detail::require<DomainError>(barrier_A > 0.0, "control: barrier_A must be > 0");
    check_feasible(rho);
  }

  void check_feasible(double rho) const {
    detail::require<InfeasibleError>(rho * m_ + gamma_ > 0.0, "control: need rho m + gamma > 0");
    detail::require<InfeasibleError>(m_ * m_ - m_ - gamma_ * gamma_ > 0.0, "control: need m^2 - m - gamma^2 > 0");
  }

  [[nodiscard]] double m() const { return m_; }
  [[nodiscard]] double gamma() const { return gamma_; }
  [[nodiscard]] double cap_n() const { return cap_n_; }
  [[nodiscard]] double barrier_A() const { return barrier_A_; }
  /// (m^2 - m - gamma^2) / 2 > 0
  [[nodiscard]] double payoff_rate() const { return 0.5 * (m_ * m_ - m_ - gamma_ * gamma_); }

 private:
  double m_, gamma_, cap_n_, barrier_A_;
};

namespace detail {

/// 1{theta_A > T} (m^2 - m - gamma^2)/2 sum_i sigma^2(t_i, Y_i) dt for one path.
/// Paths that exceed the explosion cap keep their accumulated payoff and earn
/// the saturated rate for the remaining cells.
inline double lower_bound_payoff(const ModelParams& model, const ControlConfig& ctrl, const DriftSpec& drift,
                                 std::span<const double> y0, std::span<const double> weights, const Grid& grid,
                                 double explosion_cap, bool* exploded) {
  *exploded = false;
  if (barrier_index(y0, drift.barrier) < y0.size()) return 0.0;
  const auto rep = drifted_solve(model, drift, y0, weights, grid.dt(), explosion_cap, {}, true);
  const std::size_t n = grid.n;
  const std::size_t last = rep.exploded ? rep.solution_path.size() - 1 : n;
  double acc = 0.0;
  for (std::size_t i = 0; i < last && i < n; ++i)
    acc += eval_sigma_squared(model.vol, grid.time(i), rep.solution_path[i]) * grid.dt();
  if (rep.exploded) {
    *exploded = true;
    acc += static_cast<double>(n - last) * kSigmaCeiling * grid.dt();
  }
  return ctrl.payoff_rate() * acc;
}

}  // namespace detail

struct LowerBoundPaths {
  std::vector<double> payoff;           // per path index
  std::vector<unsigned char> exploded;  // 1 where the controlled path hit the explosion cap
};

/// Per-path payoffs of the capped feedback control (see ControlConfig).
inline LowerBoundPaths boue_dupuis_payoffs(const ModelParams& model, const ControlConfig& ctrl, const MCConfig& mc) {
  detail::check_model_grid(model, mc);
  ctrl.check_feasible(model.rho);
  const JointFactor factor = build_joint_factor(model.kernel, 0.0, mc.grid, Components::Y);
  const auto w = product_weights(model.kernel.alpha, mc.grid.dt(), mc.grid.n);
  const double rm = model.rho * ctrl.m();
  const DriftSpec drift{rm + ctrl.gamma(), ctrl.cap_n(), ctrl.barrier_A(), rm};
  LowerBoundPaths out{std::vector<double>(mc.n_paths), std::vector<unsigned char>(mc.n_paths, 0)};
  parallel_for(mc.n_paths, mc.threads, [&](std::size_t b, std::size_t e) {
    Eigen::VectorXd xi, x;
    std::vector<double> y0;
    for (std::size_t k = b; k < e; ++k) {
      detail::y0_nodes(factor, mc.master_seed, k, mc.antithetic, xi, x, y0);
      bool ex = false;
      out.payoff[k] = detail::lower_bound_payoff(model, ctrl, drift, y0, w, mc.grid, mc.explosion_cap, &ex);
      out.exploded[k] = ex ? 1 : 0;
    }
  });
  return out;
}

/// Monte Carlo estimate of the lower bound on ln E[S_T^m / S0^m] obtained with
/// the capped feedback control.
inline MCResult boue_dupuis_lower_bound(const ModelParams& model, const ControlConfig& ctrl, const MCConfig& mc) {
  const auto paths = boue_dupuis_payoffs(model, ctrl, mc);
  std::size_t n_ex = 0;
  for (auto v : paths.exploded) n_ex += v;
  return detail::finish(paths.payoff, mc, n_ex);
}

/// E[(S_T ^ c)^m] for each cap c on common price paths.
inline std::vector<MCResult> truncated_moment(const ModelParams& model, double m, std::span<const double> caps,
                                              const MCConfig& mc) {
  detail::require<DomainError>(std::isfinite(m) && m > 0.0, "truncated_moment: m must be > 0");
  detail::require<DomainError>(!caps.empty(), "truncated_moment: empty cap list");
  for (std::size_t k = 0; k < caps.size(); ++k) {
    detail::require<DomainError>(caps[k] > 0.0, "truncated_moment: caps must be positive");
    if (k > 0) detail::require<DomainError>(caps[k] > caps[k - 1], "truncated_moment: caps must increase");
  }
  const PriceSample sample = simulate_price_paths(model, mc);
  std::vector<MCResult> out;
  std::vector<double> v(mc.n_paths);
  for (double c : caps) {
    for (std::size_t k = 0; k < mc.n_paths; ++k) v[k] = std::pow(std::min(sample.terminal[k], c), m);
    out.push_back(detail::finish(v, mc));
  }
  return out;
}

}  // namespace roughvol
