#pragma once

// Exact Gaussian simulation of Y_t = int_0^t K(t-s) dZ_s jointly with the
// Brownian motions W and Z = rho W + rho_bar W_bar, on a uniform grid, by
// Cholesky factorisation of the joint covariance of the node values.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "roughvol/errors.hpp"
#include "roughvol/model_core.hpp"
#include "roughvol/parallel.hpp"
#include "roughvol/rng.hpp"
#include "roughvol/stats.hpp"

namespace roughvol {

struct Grid {
  double horizon = 1.0;
  std::size_t n = 2;

  [[nodiscard]] double dt() const { return horizon / static_cast<double>(n); }
  [[nodiscard]] double time(std::size_t i) const {
    return i == n ? horizon : horizon * static_cast<double>(i) / static_cast<double>(n);
  }

  void validate() const {
    detail::require<DomainError>(std::isfinite(horizon) && horizon > 0.0, "grid horizon T must be > 0");
    detail::require<DomainError>(n >= 2, "grid must have n >= 2 steps");
  }
};

/// Which node vectors the factor covers. The ordering of the stacked vector is
/// always (Y_{t_1..t_n}, W_{t_1..t_n}, Z_{t_1..t_n}) truncated to the chosen
/// components; since the Cholesky factor of a leading block is the leading
/// block of the factor, Z drawn through the YWZ factor has the exact
/// conditional law given (Y, W).
enum class Components { Y, YW, YWZ };

struct JointFactor {
  PowerKernel kernel;
  double rho = 0.0;
  Grid grid;
  Components components = Components::YW;
  Eigen::MatrixXd lower;
  double jitter = 0.0;  // absolute diagonal jitter that made the factorisation succeed
  int jitter_escalations = 0;

  [[nodiscard]] std::size_t blocks() const {
    return components == Components::Y ? 1 : components == Components::YW ? 2 : 3;
  }
  [[nodiscard]] std::size_t dim() const { return blocks() * grid.n; }
};

/// Joint covariance of the stacked node vector (see Components).
inline Eigen::MatrixXd joint_covariance(const PowerKernel& kernel, double rho, const Grid& grid,
                                        Components components) {
  kernel.validate();
  grid.validate();
  detail::require<DomainError>(rho >= -1.0 && rho <= 1.0, "rho must lie in [-1, 1]");
  const std::size_t n = grid.n;
  const std::size_t nb = components == Components::Y ? 1 : components == Components::YW ? 2 : 3;
  Eigen::MatrixXd cov(nb * n, nb * n);
  auto t = [&](std::size_t i) { return grid.time(i + 1); };

  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) cov(i, j) = cov(j, i) = covariance_YY(kernel, t(i), t(j));
  if (nb >= 2) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        cov(i, n + j) = cov(n + j, i) = cross_cov_YW(kernel, rho, t(i), t(j));
        cov(n + i, n + j) = std::min(t(i), t(j));
      }
  }
  if (nb == 3) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double mn = std::min(t(i), t(j));
        cov(i, 2 * n + j) = cov(2 * n + j, i) = cross_cov_YW(kernel, 1.0, t(i), t(j));
        cov(n + i, 2 * n + j) = cov(2 * n + j, n + i) = rho * mn;
        cov(2 * n + i, 2 * n + j) = mn;
      }
  }
  return cov;
}

/// Lower-triangular factor of the joint covariance. On failure the diagonal is
/// jittered, starting at 1e-14 * max diagonal and escalating by 10x up to
/// 1e-8 * max diagonal, before giving up with a NumericalError.
inline JointFactor build_joint_factor(const PowerKernel& kernel, double rho, const Grid& grid,
                                      Components components = Components::YW) {
  JointFactor f{kernel, rho, grid, components, {}, 0.0, 0};
  const Eigen::MatrixXd cov = joint_covariance(kernel, rho, grid, components);
  const double max_diag = cov.diagonal().maxCoeff();
  const double min_diag = cov.diagonal().minCoeff();

  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    f.lower = llt.matrixL();
    return f;
  }
  for (double rel = 1e-14; rel <= 1e-8 * (1.0 + 1e-9); rel *= 10.0) {
    ++f.jitter_escalations;
    Eigen::MatrixXd jittered = cov;
    jittered.diagonal().array() += rel * max_diag;
    llt.compute(jittered);
    if (llt.info() == Eigen::Success) {
      f.jitter = rel * max_diag;
      f.lower = llt.matrixL();
      return f;
    }
  }
  std::ostringstream msg;
  msg << "covariance factorisation failed after jitter up to 1e-8 * max diagonal"
      << " (dim=" << cov.rows() << ", alpha=" << kernel.alpha << ", rho=" << rho
      << ", max diag=" << max_diag << ", min diag=" << min_diag
      << ", diag ratio=" << max_diag / min_diag << ")";
  throw NumericalError(msg.str());
}

struct PathBundle {
  Grid grid;
  std::vector<double> y;   // Y at nodes 0..n, y[0] = 0
  std::vector<double> dw;  // W increments over the n cells (empty for Components::Y)
  std::vector<double> dz;  // Z increments (Components::YWZ only)
  std::uint64_t master_seed = 0;
  std::uint64_t path_index = 0;
};

/// Stacked node vector L xi for one path. With `antithetic`, odd indices reuse
/// the normals of the preceding even index with flipped sign.
inline void draw_nodes(const JointFactor& factor, std::uint64_t master_seed, std::uint64_t path_index,
                       bool antithetic, Eigen::VectorXd& xi, Eigen::VectorXd& out) {
  const std::uint64_t stream = antithetic ? (path_index & ~std::uint64_t{1}) : path_index;
  const double sign = antithetic && (path_index & 1u) ? -1.0 : 1.0;
  PathStream rng(master_seed, stream);
  xi.resize(static_cast<Eigen::Index>(factor.dim()));
  rng.fill_normals(std::span<double>(xi.data(), static_cast<std::size_t>(xi.size())), sign);
  out.noalias() = factor.lower.triangularView<Eigen::Lower>() * xi;
}

inline PathBundle sample_path(const JointFactor& factor, std::uint64_t master_seed,
                              std::uint64_t path_index, bool antithetic = false) {
  Eigen::VectorXd xi, x;
  draw_nodes(factor, master_seed, path_index, antithetic, xi, x);
  const std::size_t n = factor.grid.n;
  PathBundle p{factor.grid, std::vector<double>(n + 1, 0.0), {}, {}, master_seed, path_index};
  for (std::size_t i = 0; i < n; ++i) p.y[i + 1] = x[static_cast<Eigen::Index>(i)];
  auto increments = [&](std::size_t block) {
    std::vector<double> d(n);
    double prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double cur = x[static_cast<Eigen::Index>(block * n + i)];
      d[i] = cur - prev;
      prev = cur;
    }
    return d;
  };
  if (factor.blocks() >= 2) p.dw = increments(1);
  if (factor.blocks() == 3) p.dz = increments(2);
  return p;
}

/// Paths first_index .. first_index + count - 1. Each bundle depends only on
/// (master seed, path index), never on batching or worker count.
inline std::vector<PathBundle> sample_joint_paths(const JointFactor& factor, std::uint64_t master_seed,
                                                  std::size_t count, std::uint64_t first_index = 0,
                                                  bool antithetic = false, unsigned threads = 1) {
  detail::require<DomainError>(count >= 1, "sample_joint_paths: count must be >= 1");
  std::vector<PathBundle> out(count);
  parallel_for(count, threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) out[k] = sample_path(factor, master_seed, first_index + k, antithetic);
  });
  return out;
}

struct SampleCovarianceCheck {
  std::size_t entries = 0;
  std::size_t exceed = 0;   // entries with |empirical - analytic| > z_limit standard errors
  double max_abs_z = 0.0;
  double z_limit = 4.0;
  std::size_t n_samples = 0;
};

/// Compares the empirical second moments E[x_i x_j] of `count` draws with the
/// analytic covariance, entry by entry, in units of the empirical standard
/// error sd(x_i x_j) / sqrt(count) (the mean is known to be zero).
inline SampleCovarianceCheck sample_covariance_check(const JointFactor& factor, std::uint64_t master_seed,
                                                     std::size_t count, double z_limit = 4.0) {
  detail::require<DomainError>(count >= 2, "sample_covariance_check: need at least two draws");
  const auto d = static_cast<Eigen::Index>(factor.dim());
  Eigen::MatrixXd s1 = Eigen::MatrixXd::Zero(d, d), s2 = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd outer(d, d);
  Eigen::VectorXd xi, x;
  for (std::size_t k = 0; k < count; ++k) {
    draw_nodes(factor, master_seed, k, false, xi, x);
    outer.noalias() = x * x.transpose();
    s1 += outer;
    s2 += outer.cwiseProduct(outer);
  }
  const Eigen::MatrixXd cov = joint_covariance(factor.kernel, factor.rho, factor.grid, factor.components);
  const double n = static_cast<double>(count);
  SampleCovarianceCheck out;
  out.z_limit = z_limit;
  out.n_samples = count;
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double m = s1(i, j) / n;
      const double var = std::max(s2(i, j) / n - m * m, 0.0) * n / (n - 1.0);
      const double se = std::sqrt(var / n);
      const double diff = std::abs(m - cov(i, j));
      const double z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : kInf);
      ++out.entries;
      out.max_abs_z = std::max(out.max_abs_z, z);
      if (z > z_limit) ++out.exceed;
    }
  return out;
}

/// out_i = sum_{j<i} w_ij drift_j with the exact kernel cell integrals
/// w_ij = (t_i - t_j)^a - (t_i - t_{j+1})^a; out_0 = 0. Linear in the drift.
inline std::vector<double> convolve_drift(const PowerKernel& kernel, std::span<const double> drift,
                                          const Grid& grid) {
  grid.validate();
  detail::require<DataError>(drift.size() == grid.n, "convolve_drift: need one drift value per grid cell");
  const auto w = product_weights(kernel.alpha, grid.dt(), grid.n);
  std::vector<double> out(grid.n + 1, 0.0);
  for (std::size_t i = 1; i <= grid.n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < i; ++j) acc += w[i - j - 1] * drift[j];
    out[i] = acc;
  }
  return out;
}

/// Cameron-Martin shift y^f(t) = int_0^t K(t-s) f(s) ds on the grid; same
/// numerics as convolve_drift.
inline std::vector<double> cameron_martin_map(const PowerKernel& kernel, std::span<const double> f,
                                              const Grid& grid) {
  return convolve_drift(kernel, f, grid);
}

/// Fraction of paths with lambda t_i - 1 <= Y_{t_i} <= lambda t_i at every node
/// (closed bounds, discrete monitoring), with a Wilson interval.
inline MCResult corridor_probability(const PowerKernel& kernel, double lambda, const Grid& grid,
                                     std::uint64_t master_seed, std::size_t count, unsigned threads = 1) {
  detail::require<DomainError>(count >= 100, "corridor_probability: count must be >= 100");
  detail::require<DomainError>(std::isfinite(lambda), "corridor_probability: lambda must be finite");
  const JointFactor factor = build_joint_factor(kernel, 0.0, grid, Components::Y);
  std::vector<unsigned char> inside(count, 0);
  parallel_for(count, threads, [&](std::size_t b, std::size_t e) {
    Eigen::VectorXd xi, x;
    for (std::size_t k = b; k < e; ++k) {
      draw_nodes(factor, master_seed, k, false, xi, x);
      bool ok = true;
      for (std::size_t i = 0; i < grid.n && ok; ++i) {
        const double lo = lambda * grid.time(i + 1) - 1.0;
        ok = x[static_cast<Eigen::Index>(i)] >= lo && x[static_cast<Eigen::Index>(i)] <= lo + 1.0;
      }
      inside[k] = ok ? 1 : 0;
    }
  });
  std::size_t hits = 0;
  for (auto v : inside) hits += v;
  MCResult r = summarize_proportion(hits, count);
  r.config = {master_seed, grid.n, grid.horizon, count, false};
  return r;
}

}  // namespace roughvol
