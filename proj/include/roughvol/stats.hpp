#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "roughvol/errors.hpp"

namespace roughvol {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Provenance attached to every Monte Carlo estimate.
struct MCEcho {
  std::uint64_t master_seed = 0;
  std::size_t steps = 0;
  double horizon = 0.0;
  std::size_t n_paths = 0;
  bool antithetic = false;
};

struct MCResult {
  double mean = 0.0;
  double std_error = 0.0;
  Interval ci95;  // mean +- 1.96 std_error
  std::size_t n_paths = 0;
  std::size_t n_exploded = 0;
  std::optional<Interval> wilson;  // set for proportion estimates
  MCEcho config;
};

inline constexpr double kZ95 = 1.96;

/// Pairwise summation: the result depends only on the input order, never on
/// how the inputs were produced.
inline double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 16) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

/// Wilson score interval for k successes out of n.
inline Interval wilson_interval(std::size_t k, std::size_t n, double z = kZ95) {
  detail::require<DomainError>(n > 0 && k <= n, "wilson_interval: need 0 <= k <= n, n > 0");
  const double nd = static_cast<double>(n);
  const double p = static_cast<double>(k) / nd;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nd;
  const double center = (p + z2 / (2.0 * nd)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nd + z2 / (4.0 * nd * nd)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// Sample mean and standard error of i.i.d. path values. Values are rescaled
/// by their largest magnitude first, so saturated payoffs near 1e300 do not
/// overflow the second moment. With `antithetic`, consecutive pairs are
/// averaged and the error is computed over pair means.
inline MCResult summarize(std::span<const double> values, bool antithetic = false) {
  detail::require<DataError>(!values.empty(), "summarize: no samples");
  std::vector<double> v;
  if (antithetic) {
    detail::require<DataError>(values.size() % 2 == 0, "summarize: antithetic sampling needs an even path count");
    v.resize(values.size() / 2);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = 0.5 * (values[2 * k] + values[2 * k + 1]);
  } else {
    v.assign(values.begin(), values.end());
  }
  double scale = 0.0;
  for (double x : v) {
    detail::require<DataError>(std::isfinite(x), "summarize: nonfinite sample");
    scale = std::max(scale, std::abs(x));
  }
  MCResult r;
  r.n_paths = values.size();
  if (scale == 0.0) {
    r.ci95 = {0.0, 0.0};
    return r;
  }
  const double n = static_cast<double>(v.size());
  for (double& x : v) x /= scale;
  const double mean = pairwise_sum(v) / n;
  for (double& x : v) x = (x - mean) * (x - mean);
  const double var = v.size() > 1 ? pairwise_sum(v) / (n - 1.0) : 0.0;
  r.mean = mean * scale;
  r.std_error = std::sqrt(var / n) * scale;
  r.ci95 = {r.mean - kZ95 * r.std_error, r.mean + kZ95 * r.std_error};
  return r;
}

/// Proportion estimate with both the normal and the Wilson interval.
inline MCResult summarize_proportion(std::size_t hits, std::size_t n) {
  detail::require<DomainError>(n > 0 && hits <= n, "summarize_proportion: need 0 <= hits <= n");
  MCResult r;
  r.n_paths = n;
  r.mean = static_cast<double>(hits) / static_cast<double>(n);
  r.std_error = std::sqrt(r.mean * (1.0 - r.mean) / static_cast<double>(n));
  r.ci95 = {r.mean - kZ95 * r.std_error, r.mean + kZ95 * r.std_error};
  r.wilson = wilson_interval(hits, n);
  return r;
}

}  // namespace roughvol
