#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "idprobe/error.hpp"
#include "idprobe/knn.hpp"
#include "idprobe/random.hpp"
#include "idprobe/tensor_io.hpp"

namespace idprobe {

inline constexpr std::size_t min_fit_points = 20;

struct LineFit {
  double slope = 0.0;
  double rmse = 0.0;
};

/// Least-squares slope of y = slope * x (no intercept).
inline LineFit fit_slope_through_origin(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw input_error("line fit: xs and ys differ in length");
  if (xs.empty()) throw input_error("line fit: no observations");
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += xs[i] * ys[i];
    sxx += xs[i] * xs[i];
  }
  if (sxx == 0.0) throw estimation_error("line fit: degenerate abscissa (all x are zero)");
  LineFit fit;
  fit.slope = sxy / sxx;
  double sse = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - fit.slope * xs[i];
    sse += r * r;
  }
  fit.rmse = std::sqrt(sse / static_cast<double>(xs.size()));
  return fit;
}

/// Wraps bare ratios (r1 = 1, r2 = mu) so they can be fed to estimate().
inline NeighborRatios ratios_from_mu(std::span<const double> mu) {
  NeighborRatios out;
  out.records.reserve(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) out.records.push_back({i, i, i, 1.0, mu[i], mu[i]});
  return out;
}

struct IdEstimate {
  double d_hat = 0.0;
  std::size_t n_total = 0;       // points in the input cloud
  std::size_t n_used = 0;        // points entering the line fit
  std::size_t n_duplicates = 0;  // removed before neighbour search
  double discard_fraction = 0.0;
  double rmse = 0.0;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  std::uint64_t seed = 0;

  friend bool operator==(const IdEstimate&, const IdEstimate&) = default;
};

/// TwoNN estimate from neighbour ratios.
///
/// Sorts mu ascending and assigns the empirical CDF F(mu_(i)) = i / (N + 1).
/// The ceil(discard_fraction * N) largest ratios are dropped, and never fewer
/// than one since the top of the distribution is the noisiest. The estimate is
/// the through-origin slope of -log(1 - F) against log(mu).
inline IdEstimate estimate(const NeighborRatios& ratios, double discard_fraction = 0.1) {
  const std::size_t n = ratios.records.size();
  if (!(discard_fraction >= 0.0 && discard_fraction < 0.5))
    throw input_error("discard fraction must lie in [0, 0.5), got " + std::to_string(discard_fraction));
  if (n < min_fit_points)
    throw input_error("TwoNN needs at least " + std::to_string(min_fit_points) + " points, got " +
                      std::to_string(n));

  std::vector<double> mu = ratios.mus();
  for (std::size_t i = 0; i < n; ++i)
    if (!(mu[i] >= 1.0))
      throw input_error("corrupt neighbour ratios: mu = " + std::to_string(mu[i]) + " < 1 at point " +
                        std::to_string(ratios.records[i].index));
  std::sort(mu.begin(), mu.end());

  const auto tail = static_cast<std::size_t>(std::ceil(discard_fraction * static_cast<double>(n) - 1e-9));
  const std::size_t used = n - std::max<std::size_t>(tail, 1);

  std::vector<double> xs(used), ys(used);
  const double denom = static_cast<double>(n + 1);
  for (std::size_t i = 0; i < used; ++i) {
    xs[i] = std::log(mu[i]);
    ys[i] = -std::log1p(-static_cast<double>(i + 1) / denom);
  }

  LineFit fit;
  try {
    fit = fit_slope_through_origin(xs, ys);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::estimation) throw;
    throw estimation_error("TwoNN estimation failed: every retained ratio is 1 (" + std::to_string(used) +
                           " points), slope undefined");
  }
  if (!(fit.slope > 0.0) || !std::isfinite(fit.slope))
    throw estimation_error("TwoNN estimation failed: slope " + std::to_string(fit.slope) + " over " +
                           std::to_string(used) + " points (rmse " + std::to_string(fit.rmse) + ")");

  IdEstimate est;
  est.d_hat = fit.slope;
  est.n_total = n + ratios.excluded.size();
  est.n_used = used;
  est.n_duplicates = ratios.excluded.size();
  est.discard_fraction = discard_fraction;
  est.rmse = fit.rmse;
  return est;
}

struct EstimateOptions {
  double discard_fraction = 0.1;
  std::optional<std::size_t> subsample_cap = 10000;
  std::uint64_t seed = 0;
  std::size_t bootstrap_rounds = 0;  // 0 disables the interval
  unsigned threads = 0;              // 0 = default_thread_count()
};

namespace detail {

// Linear interpolation between order statistics (the common "type 7" rule).
inline double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline constexpr double bootstrap_fraction = 0.9;

}  // namespace detail

/// Full pipeline: dedup, optional seeded subsample to `subsample_cap`,
/// neighbour search, fit. With bootstrap rounds, each round re-estimates on a
/// 90% subset drawn without replacement, and the 2.5/97.5 percentiles form
/// the interval (widened if needed so it contains d_hat).
inline IdEstimate estimate_cloud(const PointCloud& cloud, const EstimateOptions& opts = {}) {
  DedupResult unique = dedup(cloud);
  PointCloud working = std::move(unique.cloud);
  if (opts.subsample_cap && working.size() > *opts.subsample_cap) {
    const auto keep = sample_without_replacement(working.size(), *opts.subsample_cap, derive_seed(opts.seed, 0));
    working = working.select(keep);
  }

  NeighborRatios ratios = two_nearest(working, opts.threads);
  ratios.excluded = unique.removed;
  IdEstimate est = estimate(ratios, opts.discard_fraction);
  est.n_total = cloud.size();
  est.seed = opts.seed;

  if (opts.bootstrap_rounds > 0) {
    const auto subset_size = static_cast<std::size_t>(detail::bootstrap_fraction * static_cast<double>(working.size()));
    std::vector<double> replicates;
    replicates.reserve(opts.bootstrap_rounds);
    for (std::size_t round = 0; round < opts.bootstrap_rounds; ++round) {
      const auto pick = sample_without_replacement(working.size(), subset_size, derive_seed(opts.seed, round + 1));
      const PointCloud subset = working.select(pick);
      replicates.push_back(estimate(two_nearest(subset, opts.threads), opts.discard_fraction).d_hat);
    }
    est.ci_low = std::min(detail::percentile(replicates, 0.025), est.d_hat);
    est.ci_high = std::max(detail::percentile(replicates, 0.975), est.d_hat);
  }
  return est;
}

struct DecimationPoint {
  double fraction = 1.0;
  IdEstimate estimate;
};

/// Re-estimates on seeded subsamples of decreasing size. Fraction 1 uses the
/// whole cloud, so it reproduces estimate_cloud at the same seed.
inline std::vector<DecimationPoint> decimation_curve(const PointCloud& cloud, std::span<const double> fractions,
                                                     const EstimateOptions& opts = {}) {
  if (fractions.empty()) throw input_error("decimation: no fractions given");
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    const double f = fractions[k];
    if (!(f > 0.0 && f <= 1.0)) throw input_error("decimation: fraction " + std::to_string(f) + " outside (0, 1]");
    if (k > 0 && !(f < fractions[k - 1])) throw input_error("decimation: fractions must be strictly descending");
    const auto m = static_cast<std::size_t>(std::floor(f * static_cast<double>(cloud.size())));
    if (m < min_fit_points)
      throw input_error("decimation: fraction " + std::to_string(f) + " leaves " + std::to_string(m) +
                        " points; at least " + std::to_string(min_fit_points) + " are required");
  }

  std::vector<DecimationPoint> curve;
  curve.reserve(fractions.size());
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    const double f = fractions[k];
    if (f == 1.0) {
      curve.push_back({f, estimate_cloud(cloud, opts)});
      continue;
    }
    const auto m = static_cast<std::size_t>(std::floor(f * static_cast<double>(cloud.size())));
    const auto pick = sample_without_replacement(cloud.size(), m, derive_seed(opts.seed, 0x64656369ULL + k));
    curve.push_back({f, estimate_cloud(cloud.select(pick), opts)});
  }
  return curve;
}

}  // namespace idprobe
