#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "siss/linalg.hpp"
#include "siss/toy_data.hpp"

namespace siss {

struct RateEstimate {
  double p_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::int64_t num_samples = 0;
};

// 95% Wilson score interval.
inline RateEstimate wilson_interval(std::int64_t successes, std::int64_t total) {
  if (total < 1) throw std::invalid_argument("wilson_interval: empty sample");
  constexpr double z = 1.959963984540054;  // Phi^{-1}(0.975)
  const double n = static_cast<double>(total);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  RateEstimate r;
  r.p_hat = p;
  r.ci_low = std::max(0.0, center - half);
  r.ci_high = std::min(1.0, center + half);
  r.num_samples = total;
  return r;
}

// A sample counts as unlearned-cluster iff it is nearer to the outlier center
// than to every mode center and within 4 outlier_std of the outlier center.
inline bool is_outlier_sample(const Vec& sample, const ToyDatasetSpec& spec,
                              const std::vector<Vec>& centers) {
  const Vec outlier{spec.outlier_x, spec.outlier_y};
  const double d_out = squared_distance(sample, outlier);
  const double r = 4.0 * spec.outlier_std;
  if (d_out > r * r) return false;
  for (const Vec& c : centers)
    if (squared_distance(sample, c) <= d_out) return false;
  return true;
}

inline RateEstimate unlearn_rate(const std::vector<Vec>& samples, const ToyDatasetSpec& spec) {
  if (samples.empty()) throw std::invalid_argument("unlearn_rate: no samples");
  const auto centers = mode_centers(spec);
  std::int64_t hits = 0;
  for (const Vec& s : samples) hits += is_outlier_sample(s, spec, centers) ? 1 : 0;
  return wilson_interval(hits, static_cast<std::int64_t>(samples.size()));
}

// Squared maximum mean discrepancy with a Gaussian kernel
// k(x, y) = exp(-||x - y||^2 / (2 h^2)), bandwidth h = median pairwise
// distance of the reference set. The unbiased (U-statistic) estimator is
// used, so identical or equal-distribution inputs give values near zero that
// may be slightly negative; lower is better.
inline double quality_proxy(const std::vector<Vec>& samples, const std::vector<Vec>& keep_points) {
  if (samples.size() < 2 || keep_points.size() < 2)
    throw std::invalid_argument("quality_proxy: need at least two points per set");
  std::vector<double> dists;
  dists.reserve(keep_points.size() * (keep_points.size() - 1) / 2);
  for (std::size_t i = 0; i < keep_points.size(); ++i)
    for (std::size_t j = i + 1; j < keep_points.size(); ++j)
      dists.push_back(std::sqrt(squared_distance(keep_points[i], keep_points[j])));
  const std::size_t mid = dists.size() / 2;
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  const double bandwidth = dists[mid];
  if (!(bandwidth > 0.0))
    throw std::invalid_argument("quality_proxy: degenerate bandwidth (identical points)");
  const double scale = -1.0 / (2.0 * bandwidth * bandwidth);

  const double m = static_cast<double>(samples.size());
  const double n = static_cast<double>(keep_points.size());
  double kxx = 0.0, kyy = 0.0, kxy = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    for (std::size_t j = i + 1; j < samples.size(); ++j)
      kxx += std::exp(scale * squared_distance(samples[i], samples[j]));
  for (std::size_t i = 0; i < keep_points.size(); ++i)
    for (std::size_t j = i + 1; j < keep_points.size(); ++j)
      kyy += std::exp(scale * squared_distance(keep_points[i], keep_points[j]));
  for (const Vec& s : samples)
    for (const Vec& kp : keep_points) kxy += std::exp(scale * squared_distance(s, kp));
  return 2.0 * kxx / (m * (m - 1.0)) + 2.0 * kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n);
}

}  // namespace siss
