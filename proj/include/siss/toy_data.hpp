#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "siss/losses.hpp"
#include "siss/rng.hpp"

namespace siss {

// 2D benchmark replicating the injected-outlier protocol: a ring of Gaussian
// modes as the bulk distribution plus a small, well-separated outlier cluster
// injected at a fixed rate. The outlier cluster is the unlearning target.
struct ToyDatasetSpec {
  int num_modes = 8;
  double radius = 4.0;
  double mode_std = 0.15;
  int n = 2000;
  double outlier_x = 6.0;
  double outlier_y = 6.0;
  double outlier_std = 0.1;
  double injection_rate = 0.01;
};

inline std::vector<Vec> mode_centers(const ToyDatasetSpec& spec) {
  std::vector<Vec> centers;
  centers.reserve(static_cast<std::size_t>(spec.num_modes));
  for (int i = 0; i < spec.num_modes; ++i) {
    const double angle = 2.0 * 3.14159265358979323846 * i / spec.num_modes;
    centers.push_back({spec.radius * std::cos(angle), spec.radius * std::sin(angle)});
  }
  return centers;
}

inline void validate_spec(const ToyDatasetSpec& spec) {
  if (spec.num_modes < 1 || spec.n < 2) throw std::invalid_argument("degenerate dataset spec");
  if (!(spec.mode_std > 0.0 && spec.outlier_std > 0.0))
    throw std::invalid_argument("cluster standard deviations must be positive");
  if (std::llround(spec.injection_rate * spec.n) < 1)
    throw std::invalid_argument("injection_rate * n must be >= 1");
  const Vec outlier{spec.outlier_x, spec.outlier_y};
  for (const Vec& c : mode_centers(spec)) {
    if (std::sqrt(squared_distance(outlier, c)) <= 6.0 * spec.mode_std)
      throw std::invalid_argument("separability violated: outlier within 6 mode_std of a mode");
  }
}

inline Vec sample_mode_point(const ToyDatasetSpec& spec, const std::vector<Vec>& centers,
                             Rng& rng) {
  const auto m = static_cast<std::size_t>(rng.uniform_int(0, spec.num_modes - 1));
  return {centers[m][0] + spec.mode_std * rng.normal(),
          centers[m][1] + spec.mode_std * rng.normal()};
}

// Fresh draws from the keep distribution, e.g. for held-out evaluation sets.
inline std::vector<Vec> sample_mode_mixture(const ToyDatasetSpec& spec, int count, Rng& rng) {
  const auto centers = mode_centers(spec);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(sample_mode_point(spec, centers, rng));
  return out;
}

inline UnlearnDataset generate_dataset(const ToyDatasetSpec& spec, Rng& rng) {
  validate_spec(spec);
  const auto k = static_cast<int>(std::llround(spec.injection_rate * spec.n));
  const auto centers = mode_centers(spec);
  std::vector<Vec> keep;
  keep.reserve(static_cast<std::size_t>(spec.n - k));
  for (int i = 0; i < spec.n - k; ++i) keep.push_back(sample_mode_point(spec, centers, rng));
  std::vector<Vec> unlearn;
  unlearn.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i)
    unlearn.push_back({spec.outlier_x + spec.outlier_std * rng.normal(),
                       spec.outlier_y + spec.outlier_std * rng.normal()});
  return make_dataset(std::move(keep), std::move(unlearn));
}

}  // namespace siss
