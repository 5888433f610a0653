#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "siss/metrics.hpp"
#include "siss/rng.hpp"
#include "siss/toy_data.hpp"

using namespace siss;

TEST_CASE("dataset generation sets the cardinalities from the injection rate") {
  ToyDatasetSpec spec;  // defaults: 8 modes, n = 2000, 1% injection
  Rng rng(1);
  const UnlearnDataset ds = generate_dataset(spec, rng);
  CHECK(ds.k() == 20);
  CHECK(ds.n() == 2000);
  CHECK(ds.keep_points.size() == 1980);
}

TEST_CASE("degenerate specs are rejected") {
  ToyDatasetSpec spec;
  spec.injection_rate = 0.0;
  Rng rng(2);
  CHECK_THROWS_AS(generate_dataset(spec, rng), std::invalid_argument);

  ToyDatasetSpec close;
  close.outlier_x = 4.05;  // within 6 mode_std of the mode center at (4, 0)
  close.outlier_y = 0.0;
  CHECK_THROWS_AS(generate_dataset(close, rng), std::invalid_argument);
}

TEST_CASE("generation is deterministic in the seed") {
  ToyDatasetSpec spec;
  Rng r1(3), r2(3);
  const UnlearnDataset a = generate_dataset(spec, r1);
  const UnlearnDataset b = generate_dataset(spec, r2);
  CHECK(a.keep_points == b.keep_points);
  CHECK(a.unlearn_points == b.unlearn_points);
}

TEST_CASE("mode centers sit on the circle") {
  ToyDatasetSpec spec;
  for (const Vec& c : mode_centers(spec))
    CHECK(std::sqrt(c[0] * c[0] + c[1] * c[1]) == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("rate classifier extremes") {
  ToyDatasetSpec spec;
  const std::vector<Vec> at_mode(100, Vec{4.0, 0.0});
  CHECK(unlearn_rate(at_mode, spec).p_hat == 0.0);
  const std::vector<Vec> at_outlier(100, Vec{6.0, 6.0});
  CHECK(unlearn_rate(at_outlier, spec).p_hat == 1.0);
  CHECK_THROWS_AS(unlearn_rate({}, spec), std::invalid_argument);
}

TEST_CASE("classifier separates labeled draws almost perfectly") {
  ToyDatasetSpec spec;
  const auto centers = mode_centers(spec);
  Rng rng(4);
  int wrong = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Vec p = sample_mode_point(spec, centers, rng);
    wrong += is_outlier_sample(p, spec, centers) ? 1 : 0;
  }
  for (int i = 0; i < n; ++i) {
    const Vec p{spec.outlier_x + spec.outlier_std * rng.normal(),
                spec.outlier_y + spec.outlier_std * rng.normal()};
    wrong += is_outlier_sample(p, spec, centers) ? 0 : 1;
  }
  CHECK(static_cast<double>(wrong) / (2 * n) < 0.001);
}

TEST_CASE("wilson interval brackets the estimate and matches hand values") {
  const RateEstimate r = wilson_interval(0, 30720);
  CHECK(r.p_hat == 0.0);
  CHECK(r.ci_low == 0.0);
  // closed form at zero successes: z^2 / (n + z^2)
  const double z = 1.959963984540054;
  CHECK(r.ci_high == doctest::Approx(z * z / (30720.0 + z * z)).epsilon(1e-12));
  CHECK(r.ci_high < 5e-4);

  const RateEstimate mid = wilson_interval(227, 30720);
  CHECK(mid.ci_low <= mid.p_hat);
  CHECK(mid.p_hat <= mid.ci_high);

  // interval shrinks with sample size
  const RateEstimate small = wilson_interval(23, 3072);
  CHECK(mid.ci_high - mid.ci_low < small.ci_high - small.ci_low);
}

TEST_CASE("wilson interval coverage near the observed generation rate") {
  const double p = 0.0074;
  const int n = 30720;
  Rng rng(5);
  int covered = 0;
  const int experiments = 1000;
  for (int e = 0; e < experiments; ++e) {
    int successes = 0;
    for (int i = 0; i < n; ++i) successes += rng.uniform() < p;
    const RateEstimate r = wilson_interval(successes, n);
    covered += (p >= r.ci_low && p <= r.ci_high) ? 1 : 0;
  }
  const double coverage = static_cast<double>(covered) / experiments;
  CHECK(coverage >= 0.93);
  CHECK(coverage <= 0.97);
}

TEST_CASE("unbiased MMD on identical sets is a small non-positive value") {
  Rng rng(6);
  ToyDatasetSpec spec;
  const auto pts = sample_mode_mixture(spec, 500, rng);
  const double v = quality_proxy(pts, pts);
  // the U-statistic removes the diagonal, leaving a -O(1/m) bias on equal sets
  CHECK(v <= 0.0);
  CHECK(std::abs(v) < 2.0 / 499.0);
}

TEST_CASE("MMD orders in-distribution below a shifted cluster") {
  Rng rng(7);
  ToyDatasetSpec spec;
  const auto keep = sample_mode_mixture(spec, 800, rng);
  const auto in_dist = sample_mode_mixture(spec, 400, rng);
  std::vector<Vec> shifted;
  for (int i = 0; i < 400; ++i) shifted.push_back({20.0 + rng.normal(), 20.0 + rng.normal()});
  const double mmd_in = quality_proxy(in_dist, keep);
  const double mmd_far = quality_proxy(shifted, keep);
  CHECK(mmd_far > mmd_in);
  CHECK(mmd_far > 0.1);
}

TEST_CASE("MMD is invariant to permuting either set") {
  Rng rng(8);
  ToyDatasetSpec spec;
  auto keep = sample_mode_mixture(spec, 300, rng);
  auto samples = sample_mode_mixture(spec, 200, rng);
  const double base = quality_proxy(samples, keep);
  // deterministic shuffle
  for (std::size_t i = samples.size(); i > 1; --i)
    std::swap(samples[i - 1], samples[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  for (std::size_t i = keep.size(); i > 1; --i)
    std::swap(keep[i - 1], keep[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  CHECK(std::abs(quality_proxy(samples, keep) - base) < 1e-10);
}

TEST_CASE("degenerate bandwidth is rejected") {
  const std::vector<Vec> same(10, Vec{1.0, 1.0});
  CHECK_THROWS_AS(quality_proxy(same, same), std::invalid_argument);
}
