#include <doctest.h>

#include <cmath>

#include "siss/noise_schedule.hpp"

using namespace siss;

TEST_CASE("single-step schedule has the closed-form coefficients") {
  const NoiseSchedule s = build_schedule(1, 0.5, 0.5);
  CHECK(s.gamma_at(1) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK(s.sigma_at(1) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
}

TEST_CASE("default schedule endpoints match a direct product evaluation") {
  const NoiseSchedule s = build_schedule(1000, 1e-4, 0.02);
  // independent oracle: direct product over the same beta line
  double alpha_bar = 1.0;
  for (int t = 0; t < 1000; ++t)
    alpha_bar *= 1.0 - (1e-4 + (0.02 - 1e-4) * t / 999.0);
  CHECK(s.gamma_at(1000) == doctest::Approx(std::sqrt(alpha_bar)).epsilon(1e-12));
  CHECK(s.gamma_at(1000) < 0.01);
  CHECK(s.gamma_at(1) > 0.99);
  CHECK(s.sigma_at(1000) > 0.99);
}

TEST_CASE("variance-preserving identity and monotonicity hold at every step") {
  const NoiseSchedule s = build_schedule(1000, 1e-4, 0.02);
  for (int t = 1; t <= 1000; ++t) {
    const double g = s.gamma_at(t), sg = s.sigma_at(t);
    CHECK(std::abs(g * g + sg * sg - 1.0) < 1e-12);
    if (t > 1) {
      CHECK(g < s.gamma_at(t - 1));
      CHECK(sg > s.sigma_at(t - 1));
    }
  }
}

TEST_CASE("invalid schedules are rejected") {
  CHECK_THROWS_AS(build_schedule(0, 1e-4, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(10, 0.0, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(10, 0.02, 1e-4), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(10, 1e-4, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(schedule_from_betas({0.1, 0.05}), std::invalid_argument);
  CHECK_THROWS_AS(schedule_from_betas({0.1, 1.5}), std::invalid_argument);
  CHECK_THROWS_AS(schedule_from_betas({}), std::invalid_argument);
}

TEST_CASE("forward_sample special cases") {
  const NoiseSchedule s = build_schedule(100, 1e-3, 0.05);
  const Vec x0{1.5, -2.0};
  const Vec zero{0.0, 0.0};
  const Vec e{0.7, -0.3};

  const Vec no_noise = forward_sample(s, x0, 40, zero);
  CHECK(no_noise[0] == doctest::Approx(s.gamma_at(40) * 1.5).epsilon(1e-14));
  CHECK(no_noise[1] == doctest::Approx(s.gamma_at(40) * -2.0).epsilon(1e-14));

  const Vec no_signal = forward_sample(s, zero, 40, e);
  CHECK(no_signal[0] == doctest::Approx(s.sigma_at(40) * 0.7).epsilon(1e-14));
  CHECK(no_signal[1] == doctest::Approx(s.sigma_at(40) * -0.3).epsilon(1e-14));

  CHECK_THROWS_AS(forward_sample(s, x0, 40, Vec{1.0}), std::invalid_argument);
  CHECK_THROWS_AS(forward_sample(s, x0, 0, e), std::out_of_range);
  CHECK_THROWS_AS(forward_sample(s, x0, 101, e), std::out_of_range);
}

TEST_CASE("forward_sample hand arithmetic at gamma 0.8 sigma 0.6") {
  // alpha_bar = 0.64 in one step
  const NoiseSchedule s = schedule_from_betas({0.36});
  CHECK(s.gamma_at(1) == doctest::Approx(0.8).epsilon(1e-13));
  CHECK(s.sigma_at(1) == doctest::Approx(0.6).epsilon(1e-13));
  const Vec out = forward_sample(s, {1.0, 1.0}, 1, {1.0, -1.0});
  CHECK(out[0] == doctest::Approx(1.4).epsilon(1e-13));
  CHECK(out[1] == doctest::Approx(0.2).epsilon(1e-13));
}

TEST_CASE("gaussian log density at the mode and one sigma out") {
  // near-unit sigma: alpha_bar = 1e-9 makes sigma_t = sqrt(1 - 1e-9)
  const NoiseSchedule s = schedule_from_betas({1.0 - 1e-9});
  const double sg = s.sigma_at(1);
  const Vec x{0.4};
  const Vec at_mode{s.gamma_at(1) * 0.4};
  const double mode_val = gaussian_log_density(at_mode, x, 1, s);
  CHECK(mode_val == doctest::Approx(-0.5 * std::log(2.0 * 3.14159265358979323846 * sg * sg))
                        .epsilon(1e-12));
  CHECK(mode_val == doctest::Approx(-0.9189385332046727).epsilon(1e-8));

  const Vec off{at_mode[0] + sg};
  CHECK(gaussian_log_density(off, x, 1, s) == doctest::Approx(mode_val - 0.5).epsilon(1e-12));
}

TEST_CASE("gaussian log density matches a brute-force per-coordinate oracle") {
  const NoiseSchedule s = build_schedule(100, 1e-3, 0.05);
  const int t = 60;
  const double g = s.gamma_at(t), sg = s.sigma_at(t);
  const Vec m{0.3, -1.1};
  const Vec x{0.9, 0.4};
  // independent oracle: product of one-dimensional normal densities
  double direct = 1.0;
  for (int i = 0; i < 2; ++i) {
    const double r = m[static_cast<std::size_t>(i)] - g * x[static_cast<std::size_t>(i)];
    direct *= std::exp(-r * r / (2.0 * sg * sg)) /
              std::sqrt(2.0 * 3.14159265358979323846 * sg * sg);
  }
  CHECK(gaussian_log_density(m, x, t, s) == doctest::Approx(std::log(direct)).epsilon(1e-12));
  CHECK_THROWS_AS(gaussian_log_density(m, Vec{1.0}, t, s), std::invalid_argument);
}
