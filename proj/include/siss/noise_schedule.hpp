#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "siss/linalg.hpp"

namespace siss {

// Variance-preserving forward-process coefficients. gamma_t is the signal
// coefficient sqrt(prod_{s<=t}(1 - beta_s)) and sigma_t the noise standard
// deviation sqrt(1 - gamma_t^2), so q(x_t | x_0) = N(gamma_t x_0, sigma_t^2 I)
// and gamma_t^2 + sigma_t^2 = 1 at every timestep. Timesteps are 1-based.
struct NoiseSchedule {
  int num_steps = 0;  // T
  Vec betas;          // index t-1 holds beta_t
  Vec gamma;
  Vec sigma;
  bool linear = false;  // built from linear beta endpoints
  double beta_start = 0.0;
  double beta_end = 0.0;

  void check_t(int t) const {
    if (t < 1 || t > num_steps)
      throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " +
                              std::to_string(num_steps) + "]");
  }

  double beta_at(int t) const {
    check_t(t);
    return betas[static_cast<std::size_t>(t - 1)];
  }
  double gamma_at(int t) const {
    check_t(t);
    return gamma[static_cast<std::size_t>(t - 1)];
  }
  double sigma_at(int t) const {
    check_t(t);
    return sigma[static_cast<std::size_t>(t - 1)];
  }
  // alpha_bar_t = gamma_t^2, with the t=0 convention alpha_bar_0 = 1.
  double alpha_bar_at(int t) const {
    if (t == 0) return 1.0;
    const double g = gamma_at(t);
    return g * g;
  }
};

inline NoiseSchedule schedule_from_betas(Vec betas) {
  if (betas.empty()) throw std::invalid_argument("schedule needs at least one beta");
  double prev = 0.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("beta out of range (0, 1)");
    if (b < prev) throw std::invalid_argument("betas must be non-decreasing");
    prev = b;
  }
  NoiseSchedule s;
  s.num_steps = static_cast<int>(betas.size());
  s.betas = std::move(betas);
  s.gamma.resize(s.betas.size());
  s.sigma.resize(s.betas.size());
  double alpha_bar = 1.0;
  for (std::size_t i = 0; i < s.betas.size(); ++i) {
    alpha_bar *= 1.0 - s.betas[i];
    s.gamma[i] = std::sqrt(alpha_bar);
    s.sigma[i] = std::sqrt(1.0 - alpha_bar);
  }
  return s;
}

inline NoiseSchedule build_schedule(int num_steps, double beta_start, double beta_end) {
  if (num_steps < 1) throw std::invalid_argument("num_steps must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("require 0 < beta_start <= beta_end < 1");
  Vec betas(static_cast<std::size_t>(num_steps));
  for (int t = 0; t < num_steps; ++t) {
    betas[static_cast<std::size_t>(t)] =
        num_steps == 1
            ? beta_start
            : beta_start + (beta_end - beta_start) * static_cast<double>(t) /
                               static_cast<double>(num_steps - 1);
  }
  NoiseSchedule s = schedule_from_betas(std::move(betas));
  s.linear = true;
  s.beta_start = beta_start;
  s.beta_end = beta_end;
  return s;
}

// x_t = gamma_t * x0 + sigma_t * eps
inline Vec forward_sample(const NoiseSchedule& s, const Vec& x0, int t, const Vec& eps) {
  if (x0.size() != eps.size())
    throw std::invalid_argument("forward_sample: x0/eps dimension mismatch");
  const double g = s.gamma_at(t), sg = s.sigma_at(t);
  Vec out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = g * x0[i] + sg * eps[i];
  return out;
}

// log N(m; gamma_t * mean_point, sigma_t^2 I), in nats.
inline double gaussian_log_density(const Vec& m, const Vec& mean_point, int t,
                                   const NoiseSchedule& s) {
  if (m.size() != mean_point.size())
    throw std::invalid_argument("gaussian_log_density: dimension mismatch");
  const double g = s.gamma_at(t), sg = s.sigma_at(t);
  if (!(sg > 0.0)) throw std::domain_error("gaussian_log_density: sigma_t = 0 is degenerate");
  const double d = static_cast<double>(m.size());
  double q = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double r = m[i] - g * mean_point[i];
    q += r * r;
  }
  constexpr double kLog2Pi = 1.8378770664093454836;
  return -0.5 * d * (kLog2Pi + 2.0 * std::log(sg)) - q / (2.0 * sg * sg);
}

}  // namespace siss
