#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "siss/linalg.hpp"

namespace siss {

struct AdamParams {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update; t is the 1-based step count.
inline void adam_step(Vec& params, const Vec& grad, Vec& m1, Vec& m2, std::int64_t t,
                      const AdamParams& p) {
  if (grad.size() != params.size() || m1.size() != params.size() || m2.size() != params.size())
    throw std::invalid_argument("adam_step: vector size mismatch");
  if (t < 1) throw std::invalid_argument("adam_step: step count must be >= 1");
  const double c1 = 1.0 - std::pow(p.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(p.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m1[i] = p.beta1 * m1[i] + (1.0 - p.beta1) * grad[i];
    m2[i] = p.beta2 * m2[i] + (1.0 - p.beta2) * grad[i] * grad[i];
    params[i] -= p.lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + p.eps);
  }
}

}  // namespace siss
