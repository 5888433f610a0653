#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

namespace siss {

// Branch-free double-precision exp for activation hot loops (relative error
// ~1e-15 on the reduced interval; arguments clamped to [-708, 709]). NaN is
// not preserved here; the surrounding linear algebra still propagates NaN
// parameters, which is what the divergence guards key on.
inline double fast_exp(double x) {
  x = x > 709.0 ? 709.0 : x;
  x = x < -708.0 ? -708.0 : x;
  constexpr double kLog2e = 1.4426950408889634074;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  const double k = std::floor(x * kLog2e + 0.5);
  const double r = (x - k * kLn2Hi) - k * kLn2Lo;
  // degree-11 Taylor expansion on |r| <= 0.3466
  double p = 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const auto e = static_cast<std::int64_t>(k) + 1023;
  const auto bits = static_cast<std::uint64_t>(e) << 52;
  double scale;
  std::memcpy(&scale, &bits, sizeof(scale));
  return p * scale;
}

inline double fast_sigmoid(double x) { return 1.0 / (1.0 + fast_exp(-x)); }

inline double fast_tanh(double x) { return 2.0 / (1.0 + fast_exp(-2.0 * x)) - 1.0; }

}  // namespace siss
