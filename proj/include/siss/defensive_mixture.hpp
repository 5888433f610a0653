#pragma once

#include <cmath>
#include <stdexcept>

#include "siss/noise_schedule.hpp"
#include "siss/rng.hpp"

namespace siss {

// Thrown when a density ratio cannot be represented at the lambda endpoints
// (one mixture component has zero weight and the other density underflows).
struct NumericalDomainError : std::domain_error {
  using std::domain_error::domain_error;
};

enum class MixtureSource { FromKeep, FromUnlearn };

// One draw m_t from the defensive mixture (1-lambda) q(.|x) + lambda q(.|a).
struct MixtureDraw {
  Vec m_t;
  int t = 0;
  MixtureSource source = MixtureSource::FromKeep;
  Vec eps_used;
};

// Draw order: one uniform for the component choice, then dim(x) normals.
inline MixtureDraw sample_mixture(const NoiseSchedule& s, const Vec& x, const Vec& a,
                                  int t, double lambda, Rng& rng) {
  if (x.size() != a.size())
    throw std::invalid_argument("sample_mixture: x/a dimension mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("sample_mixture: lambda must be in [0, 1]");
  MixtureDraw draw;
  draw.t = t;
  draw.source = rng.uniform() < lambda ? MixtureSource::FromUnlearn : MixtureSource::FromKeep;
  draw.eps_used.resize(x.size());
  for (auto& e : draw.eps_used) e = rng.normal();
  const Vec& c = draw.source == MixtureSource::FromKeep ? x : a;
  draw.m_t = forward_sample(s, c, t, draw.eps_used);
  return draw;
}

struct ImportanceWeights {
  double keep = 0.0;     // q(m|x) / ((1-lambda) q(m|x) + lambda q(m|a))
  double unlearn = 0.0;  // q(m|a) / ((1-lambda) q(m|x) + lambda q(m|a))
};

// Density ratios evaluated in log space with a log-sum-exp denominator; the
// direct-space ratios underflow catastrophically at small t. Log densities
// are floored at -700 so the lambda in {0, 1} endpoints stay evaluable; a
// ratio that still overflows raises NumericalDomainError instead of +-inf.
inline ImportanceWeights importance_weights(const MixtureDraw& m, const Vec& x,
                                            const Vec& a, const NoiseSchedule& s,
                                            double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("importance_weights: lambda must be in [0, 1]");
  constexpr double kLogFloor = -700.0;
  const double lx = std::max(gaussian_log_density(m.m_t, x, m.t, s), kLogFloor);
  const double la = std::max(gaussian_log_density(m.m_t, a, m.t, s), kLogFloor);
  double log_denom;
  if (lambda <= 0.0) {
    log_denom = lx;
  } else if (lambda >= 1.0) {
    log_denom = la;
  } else {
    const double t1 = std::log1p(-lambda) + lx;
    const double t2 = std::log(lambda) + la;
    const double hi = std::max(t1, t2);
    log_denom = hi + std::log(std::exp(t1 - hi) + std::exp(t2 - hi));
  }
  ImportanceWeights w;
  w.keep = std::exp(lx - log_denom);
  w.unlearn = std::exp(la - log_denom);
  if (!std::isfinite(w.keep) || !std::isfinite(w.unlearn))
    throw NumericalDomainError("importance weight overflow at lambda endpoint");
  return w;
}

}  // namespace siss
