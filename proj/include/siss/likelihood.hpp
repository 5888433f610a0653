#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "siss/denoiser.hpp"
#include "siss/linalg.hpp"
#include "siss/noise_schedule.hpp"

namespace siss {

struct NLLResult {
  double nll_bits_per_dim = 0.0;
  int ode_steps = 0;
  double prior_logp = 0.0;  // nats, log N(x(T); 0, I)
  double delta_logp = 0.0;  // nats, accumulated divergence integral
};

// Continuous-time view of a linear-beta schedule. The beta line is placed so
// its midpoint values match the discrete betas (b(t - 1/2) = beta_t), which
// makes the closed-form integral of log(1 - b) agree with the discrete
// log gamma_t products to midpoint-rule accuracy. Everything downstream
// (gamma, sigma, d log gamma / d tau) is smooth, keeping RK4 at full order.
struct ContinuousVpSchedule {
  int T = 0;
  double p = 0.0;  // b(tau) = p + q * tau
  double q = 0.0;

  double beta(double tau) const { return p + q * tau; }
  double dlog_gamma(double tau) const { return 0.5 * std::log1p(-beta(tau)); }

  double log_gamma(double tau) const {
    if (q == 0.0) return 0.5 * tau * std::log1p(-p);
    const double w0 = 1.0 - p;
    const double wt = 1.0 - p - q * tau;
    const double at_0 = -(w0 * (std::log(w0) - 1.0)) / q;
    const double at_t = -(wt * (std::log(wt) - 1.0)) / q;
    return 0.5 * (at_t - at_0);
  }

  double gamma(double tau) const { return std::exp(log_gamma(tau)); }
  double sigma(double tau) const { return std::sqrt(-std::expm1(2.0 * log_gamma(tau))); }
};

inline ContinuousVpSchedule make_continuous_schedule(const NoiseSchedule& s) {
  if (!s.linear)
    throw std::invalid_argument("exact likelihood requires a linear-beta schedule");
  ContinuousVpSchedule c;
  c.T = s.num_steps;
  if (s.num_steps == 1 || s.beta_end == s.beta_start) {
    c.p = s.beta_start;
    c.q = 0.0;
  } else {
    c.q = (s.beta_end - s.beta_start) / (s.num_steps - 1);
    c.p = s.beta_start - 0.5 * c.q;
    // the line may dip below zero for tau < 1/2; the integrator only
    // evaluates beta on [1, T], where it must stay inside (0, 1)
    if (!(c.beta(1.0) > 0.0 && c.beta(s.num_steps) < 1.0))
      throw std::invalid_argument("continuous beta line leaves (0, 1) on [1, T]");
  }
  return c;
}

// Probability-flow ODE solve with exact divergence. eps_fn evaluates the
// noise prediction for a batch of states at continuous time tau; the drift is
// d x / d tau = L(tau) (x - eps/sigma) with L = d log gamma / d tau, and the
// log-density change accumulates the full Jacobian trace estimated by forward
// differences in each coordinate. Fixed-step RK4 from tau = 1 to tau = T.
template <class EpsFn>
std::vector<NLLResult> probability_flow_nll(EpsFn&& eps_fn, const ContinuousVpSchedule& cs,
                                            int dim, const std::vector<Vec>& points,
                                            int ode_steps, double fd_h = 1e-4) {
  if (dim < 1 || dim > 16)
    throw std::invalid_argument("exact likelihood supports 1 <= d <= 16");
  if (ode_steps < 100) throw std::invalid_argument("ode_steps must be >= 100");
  if (cs.T < 2) throw std::invalid_argument("schedule too short for likelihood integration");
  const std::size_t P = points.size();
  const auto d = static_cast<std::size_t>(dim);
  for (const Vec& x : points)
    if (x.size() != d) throw std::invalid_argument("point dimension mismatch");

  Mat x(P, d);
  for (std::size_t i = 0; i < P; ++i)
    for (std::size_t j = 0; j < d; ++j) x.at(i, j) = points[i][j];
  Vec delta(P, 0.0);

  const double h = static_cast<double>(cs.T - 1) / ode_steps;
  Mat rows(P * (d + 1), d);
  Mat vx;
  Vec vdelta;

  // Writes the drift of (x, delta) at (state, tau) into (vx, vdelta).
  auto drift = [&](const Mat& state, double tau) {
    const double sg = cs.sigma(tau);
    const double L = cs.dlog_gamma(tau);
    for (std::size_t i = 0; i < P; ++i) {
      const double* base = state.row(i);
      double* r0 = rows.row(i * (d + 1));
      for (std::size_t j = 0; j < d; ++j) r0[j] = base[j];
      for (std::size_t j = 0; j < d; ++j) {
        double* rj = rows.row(i * (d + 1) + 1 + j);
        for (std::size_t l = 0; l < d; ++l) rj[l] = base[l];
        rj[j] += fd_h;
      }
    }
    Mat eps = eps_fn(rows, tau);
    vx.rows = P;
    vx.cols = d;
    vx.data.resize(P * d);
    vdelta.assign(P, 0.0);
    for (std::size_t i = 0; i < P; ++i) {
      const double* e0 = eps.row(i * (d + 1));
      const double* xs = state.row(i);
      double trace = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        vx.at(i, j) = L * (xs[j] - e0[j] / sg);
        trace += (eps.at(i * (d + 1) + 1 + j, j) - e0[j]) / fd_h;
      }
      vdelta[i] = L * (static_cast<double>(d) - trace / sg);
    }
  };

  Mat k1x, k2x, k3x, k4x, tmp(P, d);
  Vec k1d, k2d, k3d, k4d;
  for (int step = 0; step < ode_steps; ++step) {
    const double tau = 1.0 + h * step;
    drift(x, tau);
    k1x = vx;
    k1d = vdelta;
    for (std::size_t i = 0; i < x.data.size(); ++i)
      tmp.data[i] = x.data[i] + 0.5 * h * k1x.data[i];
    drift(tmp, tau + 0.5 * h);
    k2x = vx;
    k2d = vdelta;
    for (std::size_t i = 0; i < x.data.size(); ++i)
      tmp.data[i] = x.data[i] + 0.5 * h * k2x.data[i];
    drift(tmp, tau + 0.5 * h);
    k3x = vx;
    k3d = vdelta;
    for (std::size_t i = 0; i < x.data.size(); ++i)
      tmp.data[i] = x.data[i] + h * k3x.data[i];
    drift(tmp, tau + h);
    k4x = vx;
    k4d = vdelta;
    for (std::size_t i = 0; i < x.data.size(); ++i)
      x.data[i] += h / 6.0 *
                   (k1x.data[i] + 2.0 * k2x.data[i] + 2.0 * k3x.data[i] + k4x.data[i]);
    for (std::size_t i = 0; i < P; ++i)
      delta[i] += h / 6.0 * (k1d[i] + 2.0 * k2d[i] + 2.0 * k3d[i] + k4d[i]);
    for (double v : x.data)
      if (!std::isfinite(v))
        throw std::runtime_error("non-finite state during likelihood integration");
    for (double v : delta)
      if (!std::isfinite(v))
        throw std::runtime_error("non-finite state during likelihood integration");
  }

  constexpr double kLog2Pi = 1.8378770664093454836;
  constexpr double kLn2 = 0.69314718055994530942;
  std::vector<NLLResult> results(P);
  for (std::size_t i = 0; i < P; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += x.at(i, j) * x.at(i, j);
    NLLResult r;
    r.ode_steps = ode_steps;
    r.prior_logp = -0.5 * static_cast<double>(d) * kLog2Pi - 0.5 * sq;
    r.delta_logp = delta[i];
    r.nll_bits_per_dim = -(r.prior_logp + r.delta_logp) / (static_cast<double>(d) * kLn2);
    results[i] = r;
  }
  return results;
}

inline std::vector<NLLResult> exact_nll_batch(const DenoiserModel& model,
                                              const NoiseSchedule& schedule,
                                              const std::vector<Vec>& points, int ode_steps) {
  const ContinuousVpSchedule cs = make_continuous_schedule(schedule);
  Mat input;
  auto eps_fn = [&](const Mat& states, double tau) {
    input.rows = states.rows;
    input.cols = static_cast<std::size_t>(model.input_dim());
    input.data.resize(input.rows * input.cols);
    const double u = tau / schedule.num_steps;
    for (std::size_t r = 0; r < states.rows; ++r)
      embed_row(model, states.row(r), u, input.row(r));
    return forward_batch(model, input, nullptr);
  };
  return probability_flow_nll(eps_fn, cs, model.data_dim(), points, ode_steps);
}

inline NLLResult exact_nll(const DenoiserModel& model, const NoiseSchedule& schedule,
                           const Vec& x0, int ode_steps) {
  return exact_nll_batch(model, schedule, {x0}, ode_steps).front();
}

}  // namespace siss
