#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "siss/defensive_mixture.hpp"
#include "siss/loss_graph.hpp"
#include "siss/noise_schedule.hpp"
#include "siss/rng.hpp"

namespace siss {

// Raised by rescale_superfactor when the raw unlearn-term gradient norm is
// numerically zero, i.e. the batch carried no usable unlearning signal.
struct VanishedUnlearnSignal : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Training set X split into the points to keep and the unlearning subset A.
// Point access goes through counting accessors so tests can audit which side
// of the split a method actually touched.
struct UnlearnDataset {
  std::vector<Vec> keep_points;
  std::vector<Vec> unlearn_points;
  mutable std::uint64_t keep_reads = 0;
  mutable std::uint64_t unlearn_reads = 0;

  int n() const { return static_cast<int>(keep_points.size() + unlearn_points.size()); }
  int k() const { return static_cast<int>(unlearn_points.size()); }

  const Vec& keep(std::size_t i) const {
    ++keep_reads;
    return keep_points.at(i);
  }
  const Vec& unlearn(std::size_t i) const {
    ++unlearn_reads;
    return unlearn_points.at(i);
  }
  // Uniform access over all of X: indices [0, n) with keep points first.
  const Vec& any(std::size_t i) const {
    return i < keep_points.size() ? keep(i) : unlearn(i - keep_points.size());
  }
  void reset_audit() const { keep_reads = unlearn_reads = 0; }
};

inline UnlearnDataset make_dataset(std::vector<Vec> keep, std::vector<Vec> unlearn) {
  if (unlearn.empty()) throw std::invalid_argument("unlearning set must satisfy k >= 1");
  if (keep.empty()) throw std::invalid_argument("keep set must be nonempty (n > k)");
  const std::size_t dim = keep.front().size();
  for (const auto& p : keep)
    if (p.size() != dim) throw std::invalid_argument("inconsistent point dimensions");
  for (const auto& p : unlearn)
    if (p.size() != dim) throw std::invalid_argument("inconsistent point dimensions");
  UnlearnDataset ds;
  ds.keep_points = std::move(keep);
  ds.unlearn_points = std::move(unlearn);
  return ds;
}

// Monte Carlo estimate of a loss: scalar value, its parameter gradient, and
// the bookkeeping the superfactor policy needs. The keep/unlearn splits are
// the two summands of the loss as written, coefficients included, so
// term_*_grad_norm are the norms the gradient-ratio rule operates on.
struct LossEstimate {
  double value = 0.0;
  GradientVector gradient;
  double term_keep_value = 0.0;
  double term_unlearn_value = 0.0;  // signed (the subtracted summand)
  Vec grad_keep_part;
  Vec grad_unlearn_part;  // signed
  double term_keep_grad_norm = 0.0;
  double term_unlearn_grad_norm = 0.0;
  std::vector<std::pair<double, double>> weights_used;  // (w_keep, w_unlearn)
  double superfactor_applied = 0.0;
};

namespace detail {

inline LossEstimate finalize_estimate(const DenoiserModel& model, const LossGraph& graph,
                                      double superfactor) {
  LossEval ev = evaluate_loss(model, graph);
  LossEstimate est;
  est.value = ev.value;
  est.term_keep_value = ev.value_keep;
  est.term_unlearn_value = ev.value_unlearn;
  est.term_keep_grad_norm = norm(ev.grad_keep);
  est.term_unlearn_grad_norm = norm(ev.grad_unlearn);
  est.grad_keep_part = std::move(ev.grad_keep);
  est.grad_unlearn_part = std::move(ev.grad_unlearn);
  est.gradient = make_gradient_vector(std::move(ev.grad_total));
  est.superfactor_applied = superfactor;
  return est;
}

inline Vec draw_normals(std::size_t dim, Rng& rng) {
  Vec eps(dim);
  for (auto& e : eps) e = rng.normal();
  return eps;
}

}  // namespace detail

// Simplified ELBO over the keep set: mean_b ||eps - eps_theta(x_t, t)||^2.
// Draw order per batch element: point index, timestep, then d normals.
inline LossEstimate naive_deletion_loss(const DenoiserModel& model, const UnlearnDataset& ds,
                                        const NoiseSchedule& schedule, int batch_size,
                                        Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (ds.keep_points.empty()) throw std::invalid_argument("empty keep set");
  const auto dim = static_cast<std::size_t>(model.data_dim());
  LossGraph graph;
  graph.terms.reserve(static_cast<std::size_t>(batch_size));
  const double inv_b = 1.0 / batch_size;
  for (int b = 0; b < batch_size; ++b) {
    const auto idx = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(ds.keep_points.size()) - 1));
    const Vec& x = ds.keep(idx);
    const int t = static_cast<int>(rng.uniform_int(1, schedule.num_steps));
    Vec eps = detail::draw_normals(dim, rng);
    LossTerm term;
    term.input = forward_sample(schedule, x, t, eps);
    term.t_over_T = static_cast<double>(t) / schedule.num_steps;
    term.criteria.push_back({std::move(eps), inv_b, TermGroup::Keep});
    graph.terms.push_back(std::move(term));
  }
  return detail::finalize_estimate(model, graph, 0.0);
}

// NegGrad objective over the unlearning set, returned as written; the engine
// ascends it by negating the gradient. Same draw order as naive deletion.
inline LossEstimate neggrad_loss(const DenoiserModel& model, const UnlearnDataset& ds,
                                 const NoiseSchedule& schedule, int batch_size, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (ds.unlearn_points.empty()) throw std::invalid_argument("empty unlearn set");
  const auto dim = static_cast<std::size_t>(model.data_dim());
  LossGraph graph;
  graph.terms.reserve(static_cast<std::size_t>(batch_size));
  const double inv_b = 1.0 / batch_size;
  for (int b = 0; b < batch_size; ++b) {
    const auto idx = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(ds.unlearn_points.size()) - 1));
    const Vec& a = ds.unlearn(idx);
    const int t = static_cast<int>(rng.uniform_int(1, schedule.num_steps));
    Vec eps = detail::draw_normals(dim, rng);
    LossTerm term;
    term.input = forward_sample(schedule, a, t, eps);
    term.t_over_T = static_cast<double>(t) / schedule.num_steps;
    term.criteria.push_back({std::move(eps), inv_b, TermGroup::Unlearn});
    graph.terms.push_back(std::move(term));
  }
  return detail::finalize_estimate(model, graph, 0.0);
}

// Keep-set ELBO plus lambda_ed * mean ||eps_f - eps_theta(a_t, t)||^2 with
// eps_f uniform per coordinate on [0, 1). Two forward passes per element.
// Draw order per element: keep index, t_x, d normals, unlearn index, t_a,
// d normals, d uniforms.
inline LossEstimate erasediff_loss(const DenoiserModel& model, const UnlearnDataset& ds,
                                   const NoiseSchedule& schedule, double lambda_ed,
                                   int batch_size, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lambda_ed >= 0.0)) throw std::invalid_argument("lambda_ed must be >= 0");
  if (ds.unlearn_points.empty()) throw std::invalid_argument("empty unlearn set");
  const auto dim = static_cast<std::size_t>(model.data_dim());
  LossGraph graph;
  graph.terms.reserve(2 * static_cast<std::size_t>(batch_size));
  const double inv_b = 1.0 / batch_size;
  for (int b = 0; b < batch_size; ++b) {
    const auto ki = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(ds.keep_points.size()) - 1));
    const Vec& x = ds.keep(ki);
    const int tx = static_cast<int>(rng.uniform_int(1, schedule.num_steps));
    Vec eps_x = detail::draw_normals(dim, rng);
    LossTerm keep_term;
    keep_term.input = forward_sample(schedule, x, tx, eps_x);
    keep_term.t_over_T = static_cast<double>(tx) / schedule.num_steps;
    keep_term.criteria.push_back({std::move(eps_x), inv_b, TermGroup::Keep});
    graph.terms.push_back(std::move(keep_term));

    const auto ui = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(ds.unlearn_points.size()) - 1));
    const Vec& a = ds.unlearn(ui);
    const int ta = static_cast<int>(rng.uniform_int(1, schedule.num_steps));
    Vec eps_a = detail::draw_normals(dim, rng);
    Vec eps_f(dim);
    for (auto& e : eps_f) e = rng.uniform();
    LossTerm unlearn_term;
    unlearn_term.input = forward_sample(schedule, a, ta, eps_a);
    unlearn_term.t_over_T = static_cast<double>(ta) / schedule.num_steps;
    unlearn_term.criteria.push_back({std::move(eps_f), lambda_ed * inv_b, TermGroup::Unlearn});
    graph.terms.push_back(std::move(unlearn_term));
  }
  return detail::finalize_estimate(model, graph, 0.0);
}

// Eq. 8 samples the outer point from all of X; the appendix rewrite samples
// from the keep set with rescaled coefficients. Both are exposed; their
// expectation equality is a verification-suite property.
enum class SissForm { Standard, Rewrite };

// Importance-sampled unlearning loss. Per batch element one point x ~ p_X,
// one a ~ p_A and one mixture draw m_t ~ q_lambda share a single forward
// pass through eps_theta; the keep and unlearn residuals differ only in
// their targets and weights. Draw order per element: x index, a index,
// timestep, mixture component uniform, d normals.
inline LossEstimate siss_loss(const DenoiserModel& model, const UnlearnDataset& ds,
                              const NoiseSchedule& schedule, double lambda,
                              double superfactor, int batch_size, Rng& rng,
                              SissForm form = SissForm::Standard) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw std::invalid_argument("lambda must be in [0, 1]");
  if (!(superfactor >= 0.0)) throw std::invalid_argument("superfactor must be >= 0");
  const double n = ds.n(), k = ds.k();
  const auto dim = static_cast<std::size_t>(model.data_dim());
  LossGraph graph;
  graph.terms.reserve(static_cast<std::size_t>(batch_size));
  std::vector<std::pair<double, double>> weights;
  weights.reserve(static_cast<std::size_t>(batch_size));
  const double inv_b = 1.0 / batch_size;
  for (int b = 0; b < batch_size; ++b) {
    const Vec& x = form == SissForm::Standard
                       ? ds.any(static_cast<std::size_t>(rng.uniform_int(0, ds.n() - 1)))
                       : ds.keep(static_cast<std::size_t>(
                             rng.uniform_int(0, static_cast<std::int64_t>(ds.keep_points.size()) - 1)));
    const Vec& a =
        ds.unlearn(static_cast<std::size_t>(rng.uniform_int(0, ds.k() - 1)));
    const int t = static_cast<int>(rng.uniform_int(1, schedule.num_steps));
    MixtureDraw m = sample_mixture(schedule, x, a, t, lambda, rng);
    const ImportanceWeights w = importance_weights(m, x, a, schedule, lambda);
    weights.emplace_back(w.keep, w.unlearn);

    const double g = schedule.gamma_at(t), sg = schedule.sigma_at(t);
    Vec res_keep(dim), res_unlearn(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      res_keep[i] = (m.m_t[i] - g * x[i]) / sg;
      res_unlearn[i] = (m.m_t[i] - g * a[i]) / sg;
    }
    double coef_keep, coef_unlearn;
    if (form == SissForm::Standard) {
      coef_keep = n / (n - k) * w.keep * inv_b;
      coef_unlearn = -(1.0 + superfactor) * k / (n - k) * w.unlearn * inv_b;
    } else {
      coef_keep = w.keep * inv_b;
      coef_unlearn = -superfactor * k / (n - k) * w.unlearn * inv_b;
    }
    LossTerm term;
    term.input = std::move(m.m_t);
    term.t_over_T = static_cast<double>(t) / schedule.num_steps;
    term.criteria.push_back({std::move(res_keep), coef_keep, TermGroup::Keep});
    term.criteria.push_back({std::move(res_unlearn), coef_unlearn, TermGroup::Unlearn});
    graph.terms.push_back(std::move(term));
  }
  LossEstimate est = detail::finalize_estimate(model, graph, superfactor);
  est.weights_used = std::move(weights);
  return est;
}

// Split form of the same objective without importance sampling: independent
// noisy samples of x and a, two forward passes per batch element. Draw order
// per element: x index, a index, timestep, d normals (x), d normals (a).
inline LossEstimate siss_no_is_loss(const DenoiserModel& model, const UnlearnDataset& ds,
                                    const NoiseSchedule& schedule, double superfactor,
                                    int batch_size, Rng& rng) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (!(superfactor >= 0.0)) throw std::invalid_argument("superfactor must be >= 0");
  const double n = ds.n(), k = ds.k();
  const auto dim = static_cast<std::size_t>(model.data_dim());
  LossGraph graph;
  graph.terms.reserve(2 * static_cast<std::size_t>(batch_size));
  const double inv_b = 1.0 / batch_size;
  for (int b = 0; b < batch_size; ++b) {
    const Vec& x = ds.any(static_cast<std::size_t>(rng.uniform_int(0, ds.n() - 1)));
    const Vec& a = ds.unlearn(static_cast<std::size_t>(rng.uniform_int(0, ds.k() - 1)));
    const int t = static_cast<int>(rng.uniform_int(1, schedule.num_steps));
    const double u = static_cast<double>(t) / schedule.num_steps;
    Vec eps_x = detail::draw_normals(dim, rng);
    Vec eps_a = detail::draw_normals(dim, rng);

    LossTerm keep_term;
    keep_term.input = forward_sample(schedule, x, t, eps_x);
    keep_term.t_over_T = u;
    keep_term.criteria.push_back({std::move(eps_x), n / (n - k) * inv_b, TermGroup::Keep});
    graph.terms.push_back(std::move(keep_term));

    LossTerm unlearn_term;
    unlearn_term.input = forward_sample(schedule, a, t, eps_a);
    unlearn_term.t_over_T = u;
    unlearn_term.criteria.push_back(
        {std::move(eps_a), -(1.0 + superfactor) * k / (n - k) * inv_b, TermGroup::Unlearn});
    graph.terms.push_back(std::move(unlearn_term));
  }
  return detail::finalize_estimate(model, graph, 0.0);
}

// Solves for the superfactor that makes the unlearn-term gradient norm equal
// target_ratio times the keep-term norm. The unlearn-term gradient scales
// linearly in (1 + s) * k / (n - k), so the norm at unit coefficient is
// recovered from the cached norm and the superfactor it was evaluated at.
inline double rescale_superfactor(const LossEstimate& est, const UnlearnDataset& ds,
                                  double target_ratio) {
  if (!(est.term_keep_grad_norm > 0.0))
    throw std::invalid_argument("rescale_superfactor: keep-term gradient norm must be positive");
  if (!(target_ratio >= 0.0))
    throw std::invalid_argument("rescale_superfactor: target_ratio must be >= 0");
  const double n = ds.n(), k = ds.k();
  const double raw_unlearn_grad_norm =
      est.term_unlearn_grad_norm * (n - k) / (k * (1.0 + est.superfactor_applied));
  if (raw_unlearn_grad_norm < 1e-12)
    throw VanishedUnlearnSignal("unlearn signal vanished: raw unlearn-term gradient norm " +
                                std::to_string(raw_unlearn_grad_norm));
  const double s =
      target_ratio * est.term_keep_grad_norm * (n - k) / (k * raw_unlearn_grad_norm) - 1.0;
  return s > 0.0 ? s : 0.0;
}

}  // namespace siss
