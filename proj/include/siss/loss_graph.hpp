#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "siss/denoiser.hpp"
#include "siss/linalg.hpp"

namespace siss {

struct GradientVector {
  Vec values;
  double norm = 0.0;
};

inline GradientVector make_gradient_vector(Vec values) {
  GradientVector g;
  g.norm = norm(values);
  g.values = std::move(values);
  return g;
}

// The Monte Carlo losses are sums of weighted squared residuals against noise
// predictions. A LossGraph records that structure explicitly: each term is a
// single forward pass through eps_theta, and each criterion on a term adds
// coeff * ||target - eps_theta(input, t)||^2 to the scalar. Criteria carry a
// group tag so the keep and unlearn summands can be differentiated separately;
// the coefficients (importance weights included) are constants w.r.t. theta.
enum class TermGroup { Keep, Unlearn };

struct ResidualCriterion {
  Vec target;
  double coeff = 1.0;
  TermGroup group = TermGroup::Keep;
};

struct LossTerm {
  Vec input;            // noisy sample fed to the net
  double t_over_T = 0;  // continuous time position of the forward pass
  std::vector<ResidualCriterion> criteria;
};

struct LossGraph {
  std::vector<LossTerm> terms;
  double constant = 0.0;
};

struct LossEval {
  double value = 0.0;
  double value_keep = 0.0;     // sum of Keep-group contributions
  double value_unlearn = 0.0;  // sum of Unlearn-group contributions (signed)
  Vec grad_total;
  Vec grad_keep;
  Vec grad_unlearn;
};

namespace detail {

inline Mat embed_graph_inputs(const DenoiserModel& m, const LossGraph& g) {
  Mat input(g.terms.size(), static_cast<std::size_t>(m.input_dim()));
  for (std::size_t r = 0; r < g.terms.size(); ++r) {
    const LossTerm& term = g.terms[r];
    if (term.input.size() != static_cast<std::size_t>(m.data_dim()))
      throw std::invalid_argument("loss term input dimension mismatch");
    embed_row(m, term.input.data(), term.t_over_T, input.row(r));
  }
  return input;
}

}  // namespace detail

// Scalar value only (no gradient); used by finite-difference oracles.
inline double loss_value(const DenoiserModel& m, const LossGraph& g) {
  double value = g.constant;
  if (g.terms.empty()) return value;
  Mat out = forward_batch(m, detail::embed_graph_inputs(m, g), nullptr);
  for (std::size_t r = 0; r < g.terms.size(); ++r) {
    const double* o = out.row(r);
    for (const ResidualCriterion& c : g.terms[r].criteria) {
      double q = 0.0;
      for (std::size_t i = 0; i < c.target.size(); ++i) {
        const double res = c.target[i] - o[i];
        q += res * res;
      }
      value += c.coeff * q;
    }
  }
  return value;
}

// One forward pass over all terms, then one backward pass per group present.
inline LossEval evaluate_loss(const DenoiserModel& m, const LossGraph& g) {
  LossEval ev;
  ev.grad_total.assign(m.params.size(), 0.0);
  ev.grad_keep.assign(m.params.size(), 0.0);
  ev.grad_unlearn.assign(m.params.size(), 0.0);
  ev.value = g.constant;
  ev.value_keep = 0.0;
  ev.value_unlearn = 0.0;
  if (g.terms.empty()) return ev;

  ForwardCache cache;
  Mat out = forward_batch(m, detail::embed_graph_inputs(m, g), &cache);
  const std::size_t d = out.cols;

  Mat d_keep(out.rows, d), d_unlearn(out.rows, d);
  bool has_keep = false, has_unlearn = false;
  for (std::size_t r = 0; r < g.terms.size(); ++r) {
    const double* o = out.row(r);
    for (const ResidualCriterion& c : g.terms[r].criteria) {
      if (c.target.size() != d)
        throw std::invalid_argument("criterion target dimension mismatch");
      double q = 0.0;
      double* drow = c.group == TermGroup::Keep ? d_keep.row(r) : d_unlearn.row(r);
      for (std::size_t i = 0; i < d; ++i) {
        const double res = c.target[i] - o[i];
        q += res * res;
        drow[i] += -2.0 * c.coeff * res;  // d/d out of coeff * ||target - out||^2
      }
      const double v = c.coeff * q;
      if (c.group == TermGroup::Keep) {
        ev.value_keep += v;
        has_keep = true;
      } else {
        ev.value_unlearn += v;
        has_unlearn = true;
      }
    }
  }
  ev.value += ev.value_keep + ev.value_unlearn;
  if (has_keep) backward_batch(m, cache, d_keep, ev.grad_keep);
  if (has_unlearn) backward_batch(m, cache, d_unlearn, ev.grad_unlearn);
  for (std::size_t i = 0; i < ev.grad_total.size(); ++i)
    ev.grad_total[i] = ev.grad_keep[i] + ev.grad_unlearn[i];
  return ev;
}

// Exact reverse-mode gradient of the graph's scalar w.r.t. the parameters.
inline GradientVector loss_gradient(const DenoiserModel& m, const LossGraph& g) {
  return make_gradient_vector(evaluate_loss(m, g).grad_total);
}

}  // namespace siss
