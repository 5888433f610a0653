#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "siss/adam.hpp"
#include "siss/config.hpp"
#include "siss/csv.hpp"
#include "siss/denoiser.hpp"
#include "siss/losses.hpp"
#include "siss/noise_schedule.hpp"
#include "siss/rng.hpp"

namespace siss {

struct EngineDivergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MetricRow {
  std::int64_t step;
  std::string name;
  double value;
};

struct RunState {
  std::int64_t step = 0;
  DenoiserModel model;
  Vec m1, m2;  // Adam moment vectors, aligned with model.params
  std::vector<MetricRow> metric_history;
};

struct EngineHooks {
  // Invoked every eval_every steps and after the final step; may append
  // metric rows before they are flushed.
  std::function<void(RunState&, const RunConfig&)> on_eval;
};

namespace detail {

// Appends rows [written, end) to a step,name,value CSV; creates the file with
// a header on first use.
class MetricsFlusher {
 public:
  explicit MetricsFlusher(std::string path) : path_(std::move(path)) {}

  void flush(const std::vector<MetricRow>& rows) {
    if (path_.empty()) return;
    if (!writer_) writer_.emplace(path_, std::vector<std::string>{"step", "name", "value"});
    for (; written_ < rows.size(); ++written_) {
      const MetricRow& r = rows[written_];
      writer_->append_row({std::to_string(r.step), r.name, format_double(r.value)});
    }
  }

 private:
  std::string path_;
  std::optional<CsvWriter> writer_;
  std::size_t written_ = 0;
};

inline LossGraph elbo_batch(const DenoiserModel& model, const std::vector<Vec>& points,
                            const NoiseSchedule& schedule, int batch_size, Rng& rng) {
  const auto dim = static_cast<std::size_t>(model.data_dim());
  LossGraph graph;
  graph.terms.reserve(static_cast<std::size_t>(batch_size));
  const double inv_b = 1.0 / batch_size;
  for (int b = 0; b < batch_size; ++b) {
    const auto idx = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(points.size()) - 1));
    const int t = static_cast<int>(rng.uniform_int(1, schedule.num_steps));
    Vec eps(dim);
    for (auto& e : eps) e = rng.normal();
    LossTerm term;
    term.input = forward_sample(schedule, points[idx], t, eps);
    term.t_over_T = static_cast<double>(t) / schedule.num_steps;
    term.criteria.push_back({std::move(eps), inv_b, TermGroup::Keep});
    graph.terms.push_back(std::move(term));
  }
  return graph;
}

}  // namespace detail

// Minimizes the simplified ELBO over the given points with Adam and cosine
// learning-rate decay. The same routine trained on keep points only is the
// retraining gold standard.
inline RunState pretrain(const RunConfig& config, const std::vector<Vec>& points, Rng& rng,
                         const EngineHooks& hooks = {}, const std::string& metrics_csv = "") {
  if (points.empty()) throw std::invalid_argument("pretrain: empty dataset");
  const auto steps = config.steps.value();
  const NoiseSchedule schedule =
      build_schedule(config.schedule_T, config.beta_start, config.beta_end);
  Rng init_rng = rng.split(1);
  Rng batch_rng = rng.split(2);

  RunState state;
  state.model =
      make_denoiser(static_cast<int>(points.front().size()), config.hidden_width,
                    config.hidden_layers, config.time_embed_dim, config.activation, init_rng);
  state.m1.assign(state.model.params.size(), 0.0);
  state.m2.assign(state.model.params.size(), 0.0);

  AdamParams adam{effective_learning_rate(config, true), config.adam_beta1, config.adam_beta2,
                  config.adam_eps};
  const double base_lr = adam.lr;
  detail::MetricsFlusher flusher(metrics_csv);
  double initial_loss = 0.0;
  for (std::int64_t step = 1; step <= steps; ++step) {
    adam.lr = base_lr * 0.5 *
              (1.0 + std::cos(3.14159265358979323846 * static_cast<double>(step - 1) /
                              static_cast<double>(steps)));
    const LossGraph graph =
        detail::elbo_batch(state.model, points, schedule, config.batch_size, batch_rng);
    LossEval ev = evaluate_loss(state.model, graph);
    if (step == 1) initial_loss = ev.value;
    if (!std::isfinite(ev.value) || ev.value > 1e3 * initial_loss)
      throw EngineDivergence("pretraining diverged at step " + std::to_string(step) +
                             ": loss " + std::to_string(ev.value) + " vs initial " +
                             std::to_string(initial_loss));
    adam_step(state.model.params, ev.grad_total, state.m1, state.m2, step, adam);
    state.step = step;
    state.metric_history.push_back({step, "pretrain_loss", ev.value});
    if (step % config.eval_every == 0 || step == steps) {
      if (hooks.on_eval) hooks.on_eval(state, config);
      flusher.flush(state.metric_history);
    }
  }
  return state;
}

// Deletion fine-tuning with the configured method. SISS and SISS (No IS)
// estimates are evaluated at s = 0 and the unlearn summand is rescaled each
// step so its gradient norm is target_ratio times the keep-term norm; the
// scaling factor acts linearly on the cached summand, so no re-evaluation is
// needed. NegGrad ascends its objective by negating the gradient. A batch
// whose unlearning signal vanished is logged and taken with s = 0.
inline RunState unlearn(const RunConfig& config, RunState state, const UnlearnDataset& dataset,
                        Rng& rng, const EngineHooks& hooks = {},
                        const std::string& metrics_csv = "") {
  if (!config.method) throw std::invalid_argument("unlearn: no method selected");
  const Method method = *config.method;
  if (method == Method::SISS && !config.lambda)
    throw std::invalid_argument("unlearn: lambda required for siss");
  const auto steps = config.steps.value();
  const NoiseSchedule schedule =
      build_schedule(config.schedule_T, config.beta_start, config.beta_end);
  Rng batch_rng = rng.split(3);

  // Fine-tuning starts a fresh optimizer on the pretrained weights, and the
  // metric history records this run only.
  state.m1.assign(state.model.params.size(), 0.0);
  state.m2.assign(state.model.params.size(), 0.0);
  state.metric_history.clear();
  const AdamParams adam{effective_learning_rate(config, false), config.adam_beta1,
                        config.adam_beta2, config.adam_eps};
  detail::MetricsFlusher flusher(metrics_csv);

  Vec grad(state.model.params.size());
  for (std::int64_t step = 1; step <= steps; ++step) {
    double logged_value = 0.0;
    double superfactor = 0.0;
    switch (method) {
      case Method::NaiveDeletion: {
        LossEstimate est =
            naive_deletion_loss(state.model, dataset, schedule, config.batch_size, batch_rng);
        grad = est.gradient.values;
        logged_value = est.value;
        state.metric_history.push_back({step, "keep_grad_norm", est.term_keep_grad_norm});
        break;
      }
      case Method::NegGrad: {
        LossEstimate est =
            neggrad_loss(state.model, dataset, schedule, config.batch_size, batch_rng);
        grad = est.gradient.values;
        for (auto& g : grad) g = -g;  // ascend
        logged_value = est.value;
        state.metric_history.push_back({step, "unlearn_grad_norm", est.term_unlearn_grad_norm});
        break;
      }
      case Method::EraseDiff: {
        LossEstimate est = erasediff_loss(state.model, dataset, schedule,
                                          config.erasediff_lambda, config.batch_size, batch_rng);
        grad = est.gradient.values;
        logged_value = est.value;
        state.metric_history.push_back({step, "keep_grad_norm", est.term_keep_grad_norm});
        state.metric_history.push_back({step, "unlearn_grad_norm", est.term_unlearn_grad_norm});
        break;
      }
      case Method::SISS:
      case Method::SissNoIS: {
        LossEstimate est =
            method == Method::SISS
                ? siss_loss(state.model, dataset, schedule, *config.lambda, 0.0,
                            config.batch_size, batch_rng, config.siss_form)
                : siss_no_is_loss(state.model, dataset, schedule, 0.0, config.batch_size,
                                  batch_rng);
        bool vanished = false;
        if (est.term_keep_grad_norm > 0.0) {
          try {
            superfactor = rescale_superfactor(est, dataset, config.target_ratio);
          } catch (const VanishedUnlearnSignal&) {
            superfactor = 0.0;
            vanished = true;
          }
        } else {
          // keep weights underflowed (lambda at 1); the ratio policy has no
          // reference norm, so the step is taken unscaled
          superfactor = 0.0;
          vanished = true;
        }
        const double factor = 1.0 + superfactor;  // estimate was evaluated at s = 0
        for (std::size_t i = 0; i < grad.size(); ++i)
          grad[i] = est.grad_keep_part[i] + factor * est.grad_unlearn_part[i];
        logged_value = est.term_keep_value + factor * est.term_unlearn_value;
        const double applied_unlearn_norm = factor * est.term_unlearn_grad_norm;
        state.metric_history.push_back({step, "superfactor", superfactor});
        state.metric_history.push_back({step, "keep_grad_norm", est.term_keep_grad_norm});
        state.metric_history.push_back({step, "unlearn_grad_norm", applied_unlearn_norm});
        state.metric_history.push_back(
            {step, "grad_ratio",
             est.term_keep_grad_norm > 0.0 ? applied_unlearn_norm / est.term_keep_grad_norm
                                           : 0.0});
        if (vanished) state.metric_history.push_back({step, "unlearn_signal_vanished", 1.0});
        if (!est.weights_used.empty()) {
          double wk_sum = 0.0, wu_sum = 0.0, wk_max = 0.0, wu_max = 0.0;
          for (const auto& [wk, wu] : est.weights_used) {
            wk_sum += wk;
            wu_sum += wu;
            wk_max = std::max(wk_max, wk);
            wu_max = std::max(wu_max, wu);
          }
          const double inv = 1.0 / static_cast<double>(est.weights_used.size());
          state.metric_history.push_back({step, "w_keep_mean", wk_sum * inv});
          state.metric_history.push_back({step, "w_unlearn_mean", wu_sum * inv});
          state.metric_history.push_back({step, "w_keep_max", wk_max});
          state.metric_history.push_back({step, "w_unlearn_max", wu_max});
        }
        break;
      }
    }
    adam_step(state.model.params, grad, state.m1, state.m2, step, adam);
    state.step += 1;
    state.metric_history.push_back({step, "loss", logged_value});
    if (step % config.eval_every == 0 || step == steps) {
      if (hooks.on_eval) hooks.on_eval(state, config);
      flusher.flush(state.metric_history);
    }
  }
  return state;
}

}  // namespace siss
