#pragma once

#include <vector>

#include "siss/config.hpp"
#include "siss/likelihood.hpp"
#include "siss/metrics.hpp"
#include "siss/sampler.hpp"
#include "siss/toy_data.hpp"

namespace siss {

// Model-quality and unlearning metrics computed from a checkpointed model:
// generation rate of the unlearned cluster, exact NLL of the unlearned points
// and of fresh held-out keep-distribution points, and the sample-vs-keep MMD.
struct EvalResult {
  RateEstimate rate;
  double nll_unlearn_bits = 0.0;  // mean over the unlearning set
  double nll_keep_bits = 0.0;     // mean over held-out keep points
  double quality_mmd = 0.0;
};

inline std::vector<Vec> held_out_keep_points(const RunConfig& cfg, int count) {
  Rng rng(cfg.data_seed + 1);
  return sample_mode_mixture(cfg.data, count, rng);
}

inline EvalResult evaluate_model(const DenoiserModel& model, const NoiseSchedule& schedule,
                                 const UnlearnDataset& ds, const RunConfig& cfg,
                                 int num_samples, Rng& rng) {
  EvalResult ev;
  const std::vector<Vec> samples = ddpm_sample(model, schedule, num_samples, rng);
  ev.rate = unlearn_rate(samples, cfg.data);
  ev.quality_mmd = quality_proxy(samples, ds.keep_points);

  std::vector<Vec> unlearn_pts = ds.unlearn_points;
  if (static_cast<int>(unlearn_pts.size()) > cfg.eval_nll_points)
    unlearn_pts.resize(static_cast<std::size_t>(cfg.eval_nll_points));
  const auto nll_unlearn = exact_nll_batch(model, schedule, unlearn_pts, cfg.nll_ode_steps);
  double sum = 0.0;
  for (const auto& r : nll_unlearn) sum += r.nll_bits_per_dim;
  ev.nll_unlearn_bits = sum / static_cast<double>(nll_unlearn.size());

  const auto held_out = held_out_keep_points(cfg, cfg.eval_nll_points);
  const auto nll_keep = exact_nll_batch(model, schedule, held_out, cfg.nll_ode_steps);
  sum = 0.0;
  for (const auto& r : nll_keep) sum += r.nll_bits_per_dim;
  ev.nll_keep_bits = sum / static_cast<double>(nll_keep.size());
  return ev;
}

}  // namespace siss
