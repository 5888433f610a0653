#pragma once

#include <cmath>
#include <vector>

#include "siss/denoiser.hpp"
#include "siss/noise_schedule.hpp"
#include "siss/rng.hpp"

namespace siss {

// Ancestral DDPM reverse chain from x_T ~ N(0, I). Chains advance in lockstep
// so every timestep is one batched forward pass; samples are processed in
// fixed-size chunks to bound memory. Deterministic given the rng state.
inline std::vector<Vec> ddpm_sample(const DenoiserModel& model, const NoiseSchedule& s,
                                    int num_samples, Rng& rng) {
  const int d = model.data_dim();
  const int T = s.num_steps;
  constexpr int kChunk = 4096;
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(num_samples));
  for (int done = 0; done < num_samples; done += kChunk) {
    const int b = std::min(kChunk, num_samples - done);
    Mat x(static_cast<std::size_t>(b), static_cast<std::size_t>(d));
    for (auto& v : x.data) v = rng.normal();
    Mat input(static_cast<std::size_t>(b), static_cast<std::size_t>(model.input_dim()));
    Vec emb(static_cast<std::size_t>(model.time_embed_dim));
    for (int t = T; t >= 1; --t) {
      const double u = static_cast<double>(t) / T;
      time_embedding(u, model.time_embed_dim, emb.data());  // shared by all chains
      for (int r = 0; r < b; ++r) {
        double* row = input.row(static_cast<std::size_t>(r));
        const double* xs = x.row(static_cast<std::size_t>(r));
        for (int j = 0; j < d; ++j) row[j] = xs[j];
        for (int j = 0; j < model.time_embed_dim; ++j)
          row[d + j] = emb[static_cast<std::size_t>(j)];
      }
      Mat eps_hat = forward_batch(model, input, nullptr);
      const double beta = s.beta_at(t);
      const double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
      const double noise_coef = beta / s.sigma_at(t);
      // posterior variance beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t
      const double beta_tilde =
          (1.0 - s.alpha_bar_at(t - 1)) / (1.0 - s.alpha_bar_at(t)) * beta;
      const double post_sd = std::sqrt(beta_tilde);
      for (std::size_t i = 0; i < x.data.size(); ++i)
        x.data[i] = inv_sqrt_alpha * (x.data[i] - noise_coef * eps_hat.data[i]);
      if (t > 1)
        for (auto& v : x.data) v += post_sd * rng.normal();
    }
    for (int r = 0; r < b; ++r) {
      const double* row = x.row(static_cast<std::size_t>(r));
      out.emplace_back(row, row + d);
    }
  }
  return out;
}

}  // namespace siss
