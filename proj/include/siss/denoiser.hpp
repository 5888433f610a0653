#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "siss/fastmath.hpp"
#include "siss/linalg.hpp"
#include "siss/noise_schedule.hpp"
#include "siss/rng.hpp"

namespace siss {

enum class Activation { SiLU, Tanh };

inline std::string activation_name(Activation a) {
  return a == Activation::SiLU ? "silu" : "tanh";
}

inline Activation activation_from_name(const std::string& name) {
  if (name == "silu") return Activation::SiLU;
  if (name == "tanh") return Activation::Tanh;
  throw std::invalid_argument("unknown activation: " + name);
}

// Fully-connected noise predictor. The input is the noisy sample concatenated
// with a sinusoidal embedding of t/T; all weights and biases live in one flat
// parameter vector (layout per layer: row-major weight matrix, then bias) so
// the optimizer and norm bookkeeping stay architecture-agnostic.
struct DenoiserModel {
  std::vector<int> layer_sizes;  // [input_dim, hidden..., data_dim]
  int time_embed_dim = 0;
  Activation activation = Activation::SiLU;
  Vec params;
  mutable std::uint64_t forward_rows_audit = 0;  // rows pushed through the net

  int input_dim() const { return layer_sizes.front(); }
  int data_dim() const { return layer_sizes.back(); }
  std::size_t num_layers() const { return layer_sizes.size() - 1; }
};

inline std::size_t denoiser_param_count(const std::vector<int>& layer_sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += static_cast<std::size_t>(layer_sizes[l] + 1) * static_cast<std::size_t>(layer_sizes[l + 1]);
  return n;
}

// Offset of layer l's weights in the flat vector; bias follows the weights.
inline std::size_t layer_param_offset(const std::vector<int>& layer_sizes, std::size_t l) {
  std::size_t off = 0;
  for (std::size_t i = 0; i < l; ++i)
    off += static_cast<std::size_t>(layer_sizes[i] + 1) * static_cast<std::size_t>(layer_sizes[i + 1]);
  return off;
}

inline void validate_model(const DenoiserModel& m) {
  if (m.layer_sizes.size() < 2) throw std::invalid_argument("model needs >= 1 layer");
  for (int s : m.layer_sizes)
    if (s < 1) throw std::invalid_argument("layer sizes must be positive");
  if (m.time_embed_dim < 2 || m.time_embed_dim % 2 != 0)
    throw std::invalid_argument("time_embed_dim must be a positive even number");
  if (m.input_dim() != m.data_dim() + m.time_embed_dim)
    throw std::invalid_argument("input_dim must equal data_dim + time_embed_dim");
  if (m.params.size() != denoiser_param_count(m.layer_sizes))
    throw std::invalid_argument("parameter vector length does not match architecture");
}

// He-style scaled normal initialization, biases zero.
inline DenoiserModel make_denoiser(int data_dim, int hidden_width, int hidden_layers,
                                   int time_embed_dim, Activation act, Rng& rng) {
  DenoiserModel m;
  m.time_embed_dim = time_embed_dim;
  m.activation = act;
  m.layer_sizes.push_back(data_dim + time_embed_dim);
  for (int i = 0; i < hidden_layers; ++i) m.layer_sizes.push_back(hidden_width);
  m.layer_sizes.push_back(data_dim);
  m.params.assign(denoiser_param_count(m.layer_sizes), 0.0);
  for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
    const auto in = static_cast<std::size_t>(m.layer_sizes[l]);
    const auto out = static_cast<std::size_t>(m.layer_sizes[l + 1]);
    const double sd = std::sqrt(2.0 / static_cast<double>(in));
    double* w = m.params.data() + layer_param_offset(m.layer_sizes, l);
    for (std::size_t i = 0; i < in * out; ++i) w[i] = sd * rng.normal();
  }
  validate_model(m);
  return m;
}

// Sinusoidal embedding of u = t/T with log-spaced frequencies in [1, 1000].
inline void time_embedding(double u, int dim, double* out) {
  const int half = dim / 2;
  thread_local std::vector<double> freqs;
  if (static_cast<int>(freqs.size()) != half) {
    freqs.resize(static_cast<std::size_t>(half));
    for (int i = 0; i < half; ++i)
      freqs[static_cast<std::size_t>(i)] =
          half > 1 ? std::exp(std::log(1000.0) * static_cast<double>(i) /
                              static_cast<double>(half - 1))
                   : 1.0;
  }
  for (int i = 0; i < half; ++i) {
    out[2 * i] = std::sin(freqs[static_cast<std::size_t>(i)] * u);
    out[2 * i + 1] = std::cos(freqs[static_cast<std::size_t>(i)] * u);
  }
}

inline void embed_row(const DenoiserModel& m, const double* x, double u, double* row) {
  const int d = m.data_dim();
  for (int i = 0; i < d; ++i) row[i] = x[i];
  time_embedding(u, m.time_embed_dim, row + d);
}

// Activations and local gradients kept for the backward pass. acts[0] is the
// embedded input, acts[l] the output of layer l; gates[l] holds d act/d pre
// for hidden layer l.
struct ForwardCache {
  std::vector<Mat> acts;
  std::vector<Mat> gates;
};

inline void apply_activation(Activation act, Mat& pre, Mat* gate) {
  double* v = pre.data.data();
  const std::size_t n = pre.data.size();
  if (gate) {
    gate->rows = pre.rows;
    gate->cols = pre.cols;
    gate->data.resize(n);
  }
  double* g = gate ? gate->data.data() : nullptr;
  if (act == Activation::SiLU) {
    for (std::size_t i = 0; i < n; ++i) {
      const double z = v[i];
      const double s = 1.0 / (1.0 + fast_exp(-z));
      if (g) g[i] = s * (1.0 + z * (1.0 - s));
      v[i] = z * s;
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const double th = fast_tanh(v[i]);
      if (g) g[i] = 1.0 - th * th;
      v[i] = th;
    }
  }
}

// Forward pass over a batch of embedded input rows. When cache is non-null
// the intermediate activations are recorded for backprop; otherwise the
// hidden layers ping-pong between thread-local scratch buffers so repeated
// large batches do not reallocate.
inline Mat forward_batch(const DenoiserModel& m, Mat input, ForwardCache* cache) {
  if (input.cols != static_cast<std::size_t>(m.input_dim()))
    throw std::invalid_argument("forward_batch: input width mismatch");
  m.forward_rows_audit += input.rows;
  const std::size_t layers = m.num_layers();
  if (cache) {
    cache->acts.assign(layers + 1, Mat());
    cache->gates.assign(layers > 0 ? layers - 1 : 0, Mat());
    cache->acts[0] = input;
    Mat cur = std::move(input);
    Mat next;
    for (std::size_t l = 0; l < layers; ++l) {
      const auto in = static_cast<std::size_t>(m.layer_sizes[l]);
      const auto out = static_cast<std::size_t>(m.layer_sizes[l + 1]);
      const double* w = m.params.data() + layer_param_offset(m.layer_sizes, l);
      const double* b = w + in * out;
      linear_forward(cur, w, b, in, out, next);
      if (l + 1 < layers) apply_activation(m.activation, next, &cache->gates[l]);
      cur = std::move(next);
      cache->acts[l + 1] = cur;
    }
    return cur;
  }
  thread_local Mat scratch_a, scratch_b;
  Mat* cur = &input;
  Mat* next = &scratch_a;
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<std::size_t>(m.layer_sizes[l]);
    const auto out = static_cast<std::size_t>(m.layer_sizes[l + 1]);
    const double* w = m.params.data() + layer_param_offset(m.layer_sizes, l);
    const double* b = w + in * out;
    linear_forward(*cur, w, b, in, out, *next);
    if (l + 1 < layers) apply_activation(m.activation, *next, nullptr);
    Mat* spare = cur == &input ? &scratch_b : cur;
    cur = next;
    next = spare;
  }
  if (cur == &input) return input;
  Mat out = *cur;  // final layer output is narrow; copying keeps the scratch alive
  return out;
}

// Accumulates d loss / d params into grad given d loss / d output rows.
inline void backward_batch(const DenoiserModel& m, const ForwardCache& cache,
                           const Mat& d_out, Vec& grad) {
  if (grad.size() != m.params.size())
    throw std::invalid_argument("backward_batch: gradient buffer size mismatch");
  const std::size_t layers = m.num_layers();
  Mat d_cur = d_out;
  Mat d_prev;
  for (std::size_t l = layers; l-- > 0;) {
    const auto in = static_cast<std::size_t>(m.layer_sizes[l]);
    const auto out = static_cast<std::size_t>(m.layer_sizes[l + 1]);
    const std::size_t off = layer_param_offset(m.layer_sizes, l);
    double* gw = grad.data() + off;
    double* gb = gw + in * out;
    linear_backward_params(cache.acts[l], d_cur, gw, gb);
    if (l == 0) break;
    const double* w = m.params.data() + off;
    linear_backward_input(d_cur, w, in, d_prev);
    const Mat& gate = cache.gates[l - 1];
    for (std::size_t i = 0; i < d_prev.data.size(); ++i) d_prev.data[i] *= gate.data[i];
    d_cur = std::move(d_prev);
  }
}

// Single forward pass at continuous time position u = t/T.
inline Vec predict_noise_at(const DenoiserModel& m, const Vec& x, double u) {
  if (x.size() != static_cast<std::size_t>(m.data_dim()))
    throw std::invalid_argument("predict_noise: input dimension mismatch");
  Mat input(1, static_cast<std::size_t>(m.input_dim()));
  embed_row(m, x.data(), u, input.row(0));
  Mat out = forward_batch(m, std::move(input), nullptr);
  return Vec(out.row(0), out.row(0) + out.cols);
}

// eps_theta(x_t, t) for a discrete timestep of the given schedule.
inline Vec predict_noise(const DenoiserModel& m, const Vec& x_t, int t,
                         const NoiseSchedule& schedule) {
  schedule.check_t(t);
  return predict_noise_at(m, x_t, static_cast<double>(t) / schedule.num_steps);
}

}  // namespace siss
