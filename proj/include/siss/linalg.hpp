#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace siss {

using Vec = std::vector<double>;

inline double dot(const double* a, const double* b, std::size_t n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

inline double dot(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: size mismatch");
  return dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline void axpy(double alpha, const Vec& x, Vec& y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy: size mismatch");
  axpy(alpha, x.data(), y.data(), x.size());
}

inline double squared_norm(const Vec& v) { return dot(v.data(), v.data(), v.size()); }

inline double norm(const Vec& v) { return std::sqrt(squared_norm(v)); }

inline double squared_distance(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("squared_distance: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline void scale(Vec& v, double alpha) {
  for (auto& x : v) x *= alpha;
}

inline Vec scaled(const Vec& v, double alpha) {
  Vec out(v);
  scale(out, alpha);
  return out;
}

inline Vec add(const Vec& a, const Vec& b) {
  Vec out(a);
  axpy(1.0, b, out);
  return out;
}

inline Vec sub(const Vec& a, const Vec& b) {
  Vec out(a);
  axpy(-1.0, b, out);
  return out;
}

// Dense row-major matrix used as a batch of row vectors.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

// C = A * W^T + bias, where A is batch x in, W is out x in (row-major) and
// bias has length out. W is transposed into a scratch buffer so the inner
// update runs over contiguous output slices; unlike a dot-product reduction
// this vectorizes under strict floating-point semantics, and the accumulation
// order (ascending input index per output) is identical for every batch size.
// Rows and outputs are blocked so the active weight slice stays cache
// resident and the accumulator tile lives in registers.
inline void linear_forward(const Mat& a, const double* w, const double* bias,
                           std::size_t in, std::size_t out, Mat& c) {
  if (a.cols != in) throw std::invalid_argument("linear_forward: input width mismatch");
  c.rows = a.rows;
  c.cols = out;
  c.data.resize(a.rows * out);
  thread_local Vec wt;
  wt.resize(in * out);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) wt[i * out + o] = w[o * in + i];

  constexpr std::size_t kRowBlock = 32;
  constexpr std::size_t kOutTile = 64;  // 8 independent vector accumulator chains
  const std::size_t out_main = out - out % kOutTile;
  for (std::size_t r0 = 0; r0 < a.rows; r0 += kRowBlock) {
    const std::size_t r1 = std::min(a.rows, r0 + kRowBlock);
    for (std::size_t o0 = 0; o0 < out_main; o0 += kOutTile) {
      for (std::size_t r = r0; r < r1; ++r) {
        const double* arow = a.row(r);
        double acc[kOutTile];
        for (std::size_t j = 0; j < kOutTile; ++j) acc[j] = bias[o0 + j];
        const double* wcol = wt.data() + o0;
        for (std::size_t i = 0; i < in; ++i) {
          const double v = arow[i];
          const double* wrow = wcol + i * out;
          for (std::size_t j = 0; j < kOutTile; ++j) acc[j] += v * wrow[j];
        }
        double* crow = c.row(r) + o0;
        for (std::size_t j = 0; j < kOutTile; ++j) crow[j] = acc[j];
      }
    }
    if (out_main < out) {
      const std::size_t rest = out - out_main;
      for (std::size_t r = r0; r < r1; ++r) {
        const double* arow = a.row(r);
        double* crow = c.row(r) + out_main;
        for (std::size_t j = 0; j < rest; ++j) crow[j] = bias[out_main + j];
        for (std::size_t i = 0; i < in; ++i) {
          const double v = arow[i];
          const double* wrow = wt.data() + i * out + out_main;
          for (std::size_t j = 0; j < rest; ++j) crow[j] += v * wrow[j];
        }
      }
    }
  }
}

// grad_w[o, i] += sum_r d_pre[r, o] * act[r, i];  grad_b[o] += sum_r d_pre[r, o]
inline void linear_backward_params(const Mat& act, const Mat& d_pre,
                                   double* grad_w, double* grad_b) {
  const std::size_t in = act.cols, out = d_pre.cols;
  for (std::size_t r = 0; r < act.rows; ++r) {
    const double* arow = act.row(r);
    const double* drow = d_pre.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      const double g = drow[o];
      if (g != 0.0) axpy(g, arow, grad_w + o * in, in);
      grad_b[o] += g;
    }
  }
}

// d_act[r, i] = sum_o d_pre[r, o] * w[o, i]
inline void linear_backward_input(const Mat& d_pre, const double* w,
                                  std::size_t in, Mat& d_act) {
  const std::size_t out = d_pre.cols;
  d_act.rows = d_pre.rows;
  d_act.cols = in;
  d_act.data.assign(d_pre.rows * in, 0.0);
  for (std::size_t r = 0; r < d_pre.rows; ++r) {
    const double* drow = d_pre.row(r);
    double* orow = d_act.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      const double g = drow[o];
      if (g != 0.0) axpy(g, w + o * in, orow, in);
    }
  }
}

}  // namespace siss
