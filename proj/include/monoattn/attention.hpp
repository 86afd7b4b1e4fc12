#pragma once

// Monotonic cross-attention machinery: prior alignment construction,
// chunk synchronization, and expected-context computation in both the
// nested reference form and the cumulative-sum efficient form.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "monoattn/lattice.hpp"
#include "monoattn/tensor.hpp"

namespace monoattn {

// Rows 1..U uniform over all T timesteps; row 0 concentrated at t = 1.
inline AlignmentMatrix uniform_prior(int T, int U) {
  if (T < 1) throw std::invalid_argument("uniform_prior: T must be >= 1");
  AlignmentMatrix out;
  out.kind = AlignKind::uniform_prior;
  out.probs = Mat(U + 1, T, 1.0 / T);
  for (int t = 0; t < T; ++t) out.probs(0, t) = t == 0 ? 1.0 : 0.0;
  return out;
}

// w(u, t) = exp(-|u - t*U/T|), rows normalized; assumes a uniform
// source-target pacing. Row 0 as in the uniform prior.
inline AlignmentMatrix diagonal_prior(int T, int U) {
  if (T < 1) throw std::invalid_argument("diagonal_prior: T must be >= 1");
  AlignmentMatrix out;
  out.kind = AlignKind::diagonal_prior;
  out.probs = Mat(U + 1, T, 0.0);
  out.probs(0, 0) = 1.0;
  for (int u = 1; u <= U; ++u) {
    double sum = 0.0;
    for (int t = 0; t < T; ++t) {
      // math indices are 1-based: t_math = t + 1
      double w = std::exp(-std::abs(u - (t + 1.0) * U / T));
      out.probs(u, t) = w;
      sum += w;
    }
    for (int t = 0; t < T; ++t) out.probs(u, t) /= sum;
  }
  return out;
}

// Moves each row's mass within chunk d onto the chunk-final frame d*C.
// A trailing partial chunk maps to the last frame T.
inline AlignmentMatrix chunk_synchronize(const AlignmentMatrix& align,
                                         int chunk_frames) {
  if (chunk_frames < 1)
    throw std::invalid_argument("chunk_synchronize: chunk_frames must be >= 1");
  if (align.chunk_synced)
    throw std::invalid_argument("chunk_synchronize: already chunk-synced");
  const int rows = align.probs.rows, T = align.probs.cols;
  AlignmentMatrix out;
  out.kind = align.kind;
  out.chunk_synced = true;
  out.chunk_frames = chunk_frames;
  out.probs = Mat(rows, T, 0.0);
  for (int u = 0; u < rows; ++u)
    for (int t = 0; t < T; ++t) {
      int chunk_end = std::min(((t / chunk_frames) + 1) * chunk_frames, T);
      out.probs(u, chunk_end - 1) += align.probs(u, t);
    }
  return out;
}

// One-hot rows at the given (0-based) frame indices.
inline AlignmentMatrix one_hot_alignment(const std::vector<int>& frames,
                                         int T) {
  AlignmentMatrix out;
  out.kind = AlignKind::posterior;
  out.probs = Mat(static_cast<int>(frames.size()), T, 0.0);
  for (size_t u = 0; u < frames.size(); ++u) {
    if (frames[u] < 0 || frames[u] >= T)
      throw std::out_of_range("one_hot_alignment: frame out of range");
    out.probs(static_cast<int>(u), frames[u]) = 1.0;
  }
  return out;
}

// All rows one-hot at the final frame: full-sentence attention (offline).
inline AlignmentMatrix offline_alignment(int T, int U) {
  return one_hot_alignment(std::vector<int>(static_cast<size_t>(U) + 1, T - 1),
                           T);
}

// Maps a (U+1, Tp) alignment over pooled timesteps onto raw encoder frames:
// pooled index t' covers frames up to min((t'+1)*step, T) and its mass goes
// to that window's last frame.
inline AlignmentMatrix expand_to_frames(const AlignmentMatrix& pooled,
                                        int decision_step, int T) {
  AlignmentMatrix out;
  out.kind = pooled.kind;
  out.chunk_synced = pooled.chunk_synced;
  out.chunk_frames = pooled.chunk_frames * decision_step;
  out.probs = Mat(pooled.probs.rows, T, 0.0);
  for (int u = 0; u < pooled.probs.rows; ++u)
    for (int tp = 0; tp < pooled.probs.cols; ++tp) {
      int frame = std::min((tp + 1) * decision_step, T) - 1;
      out.probs(u, frame) += pooled.probs(u, tp);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Expected context, nested reference form:
//   c_u = sum_t pi(u,t) * softmax(e_{u,1..t}) . h_{1..t}
// Plain-double; used as the oracle for the efficient form.

inline Mat expected_context_nested(const Mat& energies, const AlignmentMatrix& align,
                                   const Mat& H) {
  const int rows = energies.rows, T = energies.cols, d = H.cols;
  if (align.probs.rows != rows || align.probs.cols != T || H.rows != T)
    throw std::invalid_argument("expected_context_nested: shape mismatch");
  Mat out(rows, d, 0.0);
  for (int u = 0; u < rows; ++u) {
    for (int t = 0; t < T; ++t) {
      double pi = align.probs(u, t);
      if (pi == 0.0) continue;
      double mx = kNegInf;
      for (int tp = 0; tp <= t; ++tp) mx = std::max(mx, energies(u, tp));
      double denom = 0.0;
      for (int tp = 0; tp <= t; ++tp) denom += std::exp(energies(u, tp) - mx);
      for (int tp = 0; tp <= t; ++tp) {
        double w = pi * std::exp(energies(u, tp) - mx) / denom;
        for (int c = 0; c < d; ++c) out(u, c) += w * H(tp, c);
      }
    }
  }
  return out;
}

// Effective weights phi(u, t) of the efficient form, plain-double:
//   phi(u,t) = exp(e_{u,t}) * sum_{t'>=t} pi(u,t') / D(u,t'),
//   D(u,t')  = sum_{t''<=t'} exp(e_{u,t''})
// Max-shifted by the row maximum (a global shift cancels exactly).
inline Mat expected_context_weights(const Mat& energies,
                                    const AlignmentMatrix& align) {
  const int rows = energies.rows, T = energies.cols;
  if (align.probs.rows != rows || align.probs.cols != T)
    throw std::invalid_argument("expected_context_weights: shape mismatch");
  Mat phi(rows, T, 0.0);
  for (int u = 0; u < rows; ++u) {
    double mx = kNegInf;
    for (int t = 0; t < T; ++t) mx = std::max(mx, energies(u, t));
    std::vector<double> denom(T);
    double acc = 0.0;
    for (int t = 0; t < T; ++t) {
      acc += std::exp(energies(u, t) - mx);
      denom[t] = acc;
    }
    double tail = 0.0;
    for (int t = T - 1; t >= 0; --t) {
      tail += align.probs(u, t) / denom[t];
      phi(u, t) = std::exp(energies(u, t) - mx) * tail;
    }
  }
  return phi;
}

inline Mat expected_context_efficient(const Mat& energies,
                                      const AlignmentMatrix& align,
                                      const Mat& H) {
  Mat phi = expected_context_weights(energies, align);
  const int rows = phi.rows, T = phi.cols, d = H.cols;
  Mat out(rows, d, 0.0);
  for (int u = 0; u < rows; ++u)
    for (int t = 0; t < T; ++t) {
      double w = phi(u, t);
      if (w == 0.0) continue;
      for (int c = 0; c < d; ++c) out(u, c) += w * H(t, c);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable efficient form on autodiff tensors. The alignment enters
// as a constant; gradients flow through energies and H only.

inline Tensor expected_context_efficient_t(const Tensor& energies,
                                           const AlignmentMatrix& align,
                                           const Tensor& H) {
  const int rows = energies.dim(0), T = energies.dim(1);
  if (align.probs.rows != rows || align.probs.cols != T || H.dim(0) != T)
    throw std::invalid_argument("expected_context_efficient_t: shape mismatch");
  // Row-max shift as a constant (exact: a per-row global shift cancels).
  std::vector<double> shift(static_cast<size_t>(rows) * T);
  for (int u = 0; u < rows; ++u) {
    double mx = kNegInf;
    for (int t = 0; t < T; ++t)
      mx = std::max(mx, energies.at(static_cast<int64_t>(u) * T + t));
    for (int t = 0; t < T; ++t) shift[static_cast<size_t>(u) * T + t] = -mx;
  }
  Tensor shifted = add(energies, Tensor::from({rows, T}, std::move(shift)));
  Tensor ex = exp(shifted);
  Tensor denom = cumsum_rows(ex);
  Tensor pi = Tensor::from({rows, T}, align.probs.v);
  Tensor tail = revcumsum_rows(div(pi, denom));
  Tensor phi = mul(ex, tail);
  return matmul(phi, H);
}

}  // namespace monoattn
