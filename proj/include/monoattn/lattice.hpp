#pragma once

// Log-space dynamic programming over the Transducer alignment lattice:
// forward/backward variables, total output probability, posterior alignment
// inference, and brute-force path-enumeration oracles for small lattices.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "monoattn/tensor.hpp"

namespace monoattn {

inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = a > b ? a : b;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

// Small row-major matrix of doubles.
struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0)
      : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {}
  double& operator()(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const {
    return v[static_cast<size_t>(r) * cols + c];
  }
};

// Log-probability lattice: entry (t, u, v) = log p(v | t, u) with t in
// [0, T), u in [0, U], v in [0, V]; index V is the blank.
struct ProbLattice {
  int T = 0;  // joiner timesteps (decision-step-pooled encoder frames)
  int U = 0;  // target length
  int V = 0;  // vocabulary size; blank id == V
  std::vector<double> log_probs;  // size T * (U+1) * (V+1)
  std::vector<int> targets;       // y_1..y_U, each in [0, V)

  ProbLattice() = default;
  ProbLattice(int t, int u, int v)
      : T(t),
        U(u),
        V(v),
        log_probs(static_cast<size_t>(t) * (u + 1) * (v + 1), kNegInf) {}

  double& at(int t, int u, int v) {
    return log_probs[(static_cast<size_t>(t) * (U + 1) + u) * (V + 1) + v];
  }
  double at(int t, int u, int v) const {
    return log_probs[(static_cast<size_t>(t) * (U + 1) + u) * (V + 1) + v];
  }
  int blank() const { return V; }

  void validate() const {
    if (T < 1) throw std::invalid_argument("lattice: T must be >= 1");
    if (U > 0 && static_cast<int>(targets.size()) != U)
      throw std::invalid_argument("lattice: target length mismatch");
    for (double x : log_probs)
      if (std::isnan(x)) throw std::invalid_argument("lattice: NaN entry");
  }
};

enum class AlignKind { posterior, uniform_prior, diagonal_prior };

// Row-stochastic (U+1) x T matrix: row u is the distribution over the
// timestep at which predictor state s_u becomes active.
struct AlignmentMatrix {
  Mat probs;
  AlignKind kind = AlignKind::posterior;
  bool chunk_synced = false;
  int chunk_frames = 0;  // 0 when not chunk-synced
};

// ---------------------------------------------------------------------------
// Forward-backward recursions (all log domain).

inline Mat forward_vars(const ProbLattice& lat) {
  lat.validate();
  const int T = lat.T, U = lat.U, blank = lat.blank();
  Mat a(T, U + 1, kNegInf);
  a(0, 0) = 0.0;
  for (int t = 0; t < T; ++t)
    for (int u = 0; u <= U; ++u) {
      if (t == 0 && u == 0) continue;
      double x = kNegInf;
      if (t > 0) x = log_add(x, a(t - 1, u) + lat.at(t - 1, u, blank));
      if (u > 0) x = log_add(x, a(t, u - 1) + lat.at(t, u - 1, lat.targets[u - 1]));
      a(t, u) = x;
    }
  return a;
}

inline Mat backward_vars(const ProbLattice& lat) {
  lat.validate();
  const int T = lat.T, U = lat.U, blank = lat.blank();
  Mat b(T, U + 1, kNegInf);
  b(T - 1, U) = lat.at(T - 1, U, blank);
  for (int t = T - 1; t >= 0; --t)
    for (int u = U; u >= 0; --u) {
      if (t == T - 1 && u == U) continue;
      double x = kNegInf;
      if (t < T - 1) x = log_add(x, b(t + 1, u) + lat.at(t, u, blank));
      if (u < U) x = log_add(x, b(t, u + 1) + lat.at(t, u, lat.targets[u]));
      b(t, u) = x;
    }
  return b;
}

// log p(y | x) = log alpha(T, U) + log p(eps | T, U); -inf when no path
// has positive probability.
inline double total_log_prob(const ProbLattice& lat) {
  Mat a = forward_vars(lat);
  return a(lat.T - 1, lat.U) + lat.at(lat.T - 1, lat.U, lat.blank());
}

// Posterior alignment pi(u, t): probability that y_u is generated right
// after reading timestep t. Row 0 places all mass at t = 1 (the s_0 edge
// case). Requires total probability > 0.
inline AlignmentMatrix posterior_alignment(const ProbLattice& lat) {
  Mat a = forward_vars(lat);
  Mat b = backward_vars(lat);
  const int T = lat.T, U = lat.U;
  double total = a(T - 1, U) + lat.at(T - 1, U, lat.blank());
  if (total == kNegInf)
    throw std::domain_error("posterior undefined: total probability is zero");
  AlignmentMatrix out;
  out.kind = AlignKind::posterior;
  out.probs = Mat(U + 1, T, 0.0);
  out.probs(0, 0) = 1.0;
  for (int u = 1; u <= U; ++u)
    for (int t = 0; t < T; ++t)
      out.probs(u, t) = std::exp(a(t, u - 1) +
                                 lat.at(t, u - 1, lat.targets[u - 1]) +
                                 b(t, u) - total);
  return out;
}

// ---------------------------------------------------------------------------
// Brute-force oracles: explicit enumeration of every monotone path from
// (1, 0) to (T, U) ending in a final blank. Probability-domain arithmetic.

namespace detail {

constexpr int kBruteMaxT = 8;
constexpr int kBruteMaxU = 7;

inline void brute_check_size(const ProbLattice& lat) {
  if (lat.T > kBruteMaxT || lat.U > kBruteMaxU)
    throw std::invalid_argument("brute force: lattice too large");
}

template <typename Visit>
inline void enumerate_paths(const ProbLattice& lat, int t, int u, double prob,
                            std::vector<int>& emit_times, Visit&& visit) {
  const int T = lat.T, U = lat.U;
  if (t == T - 1 && u == U) {
    visit(prob * std::exp(lat.at(t, u, lat.blank())), emit_times);
    return;
  }
  if (t + 1 < T)
    enumerate_paths(lat, t + 1, u,
                    prob * std::exp(lat.at(t, u, lat.blank())), emit_times,
                    visit);
  if (u < U) {
    emit_times.push_back(t);
    enumerate_paths(lat, t, u + 1,
                    prob * std::exp(lat.at(t, u, lat.targets[u])), emit_times,
                    visit);
    emit_times.pop_back();
  }
}

}  // namespace detail

inline double brute_force_total_prob(const ProbLattice& lat) {
  lat.validate();
  detail::brute_check_size(lat);
  double total = 0.0;
  std::vector<int> emit_times;
  detail::enumerate_paths(lat, 0, 0, 1.0, emit_times,
                          [&](double p, const std::vector<int>&) { total += p; });
  return total;
}

inline AlignmentMatrix brute_force_posterior(const ProbLattice& lat) {
  lat.validate();
  detail::brute_check_size(lat);
  const int T = lat.T, U = lat.U;
  Mat mass(U + 1, T, 0.0);
  double total = 0.0;
  std::vector<int> emit_times;
  detail::enumerate_paths(lat, 0, 0, 1.0, emit_times,
                          [&](double p, const std::vector<int>& times) {
                            total += p;
                            for (int u = 0; u < U; ++u)
                              mass(u + 1, times[u]) += p;
                          });
  if (total <= 0.0)
    throw std::domain_error("posterior undefined: total probability is zero");
  AlignmentMatrix out;
  out.kind = AlignKind::posterior;
  out.probs = Mat(U + 1, T, 0.0);
  out.probs(0, 0) = 1.0;
  for (int u = 1; u <= U; ++u)
    for (int t = 0; t < T; ++t) out.probs(u, t) = mass(u, t) / total;
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable transducer loss: -log p(y | x) as a single autodiff op on
// a (T*(U+1), V+1) log-probability tensor. The backward pass uses the
// analytic forward-backward gradient.

inline Tensor transducer_loss(const Tensor& log_probs, int T, int U, int V,
                              const std::vector<int>& targets) {
  if (log_probs.dim(0) != T * (U + 1) || log_probs.dim(1) != V + 1)
    throw std::invalid_argument("transducer_loss: shape mismatch");
  ProbLattice lat(T, U, V);
  lat.targets = targets;
  lat.log_probs = log_probs.values();
  Mat a = forward_vars(lat);
  Mat b = backward_vars(lat);
  const int blank = V;
  double total = a(T - 1, U) + lat.at(T - 1, U, blank);
  auto ln = log_probs.node();
  return detail::make_op(
      {1}, {-total}, {log_probs},
      [ln, a, b, T, U, V, blank, total, targets](TensorNode& self) {
        if (total == kNegInf) return;  // no path: no useful gradient
        ln->ensure_grad();
        double g0 = self.grad[0];
        auto idx = [&](int t, int u, int v) {
          return (static_cast<size_t>(t) * (U + 1) + u) * (V + 1) + v;
        };
        for (int t = 0; t < T; ++t)
          for (int u = 0; u <= U; ++u) {
            // blank transition (t, u) -> (t+1, u); final blank at (T-1, U)
            double lp_blank = ln->value[idx(t, u, blank)];
            if (t == T - 1 && u == U) {
              double w = std::exp(a(t, u) + lp_blank - total);
              ln->grad[idx(t, u, blank)] += g0 * -w;
            } else if (t < T - 1) {
              double w = std::exp(a(t, u) + lp_blank + b(t + 1, u) - total);
              ln->grad[idx(t, u, blank)] += g0 * -w;
            }
            // token transition (t, u) -> (t, u+1)
            if (u < U) {
              double lp_tok = ln->value[idx(t, u, targets[u])];
              double w = std::exp(a(t, u) + lp_tok + b(t, u + 1) - total);
              ln->grad[idx(t, u, targets[u])] += g0 * -w;
            }
          }
      });
}

}  // namespace monoattn
