#pragma once

// Latency metrics over decode traces (AL, LAAL, AP, DAL, with
// computation-aware variants), quality metrics for synthetic tasks, and
// non-monotonicity scoring via alignment inversion counts.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "monoattn/decode.hpp"

namespace monoattn {

// Delays in source-token units: d(u) = g(u), optionally inflated by
// per-token computation time (stamp seconds / frame duration).
inline std::vector<double> trace_delays(const DecodeTrace& trace,
                                        bool computation_aware,
                                        double frame_duration_s = 0.0) {
  std::vector<double> d;
  d.reserve(trace.g.size());
  size_t wi = 0;
  for (const auto& e : trace.events) {
    if (e.kind != DecodeEvent::Kind::WRITE) continue;
    double delay = trace.g[wi];
    if (computation_aware) {
      if (!trace.has_stamps || frame_duration_s <= 0.0)
        throw std::invalid_argument(
            "computation-aware latency needs stamps and a frame duration");
      delay += e.stamp / frame_duration_s;
    }
    d.push_back(delay);
    ++wi;
  }
  return d;
}

// AL = (1/tau) sum_{u<=tau} [d(u) - (u-1)/gamma], gamma = |y|/T,
// tau = first u with g(u) = T (inclusive).
inline std::optional<double> average_lagging(const std::vector<double>& delays,
                                             int T, int reference_length) {
  if (delays.empty()) return std::nullopt;
  double gamma = static_cast<double>(reference_length) / T;
  size_t tau = delays.size();
  for (size_t u = 0; u < delays.size(); ++u)
    if (delays[u] >= T) {
      tau = u + 1;
      break;
    }
  double s = 0.0;
  for (size_t u = 0; u < tau; ++u)
    s += delays[u] - static_cast<double>(u) / gamma;
  return s / static_cast<double>(tau);
}

// LAAL: AL with gamma = max(|y|, |y_hat|)/T.
inline std::optional<double> laal(const std::vector<double>& delays, int T,
                                  int reference_length, int hypothesis_length) {
  return average_lagging(delays, T,
                         std::max(reference_length, hypothesis_length));
}

// AP = (1/(T * |y_hat|)) sum_u d(u).
inline std::optional<double> average_proportion(const std::vector<double>& delays,
                                                int T) {
  if (delays.empty()) return std::nullopt;
  double s = 0.0;
  for (double d : delays) s += d;
  return s / (static_cast<double>(T) * static_cast<double>(delays.size()));
}

// DAL with d'(u) = max(d(u), d'(u-1) + 1/gamma), averaged over all tokens.
inline std::optional<double> differentiable_average_lagging(
    const std::vector<double>& delays, int T, int reference_length) {
  if (delays.empty()) return std::nullopt;
  double gamma = static_cast<double>(reference_length) / T;
  double s = 0.0, prev = -std::numeric_limits<double>::infinity();
  for (size_t u = 0; u < delays.size(); ++u) {
    double d = std::max(delays[u], prev + 1.0 / gamma);
    prev = d;
    s += d - static_cast<double>(u) / gamma;
  }
  return s / static_cast<double>(delays.size());
}

struct LatencyReport {
  std::optional<double> al, laal, ap, dal;
  std::optional<double> al_ca, laal_ca, ap_ca, dal_ca;
};

inline LatencyReport latency_report(const DecodeTrace& trace,
                                    int reference_length,
                                    double frame_duration_s = 0.0) {
  LatencyReport r;
  const int T = trace.frames_total;
  const int hyp_len = static_cast<int>(trace.g.size());
  std::vector<double> d = trace_delays(trace, false);
  r.al = average_lagging(d, T, reference_length);
  r.laal = laal(d, T, reference_length, hyp_len);
  r.ap = average_proportion(d, T);
  r.dal = differentiable_average_lagging(d, T, reference_length);
  if (trace.has_stamps && frame_duration_s > 0.0) {
    std::vector<double> dca = trace_delays(trace, true, frame_duration_s);
    r.al_ca = average_lagging(dca, T, reference_length);
    r.laal_ca = laal(dca, T, reference_length, hyp_len);
    r.ap_ca = average_proportion(dca, T);
    r.dal_ca = differentiable_average_lagging(dca, T, reference_length);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Non-monotonicity: inversion count of a source-target alignment.

using AlignmentPairs = std::vector<std::pair<int, int>>;  // (source, target)

// O(n^2) count of pairs (i,j) < (k,l) with i < k and j > l.
inline int64_t cross_count(const AlignmentPairs& pairs) {
  int64_t n = 0;
  for (size_t a = 0; a < pairs.size(); ++a)
    for (size_t b = 0; b < pairs.size(); ++b)
      if (pairs[a].first < pairs[b].first && pairs[a].second > pairs[b].second)
        ++n;
  return n;
}

namespace detail {
inline int64_t merge_count(std::vector<int>& v, std::vector<int>& tmp, size_t lo,
                           size_t hi) {
  if (hi - lo < 2) return 0;
  size_t mid = lo + (hi - lo) / 2;
  int64_t n = merge_count(v, tmp, lo, mid) + merge_count(v, tmp, mid, hi);
  size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[i] <= v[j])
      tmp[k++] = v[i++];
    else {
      n += static_cast<int64_t>(mid - i);
      tmp[k++] = v[j++];
    }
  }
  while (i < mid) tmp[k++] = v[i++];
  while (j < hi) tmp[k++] = v[j++];
  std::copy(tmp.begin() + static_cast<long>(lo), tmp.begin() + static_cast<long>(k),
            v.begin() + static_cast<long>(lo));
  return n;
}
}  // namespace detail

// Mergesort-based inversion count; independent route used to cross-check
// the quadratic one.
inline int64_t cross_count_fast(const AlignmentPairs& pairs) {
  AlignmentPairs sorted = pairs;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> targets;
  targets.reserve(sorted.size());
  for (const auto& [s, t] : sorted) targets.push_back(t);
  std::vector<int> tmp(targets.size());
  return detail::merge_count(targets, tmp, 0, targets.size());
}

// ---------------------------------------------------------------------------
// Quality metrics for synthetic tasks.

// Fraction of matching tokens over positions up to min length.
inline double token_accuracy(const std::vector<int>& hypothesis,
                             const std::vector<int>& reference) {
  if (reference.empty()) return hypothesis.empty() ? 1.0 : 0.0;
  size_t n = std::min(hypothesis.size(), reference.size());
  size_t match = 0;
  for (size_t i = 0; i < n; ++i)
    if (hypothesis[i] == reference[i]) ++match;
  return static_cast<double>(match) / static_cast<double>(reference.size());
}

inline int64_t edit_distance(const std::vector<int>& a,
                             const std::vector<int>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int64_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= m; ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1,
                         prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[m];
}

// Levenshtein distance normalized by reference length (0 when both empty).
inline double edit_distance_normalized(const std::vector<int>& hypothesis,
                                       const std::vector<int>& reference) {
  if (reference.empty()) return hypothesis.empty() ? 0.0 : 1.0;
  return static_cast<double>(edit_distance(hypothesis, reference)) /
         static_cast<double>(reference.size());
}

}  // namespace monoattn
