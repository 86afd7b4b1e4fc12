#pragma once

// Synthetic streaming-transduction corpora with controllable
// non-monotonicity. Targets are relabeled permutations of the source, with
// the gold permutation recorded for cross-alignment analysis.

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "monoattn/metrics.hpp"

namespace monoattn {

enum class SyntheticTask { copy, local_reorder, block_reverse };

inline std::string task_name(SyntheticTask t) {
  switch (t) {
    case SyntheticTask::copy: return "copy";
    case SyntheticTask::local_reorder: return "local_reorder";
    case SyntheticTask::block_reverse: return "block_reverse";
  }
  throw std::logic_error("unknown task");
}

inline SyntheticTask task_from_name(const std::string& s) {
  if (s == "copy") return SyntheticTask::copy;
  if (s == "local_reorder") return SyntheticTask::local_reorder;
  if (s == "block_reverse") return SyntheticTask::block_reverse;
  throw std::invalid_argument("unknown task: " + s);
}

struct SyntheticTaskSpec {
  SyntheticTask task = SyntheticTask::copy;
  int vocab_size = 12;
  int min_len = 6;
  int max_len = 12;
  int reorder_window = 2;  // max displacement (local_reorder) / block size
  double reorder_prob = 0.5;
  uint64_t seed = 1;

  void validate() const {
    if (vocab_size < 2) throw std::invalid_argument("spec: vocab_size >= 2");
    if (min_len < 1 || max_len < min_len)
      throw std::invalid_argument("spec: bad length range");
    if (reorder_window < 0) throw std::invalid_argument("spec: window >= 0");
    if (reorder_prob < 0.0 || reorder_prob > 1.0)
      throw std::invalid_argument("spec: reorder_prob in [0, 1]");
    if (task == SyntheticTask::local_reorder && reorder_window >= min_len)
      throw std::invalid_argument("spec: window must be < min length");
  }
};

struct SyntheticSample {
  std::vector<int> source;
  std::vector<int> target;       // target[i] = relabel(source[perm[i]])
  std::vector<int> permutation;  // target position i reads source position perm[i]
  int64_t cross_count = 0;

  AlignmentPairs alignment() const {
    AlignmentPairs pairs;
    for (size_t i = 0; i < permutation.size(); ++i)
      pairs.emplace_back(permutation[i], static_cast<int>(i));
    return pairs;
  }
};

// Disjoint output alphabet: a fixed relabeling so the mapping is a genuine
// transduction rather than a copy.
inline int relabel(int token, int vocab_size) {
  return (token + 1) % vocab_size;
}

namespace detail {

inline std::vector<int> task_permutation(const SyntheticTaskSpec& spec, int n,
                                         std::mt19937_64& rng) {
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  switch (spec.task) {
    case SyntheticTask::copy:
      break;
    case SyntheticTask::local_reorder: {
      // sort by jittered keys i + r_i with r_i in [0, w]; the resulting
      // displacement is bounded by w in both directions
      std::uniform_int_distribution<int> jitter(0, spec.reorder_window);
      std::vector<std::pair<int, int>> keyed(n);
      for (int i = 0; i < n; ++i) {
        int r = coin(rng) < spec.reorder_prob ? jitter(rng) : 0;
        keyed[i] = {i + r, i};
      }
      std::stable_sort(keyed.begin(), keyed.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      for (int i = 0; i < n; ++i) perm[i] = keyed[i].second;
      break;
    }
    case SyntheticTask::block_reverse: {
      int b = std::max(spec.reorder_window, 2);
      for (int start = 0; start < n; start += b) {
        int end = std::min(start + b, n);
        if (coin(rng) < spec.reorder_prob)
          std::reverse(perm.begin() + start, perm.begin() + end);
      }
      break;
    }
  }
  return perm;
}

}  // namespace detail

inline SyntheticSample generate_sample(const SyntheticTaskSpec& spec,
                                       std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len_dist(spec.min_len, spec.max_len);
  std::uniform_int_distribution<int> tok(0, spec.vocab_size - 1);
  SyntheticSample s;
  int n = len_dist(rng);
  s.source.resize(n);
  for (int& x : s.source) x = tok(rng);
  s.permutation = detail::task_permutation(spec, n, rng);
  s.target.resize(n);
  for (int i = 0; i < n; ++i)
    s.target[i] = relabel(s.source[s.permutation[i]], spec.vocab_size);
  s.cross_count = cross_count_fast(s.alignment());
  return s;
}

// Deterministic for a given spec seed; per-sample derived seeds keep samples
// independent of generation order.
inline std::vector<SyntheticSample> generate_corpus(const SyntheticTaskSpec& spec,
                                                    int n_samples) {
  spec.validate();
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i) {
    std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ull +
                        static_cast<uint64_t>(i) + 1);
    out.push_back(generate_sample(spec, rng));
  }
  return out;
}

}  // namespace monoattn
