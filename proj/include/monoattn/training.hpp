#pragma once

// Two-pass prior -> posterior training, the prior-only variant, offline
// pretraining, and the optimization loop.

#include <chrono>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "monoattn/attention.hpp"
#include "monoattn/decode.hpp"
#include "monoattn/lattice.hpp"
#include "monoattn/model.hpp"
#include "monoattn/optim.hpp"
#include "monoattn/synthesis.hpp"

namespace monoattn {

enum class TrainMode { offline_pretrain, streaming_posterior, streaming_prior };

inline std::string train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::offline_pretrain: return "offline";
    case TrainMode::streaming_posterior: return "posterior";
    case TrainMode::streaming_prior: return "prior";
  }
  throw std::logic_error("unknown mode");
}

struct TrainConfig {
  TrainMode mode = TrainMode::offline_pretrain;
  AlignKind prior_kind = AlignKind::diagonal_prior;
  int steps = 1000;
  int batch_size = 8;
  uint64_t seed = 1;
  AdamConfig adam;
  bool zero_context = false;  // Transducer baseline: no cross-attention
};

struct StepRecord {
  int step = 0;
  double loss = 0.0;
  int fallbacks = 0;
  int skipped = 0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

using TrainLogFn = std::function<void(const StepRecord&)>;

namespace detail {

inline AlignmentMatrix pooled_prior(AlignKind kind, int Tp, int U) {
  switch (kind) {
    case AlignKind::uniform_prior: return uniform_prior(Tp, U);
    case AlignKind::diagonal_prior: return diagonal_prior(Tp, U);
    default:
      throw std::invalid_argument("prior kind must be uniform or diagonal");
  }
}

}  // namespace detail

struct SampleLoss {
  Tensor loss;
  bool fallback = false;  // posterior undefined; prior contexts used instead
};

// One sample through the configured training recipe. Streaming modes follow
// the two-pass structure: a gradient-free prior pass to infer the posterior,
// then a gradient-recorded pass whose contexts use the (chunk-synchronized)
// posterior. The prior-only variant records gradients on the prior pass
// directly; offline mode uses full-sentence attention.
inline SampleLoss sample_loss(const Model& model, const SyntheticSample& sample,
                              const TrainConfig& cfg) {
  const ModelConfig& mc = model.config();
  const int T = static_cast<int>(sample.source.size());
  const int U = static_cast<int>(sample.target.size());
  const int Tp = mc.pooled_len(T);
  const CrossMode mode =
      cfg.zero_context ? CrossMode::zeroed : CrossMode::expected;

  auto lattice_loss = [&](const AlignmentMatrix& raw_align) {
    Tensor lp = model.forward_lattice(sample.source, sample.target, raw_align, mode);
    return transducer_loss(lp, Tp, U, mc.vocab_size, sample.target);
  };

  SampleLoss out;
  if (cfg.mode == TrainMode::offline_pretrain) {
    out.loss = lattice_loss(offline_alignment(T, U));
    return out;
  }

  const int pooled_chunk = mc.pooled_chunk();
  AlignmentMatrix prior = chunk_synchronize(
      detail::pooled_prior(cfg.prior_kind, Tp, U), pooled_chunk);
  AlignmentMatrix prior_raw = expand_to_frames(prior, mc.decision_step, T);

  if (cfg.mode == TrainMode::streaming_prior) {
    out.loss = lattice_loss(prior_raw);
    return out;
  }

  // posterior variant: gradient-free prior pass, then posterior inference
  AlignmentMatrix align_raw = prior_raw;
  {
    NoGradGuard ng;
    Tensor lp =
        model.forward_lattice(sample.source, sample.target, prior_raw, mode);
    ProbLattice lat(Tp, U, mc.vocab_size);
    lat.targets = sample.target;
    lat.log_probs = lp.values();
    if (total_log_prob(lat) > kNegInf) {
      AlignmentMatrix post = chunk_synchronize(posterior_alignment(lat), pooled_chunk);
      align_raw = expand_to_frames(post, mc.decision_step, T);
    } else {
      out.fallback = true;  // zero-probability target under the prior lattice
    }
  }
  out.loss = lattice_loss(align_raw);
  return out;
}

// Runs the optimization loop; returns the final step's mean loss.
inline double train(Model& model, const std::vector<SyntheticSample>& data,
                    const TrainConfig& cfg, const TrainLogFn& log = nullptr) {
  if (data.empty()) throw std::invalid_argument("train: empty corpus");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<size_t> pick(0, data.size() - 1);
  Adam opt(model.params(), cfg.adam);
  double last_loss = 0.0;
  for (int step = 1; step <= cfg.steps; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    model.params().zero_grads();
    std::vector<Tensor> losses;
    StepRecord rec;
    rec.step = step;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const SyntheticSample& sample = data[pick(rng)];
      if (sample.target.empty()) {
        ++rec.skipped;
        continue;
      }
      SampleLoss sl = sample_loss(model, sample, cfg);
      if (sl.fallback) ++rec.fallbacks;
      losses.push_back(sl.loss);
    }
    if (losses.empty()) continue;
    Tensor batch_loss = scale(add_all(losses),
                              1.0 / static_cast<double>(losses.size()));
    backward(batch_loss);
    rec.grad_norm = opt.step();
    rec.loss = batch_loss.item();
    last_loss = rec.loss;
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    if (log) log(rec);
  }
  return last_loss;
}

// Offline pretraining followed by streaming finetuning (the curriculum):
// helpers that wrap `train` with the right mode.
inline double pretrain_offline(Model& model,
                               const std::vector<SyntheticSample>& data,
                               TrainConfig cfg, const TrainLogFn& log = nullptr) {
  cfg.mode = TrainMode::offline_pretrain;
  return train(model, data, cfg, log);
}

inline double finetune_streaming(Model& model,
                                 const std::vector<SyntheticSample>& data,
                                 TrainConfig cfg, const TrainLogFn& log = nullptr) {
  if (cfg.mode == TrainMode::offline_pretrain)
    cfg.mode = TrainMode::streaming_posterior;
  return train(model, data, cfg, log);
}

}  // namespace monoattn
