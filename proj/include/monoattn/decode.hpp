#pragma once

// Streaming greedy inference: chunked READs, joiner decisions at
// decision-step granularity, blank-as-READ semantics, and trace recording.

#include <chrono>
#include <stdexcept>
#include <vector>

#include "monoattn/model.hpp"

namespace monoattn {

struct DecodeEvent {
  enum class Kind { READ, WRITE };
  Kind kind;
  // READ: chunk index (1-based) and frames added.
  int chunk_index = 0;
  int frames_added = 0;
  // WRITE: emitted token and g(u) = source frames visible at emission.
  int token = -1;
  int g = 0;
  double stamp = 0.0;  // seconds since decode start
};

struct DecodeTrace {
  std::vector<DecodeEvent> events;
  std::vector<int> g;  // g(u) for each emitted token, 1-based frame counts
  int frames_total = 0;
  bool length_capped = false;
  bool has_stamps = false;

  void check_valid() const {
    int read = 0;
    size_t writes = 0;
    for (size_t i = 0; i < events.size(); ++i) {
      const auto& e = events[i];
      if (i == 0 && e.kind != DecodeEvent::Kind::READ)
        throw std::logic_error("trace: first event must be READ");
      if (e.kind == DecodeEvent::Kind::READ) {
        read += e.frames_added;
      } else {
        if (e.g != read) throw std::logic_error("trace: WRITE g != frames read");
        if (writes > 0 && g[writes] < g[writes - 1])
          throw std::logic_error("trace: g not monotone");
        ++writes;
      }
    }
    if (read > frames_total) throw std::logic_error("trace: read > T");
  }
};

struct DecodePolicyConfig {
  int chunk_frames = 4;
  int decision_step = 1;
  int max_writes_per_decision = 10;
  int max_output_len = 128;
  bool record_stamps = false;

  void validate() const {
    if (chunk_frames < 1 || decision_step < 1 || max_writes_per_decision < 1 ||
        max_output_len < 1)
      throw std::invalid_argument("decode policy: caps must be positive");
  }
};

struct DecodeResult {
  std::vector<int> tokens;
  DecodeTrace trace;
};

inline DecodeResult stream_decode(const std::vector<int>& source,
                                  const Model& model,
                                  const DecodePolicyConfig& policy,
                                  CrossMode mode = CrossMode::expected) {
  policy.validate();
  if (source.empty()) throw std::invalid_argument("stream_decode: empty source");
  if (policy.decision_step != model.config().decision_step)
    throw std::invalid_argument(
        "stream_decode: policy decision_step must match the model");
  NoGradGuard ng;
  const auto t0 = std::chrono::steady_clock::now();
  auto now_s = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  const int T = static_cast<int>(source.size());
  const int C = policy.chunk_frames;
  const int step = policy.decision_step;
  EncoderStates enc = model.encode(source);

  DecodeResult out;
  DecodeTrace& trace = out.trace;
  trace.frames_total = T;
  trace.has_stamps = policy.record_stamps;

  Model::StreamState st = model.make_stream_state();
  int frames_read = 0;
  int next_decision = 0;  // next pooled index to process
  bool have_state = false;
  Tensor state;

  const int n_chunks = (T + C - 1) / C;
  for (int chunk = 1; chunk <= n_chunks; ++chunk) {
    int new_frames = std::min(C, T - frames_read);
    frames_read += new_frames;
    DecodeEvent rd;
    rd.kind = DecodeEvent::Kind::READ;
    rd.chunk_index = chunk;
    rd.frames_added = new_frames;
    if (policy.record_stamps) rd.stamp = now_s();
    trace.events.push_back(rd);

    if (!have_state) {
      state = model.predict_streaming(st, model.bos_id(), frames_read, enc, mode);
      have_state = true;
    }

    // decision points whose pooled frame falls inside what has been read;
    // the final partial window becomes decidable once the last frame is in
    while (next_decision < enc.Tp) {
      int frame = std::min((next_decision + 1) * step, T);
      if (frame > frames_read) break;
      bool last_point = next_decision == enc.Tp - 1;
      Tensor pooled_row = slice_rows(enc.pooled, next_decision, next_decision + 1);
      int writes_here = 0;
      while (true) {
        Tensor cell = model.join_row(pooled_row, state);
        int best = 0;
        for (int v = 1; v <= model.config().vocab_size; ++v)
          if (cell.at(v) > cell.at(best)) best = v;
        bool is_blank = best == model.config().vocab_size;
        if (is_blank) break;
        if (static_cast<int>(out.tokens.size()) >= policy.max_output_len) {
          trace.length_capped = true;
          break;
        }
        if (writes_here >= policy.max_writes_per_decision) {
          if (last_point) trace.length_capped = true;
          break;
        }
        out.tokens.push_back(best);
        DecodeEvent wr;
        wr.kind = DecodeEvent::Kind::WRITE;
        wr.token = best;
        wr.g = frames_read;
        if (policy.record_stamps) wr.stamp = now_s();
        trace.events.push_back(wr);
        trace.g.push_back(frames_read);
        state = model.predict_streaming(st, best, frames_read, enc, mode);
        ++writes_here;
      }
      ++next_decision;
      if (trace.length_capped) break;
    }
    if (trace.length_capped) break;
  }
  trace.check_valid();
  return out;
}

// Single READ of the entire source, then greedy emission: stream_decode
// with a chunk at least as long as the input.
inline DecodeResult offline_decode(const std::vector<int>& source,
                                   const Model& model,
                                   const DecodePolicyConfig& base_policy = {},
                                   CrossMode mode = CrossMode::expected) {
  DecodePolicyConfig policy = base_policy;
  policy.chunk_frames = std::max<int>(static_cast<int>(source.size()),
                                      policy.chunk_frames);
  return stream_decode(source, model, policy, mode);
}

}  // namespace monoattn
