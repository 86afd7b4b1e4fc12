#pragma once

// The tiny MonoAttn-Transducer: chunk-causal Transformer encoder,
// autoregressive predictor whose cross-attention is driven by an alignment
// matrix (expected contexts in training, truncated softmax attention in
// streaming), and a feed-forward joiner producing the probability lattice.

#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "monoattn/attention.hpp"
#include "monoattn/lattice.hpp"
#include "monoattn/optim.hpp"
#include "monoattn/tensor.hpp"

namespace monoattn {

struct ModelConfig {
  int src_vocab_size = 16;
  int vocab_size = 16;  // V; joiner output dim is V+1 with blank == V
  int d_model = 64;
  int heads = 4;
  int d_ff = 128;
  int d_joint = 64;
  int encoder_layers = 2;
  int predictor_layers = 2;
  int chunk_frames = 4;    // C, in source tokens
  int decision_step = 1;   // joiner decides every decision_step frames
  int lookahead_chunks = 0;  // 0 or 1
  int max_source_len = 64;
  int max_target_len = 64;

  void validate() const {
    if (chunk_frames < 1 || decision_step < 1)
      throw std::invalid_argument("config: chunk_frames/decision_step >= 1");
    if (chunk_frames % decision_step != 0)
      throw std::invalid_argument("config: decision_step must divide chunk_frames");
    if (d_model % heads != 0)
      throw std::invalid_argument("config: heads must divide d_model");
    if (lookahead_chunks != 0 && lookahead_chunks != 1)
      throw std::invalid_argument("config: lookahead_chunks in {0, 1}");
  }

  int pooled_len(int T) const { return (T + decision_step - 1) / decision_step; }
  int pooled_chunk() const { return chunk_frames / decision_step; }
};

struct EncoderStates {
  Tensor states;  // (T, d_model)
  Tensor pooled;  // (T', d_model), row t' = states at frame min((t'+1)*step, T)
  int T = 0;
  int Tp = 0;
};

// How the predictor's cross-attention sublayer behaves.
enum class CrossMode {
  expected,  // expected contexts under a supplied alignment matrix
  zeroed,    // no cross-attention (Transducer baseline)
};

namespace detail {

inline Tensor sinusoidal_positions(int len, int d) {
  std::vector<double> pe(static_cast<size_t>(len) * d);
  for (int pos = 0; pos < len; ++pos)
    for (int i = 0; i < d; i += 2) {
      double angle = pos / std::pow(10000.0, static_cast<double>(i) / d);
      pe[static_cast<size_t>(pos) * d + i] = std::sin(angle);
      if (i + 1 < d) pe[static_cast<size_t>(pos) * d + i + 1] = std::cos(angle);
    }
  return Tensor::from({len, d}, std::move(pe));
}

// Additive mask (m, n): 0 where allowed, -inf where blocked.
inline Tensor build_mask(int m, int n,
                         const std::function<bool(int, int)>& allowed) {
  std::vector<double> v(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      v[static_cast<size_t>(i) * n + j] = allowed(i, j) ? 0.0 : kNegInf;
  return Tensor::from({m, n}, std::move(v));
}

}  // namespace detail

class Model {
 public:
  Model(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const int d = cfg_.d_model;
    auto linear = [&](const std::string& name, int in, int out) {
      store_.create(name + ".w", {in, out}, 1.0 / std::sqrt(in), rng);
      store_.create_const(name + ".b", {out}, 0.0);
    };
    auto norm = [&](const std::string& name) {
      store_.create_const(name + ".g", {d}, 1.0);
      store_.create_const(name + ".b", {d}, 0.0);
    };
    store_.create("enc.emb", {cfg_.src_vocab_size, d}, 0.02, rng);
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
      std::string p = "enc.l" + std::to_string(l);
      linear(p + ".q", d, d);
      linear(p + ".k", d, d);
      linear(p + ".v", d, d);
      linear(p + ".o", d, d);
      linear(p + ".ff1", d, cfg_.d_ff);
      linear(p + ".ff2", cfg_.d_ff, d);
      norm(p + ".n1");
      norm(p + ".n2");
    }
    norm("enc.final");
    store_.create("pred.emb", {cfg_.vocab_size + 1, d}, 0.02, rng);  // +1: BOS
    for (int l = 0; l < cfg_.predictor_layers; ++l) {
      std::string p = "pred.l" + std::to_string(l);
      linear(p + ".q", d, d);
      linear(p + ".k", d, d);
      linear(p + ".v", d, d);
      linear(p + ".o", d, d);
      linear(p + ".cq", d, d);
      linear(p + ".ck", d, d);
      linear(p + ".cv", d, d);
      linear(p + ".co", d, d);
      linear(p + ".ff1", d, cfg_.d_ff);
      linear(p + ".ff2", cfg_.d_ff, d);
      norm(p + ".n1");
      norm(p + ".n2");
      norm(p + ".n3");
    }
    linear("join.enc", d, cfg_.d_joint);
    linear("join.pred", d, cfg_.d_joint);
    linear("join.out", cfg_.d_joint, cfg_.vocab_size + 1);
  }

  const ModelConfig& config() const { return cfg_; }

  // Switches the chunk/decision configuration (curriculum: offline
  // pretraining uses a chunk longer than any source, finetuning shrinks it).
  // Parameters are untouched.
  void set_streaming_config(int chunk_frames, int decision_step,
                            int lookahead_chunks) {
    ModelConfig next = cfg_;
    next.chunk_frames = chunk_frames;
    next.decision_step = decision_step;
    next.lookahead_chunks = lookahead_chunks;
    next.validate();
    cfg_ = next;
  }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  int bos_id() const { return cfg_.vocab_size; }

  // -------------------------------------------------------------------------
  // Encoder

  EncoderStates encode(const std::vector<int>& source) const {
    const int T = static_cast<int>(source.size());
    if (T < 1) throw std::invalid_argument("encode: empty source");
    if (T > cfg_.max_source_len)
      throw std::invalid_argument("encode: source too long");
    for (int id : source)
      if (id < 0 || id >= cfg_.src_vocab_size)
        throw std::invalid_argument("encode: token id out of vocabulary");
    const int d = cfg_.d_model;
    Tensor x = add(scale(embedding(store_.get("enc.emb"), source), std::sqrt(d)),
                   detail::sinusoidal_positions(T, d));
    const int C = cfg_.chunk_frames;
    const int look = cfg_.lookahead_chunks;
    // Lookahead applies at the first layer only; deeper layers use the plain
    // chunk mask so the receptive field stays one chunk ahead instead of
    // growing by a chunk per layer.
    Tensor mask_first = detail::build_mask(T, T, [&](int t, int j) {
      return j < std::min(T, (t / C + 1 + look) * C);
    });
    Tensor mask_rest = detail::build_mask(T, T, [&](int t, int j) {
      return j < std::min(T, (t / C + 1) * C);
    });
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
      std::string p = "enc.l" + std::to_string(l);
      Tensor h = layer_norm_param(x, p + ".n1");
      x = add(x, self_attention(h, h, p, l == 0 ? mask_first : mask_rest));
      Tensor f = layer_norm_param(x, p + ".n2");
      x = add(x, ffn(f, p));
    }
    x = layer_norm_param(x, "enc.final");
    EncoderStates out;
    out.states = x;
    out.T = T;
    out.Tp = cfg_.pooled_len(T);
    std::vector<int> pool_idx(out.Tp);
    for (int tp = 0; tp < out.Tp; ++tp)
      pool_idx[tp] = std::min((tp + 1) * cfg_.decision_step, T) - 1;
    out.pooled = gather_rows(x, pool_idx);
    return out;
  }

  // -------------------------------------------------------------------------
  // Predictor, teacher-forced. `align` is (U+1, T) over raw encoder frames;
  // it enters as a constant (never differentiated).

  Tensor predict_expected(const std::vector<int>& targets,
                          const AlignmentMatrix& align,
                          const EncoderStates& enc,
                          CrossMode mode = CrossMode::expected) const {
    const int U = static_cast<int>(targets.size());
    if (U > cfg_.max_target_len)
      throw std::invalid_argument("predict: target too long");
    if (mode == CrossMode::expected &&
        (align.probs.rows != U + 1 || align.probs.cols != enc.T))
      throw std::invalid_argument("predict: alignment shape mismatch");
    for (int id : targets)
      if (id < 0 || id >= cfg_.vocab_size)
        throw std::invalid_argument("predict: token id out of vocabulary");
    const int d = cfg_.d_model;
    std::vector<int> in_ids(static_cast<size_t>(U) + 1);
    in_ids[0] = bos_id();
    for (int u = 0; u < U; ++u) in_ids[u + 1] = targets[u];
    Tensor x = add(scale(embedding(store_.get("pred.emb"), in_ids), std::sqrt(d)),
                   detail::sinusoidal_positions(U + 1, d));
    Tensor causal = detail::build_mask(U + 1, U + 1,
                                       [](int i, int j) { return j <= i; });
    for (int l = 0; l < cfg_.predictor_layers; ++l) {
      std::string p = "pred.l" + std::to_string(l);
      x = layer_norm_param(add(x, self_attention(x, x, p, causal)), p + ".n1");
      if (mode == CrossMode::expected)
        x = layer_norm_param(add(x, cross_attention(x, align, enc.states, p)),
                             p + ".n2");
      else
        x = layer_norm_param(x, p + ".n2");
      x = layer_norm_param(add(x, ffn(x, p)), p + ".n3");
    }
    return x;  // (U+1, d): rows s_0..s_U
  }

  // -------------------------------------------------------------------------
  // Joiner: log p(v | t', u) for every pooled timestep / predictor state.

  Tensor join(const Tensor& pooled, const Tensor& predictor_states) const {
    Tensor ph = linear_fwd(pooled, "join.enc");
    Tensor ps = linear_fwd(predictor_states, "join.pred");
    Tensor z = relu(pairwise_sum(ph, ps));
    return log_softmax_rows(linear_fwd(z, "join.out"));
  }

  // Full teacher-forced lattice: (T'*(U+1), V+1) log-probabilities.
  Tensor forward_lattice(const std::vector<int>& source,
                         const std::vector<int>& targets,
                         const AlignmentMatrix& align,
                         CrossMode mode = CrossMode::expected) const {
    EncoderStates enc = encode(source);
    Tensor s = predict_expected(targets, align, enc, mode);
    return join(enc.pooled, s);
  }

  // -------------------------------------------------------------------------
  // Streaming predictor with per-layer KV caches. States are computed once,
  // with the then-visible source prefix, and frozen afterwards: O(U) total
  // predictor passes per decode.

  struct StreamState {
    // per layer: cached self-attention keys/values for emitted positions
    std::vector<std::vector<double>> k_cache, v_cache;  // [layer][pos*d + c]
    std::vector<Tensor> last_states;  // s_u rows, most recent last
    int positions = 0;
  };

  StreamState make_stream_state() const {
    StreamState st;
    st.k_cache.resize(cfg_.predictor_layers);
    st.v_cache.resize(cfg_.predictor_layers);
    return st;
  }

  // Appends the predictor state for the next position (BOS if none yet,
  // else the last emitted token), attending to enc.states[0:visible).
  Tensor predict_streaming(StreamState& st, int token_or_bos, int visible,
                           const EncoderStates& enc,
                           CrossMode mode = CrossMode::expected) const {
    if (visible < 1 || visible > enc.T)
      throw std::invalid_argument("predict_streaming: bad visible length");
    const int d = cfg_.d_model;
    const int pos = st.positions;
    Tensor x = add(scale(embedding(store_.get("pred.emb"), {token_or_bos}),
                         std::sqrt(d)),
                   slice_rows(detail::sinusoidal_positions(pos + 1, d), pos, pos + 1));
    Tensor visible_states = slice_rows(enc.states, 0, visible);
    AlignmentMatrix one_hot = one_hot_alignment({visible - 1}, visible);
    for (int l = 0; l < cfg_.predictor_layers; ++l) {
      std::string p = "pred.l" + std::to_string(l);
      // self-attention against cached keys/values plus this position
      Tensor q = linear_fwd(x, p + ".q");
      Tensor k_new = linear_fwd(x, p + ".k");
      Tensor v_new = linear_fwd(x, p + ".v");
      auto& kc = st.k_cache[l];
      auto& vc = st.v_cache[l];
      kc.insert(kc.end(), k_new.values().begin(), k_new.values().end());
      vc.insert(vc.end(), v_new.values().begin(), v_new.values().end());
      Tensor K = Tensor::from({pos + 1, d}, kc);
      Tensor V = Tensor::from({pos + 1, d}, vc);
      Tensor attn = multihead(q, K, V, nullptr);
      x = layer_norm_param(add(x, linear_fwd(attn, p + ".o")), p + ".n1");
      if (mode == CrossMode::expected)
        x = layer_norm_param(
            add(x, cross_attention(x, one_hot, visible_states, p)), p + ".n2");
      else
        x = layer_norm_param(x, p + ".n2");
      x = layer_norm_param(add(x, ffn(x, p)), p + ".n3");
    }
    st.last_states.push_back(x);
    ++st.positions;
    return x;
  }

  // Joiner on a single (pooled state, predictor state) pair.
  Tensor join_row(const Tensor& pooled_row, const Tensor& state_row) const {
    return join(pooled_row, state_row);
  }

 private:
  Tensor linear_fwd(const Tensor& x, const std::string& name) const {
    return add_rowvec(matmul(x, store_.get(name + ".w")),
                      store_.get(name + ".b"));
  }

  Tensor layer_norm_param(const Tensor& x, const std::string& name) const {
    return layer_norm_rows(x, store_.get(name + ".g"), store_.get(name + ".b"));
  }

  Tensor ffn(const Tensor& x, const std::string& prefix) const {
    return linear_fwd(relu(linear_fwd(x, prefix + ".ff1")), prefix + ".ff2");
  }

  // Scaled dot-product attention over projected q/k/v, split by head.
  // `mask` may be null (fully visible).
  Tensor multihead(const Tensor& q, const Tensor& k, const Tensor& v,
                   const Tensor* mask) const {
    const int H = cfg_.heads;
    const int dh = cfg_.d_model / H;
    std::vector<Tensor> heads;
    heads.reserve(H);
    for (int h = 0; h < H; ++h) {
      Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
      Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
      Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
      Tensor scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(dh));
      heads.push_back(matmul(softmax_rows(scores, mask), vh));
    }
    return concat_cols(heads);
  }

  Tensor self_attention(const Tensor& q_in, const Tensor& kv_in,
                        const std::string& prefix, const Tensor& mask) const {
    Tensor q = linear_fwd(q_in, prefix + ".q");
    Tensor k = linear_fwd(kv_in, prefix + ".k");
    Tensor v = linear_fwd(kv_in, prefix + ".v");
    return linear_fwd(multihead(q, k, v, &mask), prefix + ".o");
  }

  // Monotonic cross-attention: per-head expected contexts under a shared
  // alignment matrix (Eq. 8/9 applied independently per head).
  Tensor cross_attention(const Tensor& x, const AlignmentMatrix& align,
                         const Tensor& enc_states,
                         const std::string& prefix) const {
    Tensor q = linear_fwd(x, prefix + ".cq");
    Tensor k = linear_fwd(enc_states, prefix + ".ck");
    Tensor v = linear_fwd(enc_states, prefix + ".cv");
    const int H = cfg_.heads;
    const int dh = cfg_.d_model / H;
    std::vector<Tensor> heads;
    heads.reserve(H);
    for (int h = 0; h < H; ++h) {
      Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
      Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
      Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
      Tensor energies = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(dh));
      heads.push_back(expected_context_efficient_t(energies, align, vh));
    }
    return linear_fwd(concat_cols(heads), prefix + ".co");
  }

  ModelConfig cfg_;
  ParameterStore store_;
};

}  // namespace monoattn
