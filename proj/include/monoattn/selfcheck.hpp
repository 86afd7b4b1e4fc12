#pragma once

// Self-verification suite: oracle comparisons, algebraic equivalences, and
// finite-difference gradient checks, runnable from the CLI and from the test
// harness. Each check returns a pass flag plus a short diagnostic.

#include <cmath>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "monoattn/attention.hpp"
#include "monoattn/decode.hpp"
#include "monoattn/lattice.hpp"
#include "monoattn/metrics.hpp"
#include "monoattn/model.hpp"
#include "monoattn/training.hpp"

namespace monoattn {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace selfcheck {

inline ProbLattice random_lattice(int T, int U, int V, std::mt19937_64& rng) {
  ProbLattice lat(T, U, V);
  std::uniform_real_distribution<double> unit(0.05, 1.0);
  std::uniform_int_distribution<int> tok(0, V - 1);
  for (int t = 0; t < T; ++t)
    for (int u = 0; u <= U; ++u) {
      double z = 0.0;
      std::vector<double> p(static_cast<size_t>(V) + 1);
      for (double& x : p) {
        x = unit(rng);
        z += x;
      }
      for (int v = 0; v <= V; ++v)
        lat.at(t, u, v) = std::log(p[static_cast<size_t>(v)] / z);
    }
  lat.targets.resize(static_cast<size_t>(U));
  for (int& y : lat.targets) y = tok(rng);
  return lat;
}

inline CheckResult lattice_oracles(int n = 500) {
  CheckResult r{"lattice forward-backward vs path enumeration", false, ""};
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<int> td(1, 6), ud(0, 5), vd(2, 4);
  double worst_total = 0.0, worst_post = 0.0, worst_rowsum = 0.0;
  for (int i = 0; i < n; ++i) {
    ProbLattice lat = random_lattice(td(rng), ud(rng), vd(rng), rng);
    double fb = total_log_prob(lat);
    double brute = brute_force_total_prob(lat);
    double rel = std::abs(std::exp(fb) - brute) / brute;
    worst_total = std::max(worst_total, rel);
    if (lat.U == 0) continue;
    AlignmentMatrix post = posterior_alignment(lat);
    AlignmentMatrix oracle = brute_force_posterior(lat);
    for (int u = 0; u <= lat.U; ++u) {
      double row = 0.0;
      for (int t = 0; t < lat.T; ++t) {
        worst_post = std::max(worst_post,
                              std::abs(post.probs(u, t) - oracle.probs(u, t)));
        row += post.probs(u, t);
      }
      worst_rowsum = std::max(worst_rowsum, std::abs(row - 1.0));
    }
  }
  r.pass = worst_total <= 1e-12 && worst_post <= 1e-10 && worst_rowsum <= 1e-6;
  std::ostringstream os;
  os << n << " lattices; total rel err " << worst_total << ", posterior abs err "
     << worst_post << ", row-sum err " << worst_rowsum;
  r.detail = os.str();
  return r;
}

inline CheckResult attention_equivalence(int n = 200) {
  CheckResult r{"nested vs cumulative expected contexts", false, ""};
  std::mt19937_64 rng(2002);
  std::uniform_int_distribution<int> td(1, 32), ud(0, 16);
  std::uniform_real_distribution<double> ed(-4.0, 4.0), hd(-1.0, 1.0);
  const int heads = 4, dh = 4;
  double worst = 0.0;
  for (int i = 0; i < n; ++i) {
    int T = td(rng), U = ud(rng);
    AlignmentMatrix align = diagonal_prior(T, U);
    for (int h = 0; h < heads; ++h) {
      Mat e(U + 1, T), H(T, dh);
      for (double& x : e.v) x = ed(rng);
      for (double& x : H.v) x = hd(rng);
      Mat nested = expected_context_nested(e, align, H);
      Mat fast = expected_context_efficient(e, align, H);
      for (size_t k = 0; k < nested.v.size(); ++k)
        worst = std::max(worst, std::abs(nested.v[k] - fast.v[k]));
    }
  }
  r.pass = worst <= 1e-10;
  std::ostringstream os;
  os << n << " instances x 4 heads; worst abs diff " << worst;
  r.detail = os.str();
  return r;
}

inline CheckResult chunk_sync_conservation() {
  CheckResult r{"chunk synchronization conserves row mass", false, ""};
  std::mt19937_64 rng(3003);
  double worst_sum = 0.0;
  bool zeros_ok = true;
  for (int C : {1, 2, 3, 5}) {
    for (int T : {4, 6, 7, 9, 11}) {  // includes T not divisible by C
      for (int U : {0, 1, 3, 5}) {
        AlignmentMatrix a = uniform_prior(T, U);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (int u = 1; u <= U; ++u) {
          double z = 0.0;
          for (int t = 0; t < T; ++t) z += (a.probs(u, t) = unit(rng) + 1e-3);
          for (int t = 0; t < T; ++t) a.probs(u, t) /= z;
        }
        AlignmentMatrix s = chunk_synchronize(a, C);
        for (int u = 0; u <= U; ++u) {
          double before = 0.0, after = 0.0;
          for (int t = 0; t < T; ++t) {
            before += a.probs(u, t);
            after += s.probs(u, t);
            bool chunk_final = (t + 1) % C == 0 || t == T - 1;
            if (!chunk_final && s.probs(u, t) != 0.0) zeros_ok = false;
          }
          worst_sum = std::max(worst_sum, std::abs(before - after));
        }
      }
    }
  }
  r.pass = worst_sum <= 1e-12 && zeros_ok;
  std::ostringstream os;
  os << "C in {1,2,3,5}; worst row-mass drift " << worst_sum
     << (zeros_ok ? "; off-boundary entries all zero"
                  : "; nonzero mass off chunk boundaries");
  r.detail = os.str();
  return r;
}

namespace detail {

// Central finite differences on every input entry with |grad| > 1e-6.
inline bool fd_ok(const std::vector<Tensor>& inputs,
                  const std::function<Tensor()>& loss_fn, double& worst,
                  double h = 1e-4, double tol = 1e-4) {
  for (Tensor t : inputs) t.zero_grad();
  backward(loss_fn());
  bool ok = true;
  for (Tensor t : inputs) {
    for (int64_t i = 0; i < t.size(); ++i) {
      double ad = t.grad()[static_cast<size_t>(i)];
      if (std::abs(ad) <= 1e-6) continue;
      double orig = t.values()[static_cast<size_t>(i)];
      double up, down;
      {
        NoGradGuard ng;
        t.values()[static_cast<size_t>(i)] = orig + h;
        up = loss_fn().item();
        t.values()[static_cast<size_t>(i)] = orig - h;
        down = loss_fn().item();
        t.values()[static_cast<size_t>(i)] = orig;
      }
      double fd = (up - down) / (2 * h);
      double rel = std::abs(fd - ad) / std::max(std::abs(fd), std::abs(ad));
      worst = std::max(worst, rel);
      if (rel >= tol) ok = false;
    }
  }
  return ok;
}

inline Tensor rand_param(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                         double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.values()) v = d(rng);
  return t;
}

}  // namespace detail

inline CheckResult gradient_checks() {
  CheckResult r{"finite-difference gradient checks", false, ""};
  std::mt19937_64 rng(4004);
  double worst = 0.0;
  bool ok = true;
  auto rnd = [&](Shape s, double lo = -1.0, double hi = 1.0) {
    return detail::rand_param(std::move(s), rng, lo, hi);
  };

  {  // elementwise and reductions
    Tensor a = rnd({3, 4}), b = rnd({3, 4}, 0.5, 2.0);
    ok &= detail::fd_ok({a, b}, [&] { return sum(mul(add(a, b), b)); }, worst);
    ok &= detail::fd_ok({a, b}, [&] { return sum(div(a, b)); }, worst);
    ok &= detail::fd_ok({a}, [&] { return sum(exp(scale(a, 0.5))); }, worst);
    ok &= detail::fd_ok({b}, [&] { return sum(log(b)); }, worst);
    ok &= detail::fd_ok({a}, [&] { return sum(tanh_t(a)); }, worst);
    ok &= detail::fd_ok({a}, [&] { return mean(mul(a, a)); }, worst);
    Tensor c = rnd({3, 4}, 0.2, 1.5);  // relu probed away from the kink
    ok &= detail::fd_ok({c}, [&] { return sum(relu(c)); }, worst);
    ok &= detail::fd_ok({a}, [&] { return logsumexp(a); }, worst);
  }
  {  // linear algebra and shape ops
    Tensor a = rnd({3, 4}), b = rnd({4, 2}), c = rnd({5, 4}), v = rnd({2});
    ok &= detail::fd_ok({a, b, v},
                        [&] { return sum(add_rowvec(matmul(a, b), v)); }, worst);
    ok &= detail::fd_ok({a, c}, [&] { return sum(matmul_nt(a, c)); }, worst);
    ok &= detail::fd_ok(
        {a}, [&] { return sum(mul(slice_cols(a, 1, 3), slice_cols(a, 1, 3))); },
        worst);
    Tensor p = rnd({2, 3}), q = rnd({4, 3});
    ok &= detail::fd_ok(
        {p, q}, [&] { return sum(mul(pairwise_sum(p, q), pairwise_sum(p, q))); },
        worst);
  }
  {  // row-normalized and cumulative ops
    Tensor a = rnd({4, 5}), w = rnd({4, 5});
    ok &= detail::fd_ok({a, w},
                        [&] { return sum(mul(softmax_rows(a), w)); }, worst);
    ok &= detail::fd_ok({a, w},
                        [&] { return sum(mul(log_softmax_rows(a), w)); }, worst);
    ok &= detail::fd_ok({a, w},
                        [&] { return sum(mul(cumsum_rows(a), w)); }, worst);
    ok &= detail::fd_ok({a, w},
                        [&] { return sum(mul(revcumsum_rows(a), w)); }, worst);
    Tensor g = rnd({5}, 0.5, 1.5), bi = rnd({5});
    ok &= detail::fd_ok(
        {a, g, bi}, [&] { return sum(mul(layer_norm_rows(a, g, bi), w)); },
        worst);
  }
  {  // lattice loss as a single op
    int T = 4, U = 3, V = 3;
    std::vector<int> targets = {1, 0, 2};
    Tensor logits = rnd({T * (U + 1), V + 1});
    ok &= detail::fd_ok(
        {logits},
        [&] {
          return transducer_loss(log_softmax_rows(logits), T, U, V, targets);
        },
        worst);
  }

  // full two-pass training loss on a tiny model, with the alignment frozen
  // at the value the gradient-free pass produces
  ModelConfig cfg;
  cfg.src_vocab_size = 6;
  cfg.vocab_size = 6;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.d_ff = 32;
  cfg.d_joint = 16;
  cfg.encoder_layers = 1;
  cfg.predictor_layers = 1;
  cfg.chunk_frames = 2;
  // seed chosen so no relu pre-activation sits within the probe step of its
  // kink (central differences would otherwise straddle the slope change)
  Model model(cfg, 405);
  SyntheticSample sample;
  sample.source = {1, 4, 2, 5};
  sample.target = {3, 0, 2};
  TrainConfig tc;
  tc.mode = TrainMode::streaming_posterior;

  model.params().zero_grads();
  SampleLoss sl = sample_loss(model, sample, tc);
  backward(sl.loss);
  std::map<std::string, std::vector<double>> two_pass_grads;
  for (const auto& [name, t] : model.params().all())
    two_pass_grads[name] = t.grad();

  AlignmentMatrix align;
  {
    NoGradGuard ng;
    AlignmentMatrix prior = expand_to_frames(
        chunk_synchronize(diagonal_prior(4, 3), 2), 1, 4);
    Tensor lp = model.forward_lattice(sample.source, sample.target, prior);
    ProbLattice lat(4, 3, cfg.vocab_size);
    lat.targets = sample.target;
    lat.log_probs = lp.values();
    align = expand_to_frames(chunk_synchronize(posterior_alignment(lat), 2), 1, 4);
  }
  auto model_loss = [&] {
    Tensor lp = model.forward_lattice(sample.source, sample.target, align);
    return transducer_loss(lp, 4, 3, cfg.vocab_size, sample.target);
  };
  std::vector<Tensor> params;
  for (const auto& [name, t] : model.params().all()) params.push_back(t);
  ok &= detail::fd_ok(params, model_loss, worst);

  // the inference pass must contribute nothing: frozen-alignment gradients
  // equal the full two-pass gradients exactly
  bool inference_silent = true;
  for (const auto& [name, t] : model.params().all())
    if (t.grad() != two_pass_grads[name]) inference_silent = false;
  ok &= inference_silent;

  r.pass = ok;
  std::ostringstream os;
  os << "worst relative error " << worst
     << (inference_silent ? "; inference pass gradient-free"
                          : "; inference pass leaked gradients");
  r.detail = os.str();
  return r;
}

inline CheckResult streaming_consistency() {
  CheckResult r{"streaming decode consistency", false, ""};
  std::mt19937_64 rng(5005);
  ModelConfig cfg;
  cfg.src_vocab_size = 8;
  cfg.vocab_size = 8;
  cfg.d_model = 16;
  cfg.heads = 2;
  cfg.d_ff = 32;
  cfg.d_joint = 16;
  cfg.encoder_layers = 1;
  cfg.predictor_layers = 2;
  cfg.chunk_frames = 4;
  bool ok = true;
  double worst = 0.0;
  std::uniform_int_distribution<int> tok(0, 7);
  for (int trial = 0; trial < 10; ++trial) {
    Model model(cfg, 500 + static_cast<uint64_t>(trial));
    std::vector<int> src(8);
    for (int& x : src) x = tok(rng);

    DecodePolicyConfig wide;
    wide.chunk_frames = 64;
    wide.max_output_len = 16;
    DecodeResult a = stream_decode(src, model, wide);
    DecodeResult b = offline_decode(src, model, wide);
    ok &= a.tokens == b.tokens && a.trace.g == b.trace.g;

    DecodePolicyConfig streaming;
    streaming.chunk_frames = 4;
    streaming.max_output_len = 16;
    DecodeResult res = stream_decode(src, model, streaming);
    // replay: teacher-forced predictor under the trace-induced one-hot
    // alignment must reproduce the streaming predictor states
    NoGradGuard ng;
    EncoderStates enc = model.encode(src);
    std::vector<int> frames;
    frames.push_back((res.trace.g.empty() ? 4 : res.trace.g.front()) - 1);
    for (int g : res.trace.g) frames.push_back(g - 1);
    // BOS row uses the frames visible at the first decision
    frames.front() = 4 - 1;
    Tensor teacher =
        model.predict_expected(res.tokens, one_hot_alignment(frames, 8), enc);
    auto st = model.make_stream_state();
    Tensor s = model.predict_streaming(st, model.bos_id(), 4, enc);
    for (int c = 0; c < cfg.d_model; ++c)
      worst = std::max(worst, std::abs(s.at(c) - teacher.at(c)));
    for (size_t u = 0; u < res.tokens.size(); ++u) {
      s = model.predict_streaming(st, res.tokens[u], res.trace.g[u], enc);
      for (int c = 0; c < cfg.d_model; ++c)
        worst = std::max(worst,
                         std::abs(s.at(c) - teacher.at((u + 1) * cfg.d_model + c)));
    }
  }
  ok &= worst <= 1e-10;
  r.pass = ok;
  std::ostringstream os;
  os << "10 models; wide-chunk == offline; replay state diff " << worst;
  r.detail = os.str();
  return r;
}

inline CheckResult metrics_fixtures() {
  CheckResult r{"latency and inversion fixtures", false, ""};
  bool ok = true;
  std::vector<double> wait1 = {1, 2, 3};
  auto al = average_lagging(wait1, 3, 3);
  auto la = laal(wait1, 3, 3, 3);
  auto ap = average_proportion(wait1, 3);
  ok &= al && std::abs(*al - 1.0) < 1e-12;
  ok &= la && std::abs(*la - 1.0) < 1e-12;
  ok &= ap && std::abs(*ap - 2.0 / 3.0) < 1e-12;
  std::vector<double> offline = {3, 3, 3};
  auto ap_off = average_proportion(offline, 3);
  ok &= ap_off && std::abs(*ap_off - 1.0) < 1e-12;
  AlignmentPairs identity = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
  AlignmentPairs reversed = {{0, 3}, {1, 2}, {2, 1}, {3, 0}};
  ok &= cross_count(identity) == 0 && cross_count_fast(identity) == 0;
  ok &= cross_count(reversed) == 6 && cross_count_fast(reversed) == 6;
  r.pass = ok;
  r.detail = "wait-1 AL/LAAL/AP, offline AP, inversion counts";
  return r;
}

inline std::vector<CheckResult> run_all() {
  return {lattice_oracles(),      attention_equivalence(),
          chunk_sync_conservation(), gradient_checks(),
          streaming_consistency(),   metrics_fixtures()};
}

}  // namespace selfcheck
}  // namespace monoattn
