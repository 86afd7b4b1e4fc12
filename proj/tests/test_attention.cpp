#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "monoattn/attention.hpp"

using namespace monoattn;

namespace {

Mat random_mat(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Mat m(r, c);
  for (double& v : m.v) v = dist(rng);
  return m;
}

AlignmentMatrix random_alignment(int U, int T, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  AlignmentMatrix a;
  a.kind = AlignKind::posterior;
  a.probs = Mat(U + 1, T);
  for (int u = 0; u <= U; ++u) {
    double sum = 0.0;
    for (int t = 0; t < T; ++t) {
      a.probs(u, t) = unif(rng);
      sum += a.probs(u, t);
    }
    for (int t = 0; t < T; ++t) a.probs(u, t) /= sum;
  }
  return a;
}

}  // namespace

TEST_CASE("uniform prior: interior rows 1/T, row 0 at t=1") {
  AlignmentMatrix p = uniform_prior(4, 3);
  for (int u = 1; u <= 3; ++u)
    for (int t = 0; t < 4; ++t) CHECK(p.probs(u, t) == 0.25);
  CHECK(p.probs(0, 0) == 1.0);
  for (int t = 1; t < 4; ++t) CHECK(p.probs(0, t) == 0.0);

  AlignmentMatrix single = uniform_prior(1, 2);
  for (int u = 0; u <= 2; ++u) CHECK(single.probs(u, 0) == 1.0);
}

TEST_CASE("diagonal prior: direct evaluation at T=2, U=2") {
  AlignmentMatrix p = diagonal_prior(2, 2);
  // row 1: weights exp(-|1-1|)=1, exp(-|1-2|)=exp(-1)
  double z = 1.0 + std::exp(-1.0);
  CHECK(p.probs(1, 0) == doctest::Approx(1.0 / z).epsilon(1e-10));
  CHECK(p.probs(1, 1) == doctest::Approx(std::exp(-1.0) / z).epsilon(1e-10));
  CHECK(p.probs(1, 0) == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(p.probs(1, 1) == doctest::Approx(0.2689).epsilon(1e-4));
}

TEST_CASE("diagonal prior: square case peaks on the diagonal; rows normalized") {
  std::mt19937_64 rng(200);
  AlignmentMatrix sq = diagonal_prior(6, 6);
  for (int u = 1; u <= 6; ++u) {
    double mx = 0.0;
    int argmax = -1;
    for (int t = 0; t < 6; ++t)
      if (sq.probs(u, t) > mx) {
        mx = sq.probs(u, t);
        argmax = t;
      }
    CHECK(argmax == u - 1);  // t_math = u on the diagonal
  }
  std::uniform_int_distribution<int> td(1, 20), ud(1, 15);
  for (int trial = 0; trial < 200; ++trial) {
    AlignmentMatrix p = diagonal_prior(td(rng), ud(rng));
    for (int u = 0; u < p.probs.rows; ++u) {
      double sum = 0.0;
      for (int t = 0; t < p.probs.cols; ++t) sum += p.probs(u, t);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("chunk synchronization mass transfer") {
  AlignmentMatrix a;
  a.probs = Mat(1, 4);
  a.probs(0, 0) = 0.1;
  a.probs(0, 1) = 0.2;
  a.probs(0, 2) = 0.3;
  a.probs(0, 3) = 0.4;
  AlignmentMatrix s = chunk_synchronize(a, 2);
  CHECK(s.probs(0, 0) == 0.0);
  CHECK(s.probs(0, 1) == doctest::Approx(0.3));
  CHECK(s.probs(0, 2) == 0.0);
  CHECK(s.probs(0, 3) == doctest::Approx(0.7));
  CHECK(s.chunk_synced);

  // C=1 is the identity
  AlignmentMatrix id = chunk_synchronize(a, 1);
  for (int t = 0; t < 4; ++t) CHECK(id.probs(0, t) == a.probs(0, t));

  // C >= T moves everything to the last frame
  AlignmentMatrix all = chunk_synchronize(a, 7);
  for (int t = 0; t < 3; ++t) CHECK(all.probs(0, t) == 0.0);
  CHECK(all.probs(0, 3) == doctest::Approx(1.0));

  CHECK_THROWS_AS(chunk_synchronize(a, 0), std::invalid_argument);
  CHECK_THROWS_AS(chunk_synchronize(s, 2), std::invalid_argument);
}

TEST_CASE("chunk sync conserves row mass, zeroes non-chunk-final entries") {
  std::mt19937_64 rng(201);
  for (int C : {1, 2, 3, 5}) {
    for (int T : {4, 6, 7, 9, 10}) {  // includes non-divisible T
      AlignmentMatrix a = random_alignment(3, T, rng);
      AlignmentMatrix s = chunk_synchronize(a, C);
      for (int u = 0; u <= 3; ++u) {
        double before = 0.0, after = 0.0;
        for (int t = 0; t < T; ++t) {
          before += a.probs(u, t);
          after += s.probs(u, t);
          bool chunk_final = ((t + 1) % C == 0) || (t == T - 1);
          if (!chunk_final) CHECK(s.probs(u, t) == 0.0);
        }
        CHECK(std::abs(before - after) < 1e-12);
      }
    }
  }
}

TEST_CASE("nested form: T=1 collapses to h1; one-hot row is truncated attention") {
  std::mt19937_64 rng(202);
  Mat H1 = random_mat(1, 3, rng);
  Mat e1 = random_mat(3, 1, rng);
  AlignmentMatrix a1;
  a1.probs = Mat(3, 1, 1.0);
  Mat c1 = expected_context_nested(e1, a1, H1);
  for (int u = 0; u < 3; ++u)
    for (int c = 0; c < 3; ++c) CHECK(c1(u, c) == doctest::Approx(H1(0, c)));

  // one-hot at t=k reduces to softmax attention over h_1..h_k
  int T = 5, k = 2, d = 4;
  Mat H = random_mat(T, d, rng);
  Mat e = random_mat(1, T, rng);
  AlignmentMatrix oh = one_hot_alignment({k}, T);
  Mat c = expected_context_nested(e, oh, H);
  double mx = std::max({e(0, 0), e(0, 1), e(0, 2)});
  double denom = 0.0;
  for (int t = 0; t <= k; ++t) denom += std::exp(e(0, t) - mx);
  for (int col = 0; col < d; ++col) {
    double want = 0.0;
    for (int t = 0; t <= k; ++t)
      want += std::exp(e(0, t) - mx) / denom * H(t, col);
    CHECK(c(0, col) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("efficient form agrees with nested form; phi rows sum to 1") {
  std::mt19937_64 rng(203);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<int> td(1, 32), ud(0, 16);
    int T = td(rng), U = ud(rng), d = 5;
    Mat H = random_mat(T, d, rng);
    Mat e = random_mat(U + 1, T, rng, 2.0);
    AlignmentMatrix a = random_alignment(U, T, rng);
    Mat nested = expected_context_nested(e, a, H);
    Mat eff = expected_context_efficient(e, a, H);
    for (size_t i = 0; i < nested.v.size(); ++i)
      CHECK(std::abs(nested.v[i] - eff.v[i]) < 1e-10);
    Mat phi = expected_context_weights(e, a);
    for (int u = 0; u <= U; ++u) {
      double sum = 0.0;
      for (int t = 0; t < T; ++t) sum += phi(u, t);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
    // tensor path agrees too
    Tensor ct = expected_context_efficient_t(Tensor::from({U + 1, T}, e.v), a,
                                             Tensor::from({T, d}, H.v));
    for (size_t i = 0; i < nested.v.size(); ++i)
      CHECK(std::abs(nested.v[i] - ct.at(static_cast<int64_t>(i))) < 1e-10);
  }
}

TEST_CASE("monotone support: phi is zero beyond the last possible read") {
  std::mt19937_64 rng(204);
  int T = 8;
  Mat e = random_mat(2, T, rng);
  AlignmentMatrix a;
  a.probs = Mat(2, T, 0.0);
  a.probs(0, 1) = 0.4;
  a.probs(0, 3) = 0.6;  // support ends at t=3
  a.probs(1, 5) = 1.0;  // support ends at t=5
  Mat phi = expected_context_weights(e, a);
  for (int t = 4; t < T; ++t) CHECK(phi(0, t) == 0.0);
  for (int t = 6; t < T; ++t) CHECK(phi(1, t) == 0.0);
  CHECK(phi(0, 3) > 0.0);
}

TEST_CASE("convexity: contexts stay inside the per-component hull") {
  std::mt19937_64 rng(205);
  int T = 6, U = 3, d = 4;
  Mat H = random_mat(T, d, rng);
  Mat e = random_mat(U + 1, T, rng, 3.0);
  AlignmentMatrix a = random_alignment(U, T, rng);
  Mat c = expected_context_efficient(e, a, H);
  for (int col = 0; col < d; ++col) {
    double lo = H(0, col), hi = H(0, col);
    for (int t = 1; t < T; ++t) {
      lo = std::min(lo, H(t, col));
      hi = std::max(hi, H(t, col));
    }
    for (int u = 0; u <= U; ++u) {
      CHECK(c(u, col) >= lo - 1e-12);
      CHECK(c(u, col) <= hi + 1e-12);
    }
  }
}

TEST_CASE("numerical stability for energies in [-50, 50]") {
  std::mt19937_64 rng(206);
  int T = 10, U = 2, d = 3;
  Mat H = random_mat(T, d, rng);
  std::uniform_real_distribution<double> wide(-50.0, 50.0);
  Mat e(U + 1, T);
  for (double& v : e.v) v = wide(rng);
  AlignmentMatrix a = random_alignment(U, T, rng);
  Mat nested = expected_context_nested(e, a, H);
  Mat eff = expected_context_efficient(e, a, H);
  for (size_t i = 0; i < eff.v.size(); ++i) {
    CHECK(std::isfinite(eff.v[i]));
    CHECK(std::abs(nested.v[i] - eff.v[i]) < 1e-10);
  }
}

TEST_CASE("gradient through the efficient form matches finite differences") {
  std::mt19937_64 rng(207);
  int T = 6, U = 2, d = 3;
  Mat Hm = random_mat(T, d, rng);
  Mat em = random_mat(U + 1, T, rng);
  AlignmentMatrix a = random_alignment(U, T, rng);
  Mat probe = random_mat(U + 1, d, rng);

  Tensor e = Tensor::from({U + 1, T}, em.v, true);
  Tensor H = Tensor::from({T, d}, Hm.v, true);
  Tensor probe_t = Tensor::from({U + 1, d}, probe.v);
  Tensor loss = sum(mul(expected_context_efficient_t(e, a, H), probe_t));
  backward(loss);

  const double h = 1e-5;
  auto eval = [&](const std::vector<double>& ev, const std::vector<double>& hv) {
    Mat e2(U + 1, T);
    e2.v = ev;
    Mat H2(T, d);
    H2.v = hv;
    Mat c = expected_context_efficient(e2, a, H2);
    double s = 0.0;
    for (size_t i = 0; i < c.v.size(); ++i) s += c.v[i] * probe.v[i];
    return s;
  };
  for (int64_t i = 0; i < e.size(); ++i) {
    auto ev = e.values();
    ev[i] += h;
    double up = eval(ev, H.values());
    ev[i] -= 2 * h;
    double down = eval(ev, H.values());
    double fd = (up - down) / (2 * h);
    double ad = e.grad()[i];
    double denom = std::max({std::abs(fd), std::abs(ad), 1e-3});
    CHECK(std::abs(fd - ad) / denom < 1e-4);
  }
  for (int64_t i = 0; i < H.size(); ++i) {
    auto hv = H.values();
    hv[i] += h;
    double up = eval(e.values(), hv);
    hv[i] -= 2 * h;
    double down = eval(e.values(), hv);
    double fd = (up - down) / (2 * h);
    double ad = H.grad()[i];
    double denom = std::max({std::abs(fd), std::abs(ad), 1e-3});
    CHECK(std::abs(fd - ad) / denom < 1e-4);
  }
}

TEST_CASE("expand_to_frames maps pooled mass onto window-final frames") {
  AlignmentMatrix pooled;
  pooled.probs = Mat(1, 3, 0.0);
  pooled.probs(0, 0) = 0.2;
  pooled.probs(0, 1) = 0.3;
  pooled.probs(0, 2) = 0.5;
  AlignmentMatrix raw = expand_to_frames(pooled, 4, 10);  // T=10, step=4
  CHECK(raw.probs.cols == 10);
  CHECK(raw.probs(0, 3) == doctest::Approx(0.2));
  CHECK(raw.probs(0, 7) == doctest::Approx(0.3));
  CHECK(raw.probs(0, 9) == doctest::Approx(0.5));  // clipped final window
  double sum = 0.0;
  for (int t = 0; t < 10; ++t) sum += raw.probs(0, t);
  CHECK(sum == doctest::Approx(1.0));
}
