#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "monoattn/lattice.hpp"
#include "test_util.hpp"

using namespace monoattn;
using monoattn::testing::degenerate_lattice;
using monoattn::testing::random_lattice;

TEST_CASE("forward initial condition: alpha(1,0) = 1") {
  std::mt19937_64 rng(100);
  ProbLattice lat = random_lattice(1, 0, 3, rng);
  Mat a = forward_vars(lat);
  CHECK(a(0, 0) == 0.0);
}

TEST_CASE("T=2, U=1 symbolic two-path enumeration") {
  std::mt19937_64 rng(101);
  ProbLattice lat = random_lattice(2, 1, 4, rng);
  int y = lat.targets[0], blank = lat.blank();
  Mat a = forward_vars(lat);
  // alpha(2,1) = p(y|1,0) p(eps|1,1) + p(eps|1,0) p(y|2,0)
  double path1 = std::exp(lat.at(0, 0, y)) * std::exp(lat.at(0, 1, blank));
  double path2 = std::exp(lat.at(0, 0, blank)) * std::exp(lat.at(1, 0, y));
  CHECK(std::exp(a(1, 1)) == doctest::Approx(path1 + path2).epsilon(1e-12));
  // total = alpha(2,1) p(eps|2,1)
  double total = (path1 + path2) * std::exp(lat.at(1, 1, blank));
  CHECK(std::exp(total_log_prob(lat)) == doctest::Approx(total).epsilon(1e-12));
  CHECK(brute_force_total_prob(lat) == doctest::Approx(total).epsilon(1e-12));

  // posterior, two paths: probs(1,t) = path_t * p(eps|2,1) / Z
  AlignmentMatrix post = posterior_alignment(lat);
  double z = total;
  CHECK(post.probs(1, 0) ==
        doctest::Approx(path1 * std::exp(lat.at(1, 1, blank)) / z).epsilon(1e-10));
  CHECK(post.probs(1, 1) ==
        doctest::Approx(path2 * std::exp(lat.at(1, 1, blank)) / z).epsilon(1e-10));
  CHECK(post.probs(1, 0) + post.probs(1, 1) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("backward initial condition and duality") {
  std::mt19937_64 rng(102);
  ProbLattice single = random_lattice(1, 0, 3, rng);
  Mat b0 = backward_vars(single);
  CHECK(b0(0, 0) == doctest::Approx(single.at(0, 0, single.blank())));

  ProbLattice lat = random_lattice(5, 4, 5, rng);
  Mat b = backward_vars(lat);
  // beta(1,0) = p(y_1:U | x_1:T) = total probability
  CHECK(b(0, 0) == doctest::Approx(total_log_prob(lat)).epsilon(1e-10));
  CHECK(std::exp(b(0, 0)) ==
        doctest::Approx(brute_force_total_prob(lat)).epsilon(1e-12));
}

TEST_CASE("forward-backward equals brute force on random lattices") {
  std::mt19937_64 rng(103);
  for (int trial = 0; trial < 100; ++trial) {
    std::uniform_int_distribution<int> td(1, 6), ud(0, 5);
    int T = td(rng), U = ud(rng);
    ProbLattice lat = random_lattice(T, U, 4, rng);
    double fb = std::exp(total_log_prob(lat));
    double bf = brute_force_total_prob(lat);
    CHECK(std::abs(fb - bf) <= 1e-12 * std::max(std::abs(bf), 1e-300));
  }
}

TEST_CASE("posterior matches brute force and rows sum to 1") {
  std::mt19937_64 rng(104);
  for (int trial = 0; trial < 50; ++trial) {
    ProbLattice lat = random_lattice(6, 5, 4, rng);
    AlignmentMatrix fb = posterior_alignment(lat);
    AlignmentMatrix bf = brute_force_posterior(lat);
    for (int u = 0; u <= lat.U; ++u) {
      double rowsum = 0.0;
      for (int t = 0; t < lat.T; ++t) {
        CHECK(std::abs(fb.probs(u, t) - bf.probs(u, t)) < 1e-10);
        rowsum += fb.probs(u, t);
      }
      CHECK(rowsum == doctest::Approx(1.0).epsilon(1e-6));
    }
    // row 0 is the s_0 edge case: all mass at t = 1
    CHECK(fb.probs(0, 0) == 1.0);
    for (int t = 1; t < lat.T; ++t) CHECK(fb.probs(0, t) == 0.0);
  }
}

TEST_CASE("degenerate single-path lattice yields a 0/1 posterior") {
  std::vector<int> emit_times = {1, 1, 3};
  std::vector<int> targets = {2, 0, 1};
  ProbLattice lat = degenerate_lattice(5, 3, 3, emit_times, targets);
  CHECK(std::exp(total_log_prob(lat)) == doctest::Approx(1.0).epsilon(1e-12));
  AlignmentMatrix post = posterior_alignment(lat);
  for (int u = 1; u <= 3; ++u)
    for (int t = 0; t < 5; ++t)
      CHECK(post.probs(u, t) == (t == emit_times[u - 1] ? 1.0 : 0.0));
}

TEST_CASE("zero-probability lattice: total is -inf, posterior rejected") {
  ProbLattice lat(2, 1, 2);
  lat.targets = {0};
  // all mass on blank everywhere: the token can never be emitted
  for (int t = 0; t < 2; ++t)
    for (int u = 0; u <= 1; ++u) lat.at(t, u, lat.blank()) = 0.0;
  CHECK(total_log_prob(lat) == kNegInf);
  CHECK_THROWS_AS(posterior_alignment(lat), std::domain_error);
}

TEST_CASE("input validation") {
  ProbLattice nan_lat(2, 0, 1);
  nan_lat.at(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward_vars(nan_lat), std::invalid_argument);

  std::mt19937_64 rng(105);
  ProbLattice big = random_lattice(8, 7, 2, rng);
  CHECK_NOTHROW(brute_force_total_prob(big));
  ProbLattice too_big = random_lattice(8, 8 /* > guard */, 2, rng);
  CHECK_THROWS_AS(brute_force_total_prob(too_big), std::invalid_argument);
}

TEST_CASE("transducer_loss value and analytic gradient vs finite differences") {
  std::mt19937_64 rng(106);
  for (int trial = 0; trial < 5; ++trial) {
    int T = 4, U = 3, V = 3;
    ProbLattice lat = random_lattice(T, U, V, rng);
    Tensor lp = Tensor::from({T * (U + 1), V + 1}, lat.log_probs, true);
    Tensor loss = transducer_loss(lp, T, U, V, lat.targets);
    CHECK(loss.item() == doctest::Approx(-total_log_prob(lat)).epsilon(1e-12));
    backward(loss);
    const double h = 1e-6;
    for (int64_t i = 0; i < lp.size(); ++i) {
      double orig = lp.values()[i];
      auto eval = [&]() {
        ProbLattice p = lat;
        p.log_probs = lp.values();
        return -total_log_prob(p);
      };
      lp.values()[i] = orig + h;
      double up = eval();
      lp.values()[i] = orig - h;
      double down = eval();
      lp.values()[i] = orig;
      double fd = (up - down) / (2 * h);
      CHECK(std::abs(fd - lp.grad()[i]) < 1e-6);
    }
  }
}
