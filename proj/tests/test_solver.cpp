#include "oracles.hpp"
#include "solver_check.hpp"

#include "vbsparse/metrics.hpp"
#include "vbsparse/solver.hpp"
#include "vbsparse/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

using namespace vbsparse;

namespace {

SolverConfig config(int rank, double sigma = 0.1) {
  SolverConfig cfg;
  cfg.rank = rank;
  cfg.sigma = sigma;
  return cfg;
}

}  // namespace

TEST_CASE("init_state") {
  SolverConfig cfg = config(3);
  cfg.init_seed = 42;
  const FactorState a = init_state(cfg, 5, 7, 3);
  const FactorState b = init_state(cfg, 5, 7, 3);
  CHECK(a.a_bar == b.a_bar);
  CHECK(a.b_bar == b.b_bar);
  CHECK(a.sigma_b_diag == DenseMatrix::Ones(3, 7));
  CHECK(a.k == cfg.k0);
  CHECK(a.iter == 0);
  CHECK(a.z_b > 1e300);
  CHECK(a.z_b > cfg.zb_threshold);
  CHECK_THROWS_AS(init_state(cfg, 0, 7, 3), DimensionMismatch);
}

TEST_CASE("update_a with vanishing means") {
  const int L = 4, M = 6, H = 3;
  const SolverConfig cfg = config(H, 0.2);
  FactorState s = init_state(cfg, L, M, H);
  s.b_bar.setZero();
  std::mt19937_64 rng(1);
  const DenseMatrix v = oracle::random_matrix(L, M, rng);
  update_a(s, v, cfg);
  CHECK(oracle::rel_error(s.hat_sigma_a.matrix(), (0.04 + M) * DenseMatrix::Identity(H, H)) <= 1e-15);
  CHECK(s.a_bar.cwiseAbs().maxCoeff() == 0.0);
  CHECK((s.sigma_a_diag.array() > 0.0).all());
}

TEST_CASE("update_a scalar reduction") {
  const int L = 5, M = 4;
  const SolverConfig cfg = config(1, 0.3);
  FactorState s = init_state(cfg, L, M, 1);
  std::mt19937_64 rng(2);
  const DenseMatrix v = oracle::random_matrix(L, M, rng);
  for (int m = 0; m < M; ++m) s.sigma_b_diag(0, m) = 0.1 * (m + 1);
  update_a(s, v, cfg);
  double denom = 0.09;
  for (int m = 0; m < M; ++m) denom += s.sigma_b_diag(0, m) + s.b_bar(0, m) * s.b_bar(0, m);
  for (int l = 0; l < L; ++l) {
    double num = 0.0;
    for (int m = 0; m < M; ++m) num += v(l, m) * s.b_bar(0, m);
    CHECK(s.a_bar(l, 0) == doctest::Approx(num / denom).epsilon(1e-13));
  }
}

TEST_CASE("update_hat_sigma_b reductions") {
  const int L = 6, M = 3, H = 2;
  const SolverConfig cfg = config(H);
  FactorState s = init_state(cfg, L, M, H);
  s.a_bar.setZero();
  s.sigma_a_diag.setOnes();
  update_hat_sigma_b(s);
  CHECK(oracle::rel_error(s.hat_sigma_b.matrix(), L * DenseMatrix::Identity(H, H)) == 0.0);

  FactorState t = init_state(config(1), L, M, 1);
  t.sigma_a_diag(0) = 0.25;
  update_hat_sigma_b(t);
  CHECK(t.hat_sigma_b(0, 0) == doctest::Approx(L * 0.25 + t.a_bar.squaredNorm()).epsilon(1e-14));
}

TEST_CASE("update_hat_sigma_b matches the index-loop oracle") {
  std::mt19937_64 rng(3);
  FactorState s = init_state(config(4), 5, 3, 4);
  s.a_bar = oracle::random_matrix(5, 4, rng);
  s.sigma_a_diag = Vector::Constant(4, 0.3);
  update_hat_sigma_b(s);
  const oracle::BHatStep o = oracle::update_hat_sigma_b(s.a_bar, DenseMatrix(s.sigma_a_diag));
  CHECK(oracle::rel_error(s.hat_sigma_b.matrix(), o.hat_sigma_b) <= 1e-12);
}

TEST_CASE("omega") {
  const int L = 3, M = 4, H = 5;
  const SolverConfig cfg = config(H, 0.2);
  FactorState s = init_state(cfg, L, M, H);
  s.sigma_a_diag.setOnes();
  update_hat_sigma_b(s);

  SUBCASE("zero observation") {
    update_omega(s, DenseMatrix::Zero(L, M), cfg);
    CHECK(s.omega.cwiseAbs().maxCoeff() == 0.0);
    // S reduces to the Gaussian term
    double expected = 0.0;
    for (int h = 0; h < H; ++h)
      expected += M * std::sqrt(2.0 * 0.04 * s.hat_sigma_b_inv(h, h) / std::numbers::pi);
    CHECK(zb_sum(s, cfg) == doctest::Approx(expected).epsilon(1e-14));
    SolverConfig comp = cfg;
    comp.erf = ErfConvention::complementary;
    update_omega(s, DenseMatrix::Zero(L, M), comp);
    CHECK(zb_sum(s, comp) == doctest::Approx(expected).epsilon(1e-14));
  }

  SUBCASE("seeded instance against the oracle") {
    std::mt19937_64 rng(4);
    const DenseMatrix v = oracle::random_matrix(L, M, rng);
    update_omega(s, v, cfg);
    const oracle::OmegaStep o = oracle::update_omega(v, s.a_bar, s.hat_sigma_b_inv, cfg.sigma);
    CHECK(oracle::rel_error(s.omega, o.omega) <= 1e-12);
    CHECK(oracle::rel_error(s.ridge, o.ridge) <= 1e-12);
    const double total = oracle::zb_sum(v, s.a_bar, s.hat_sigma_b_inv, s.omega, cfg.sigma,
                                        [](double x) { return std::erf(x); });
    CHECK(oracle::rel_error(zb_sum(s, cfg), total) <= 1e-12);
  }

  SUBCASE("scalar reduction") {
    const SolverConfig c1 = config(1, 0.2);
    FactorState t = init_state(c1, L, M, 1);
    t.sigma_a_diag.setOnes();
    update_hat_sigma_b(t);
    std::mt19937_64 rng(5);
    const DenseMatrix v = oracle::random_matrix(L, M, rng);
    update_omega(t, v, c1);
    const double hat = t.hat_sigma_b(0, 0);
    for (int m = 0; m < M; ++m) {
      double num = 0.0;
      for (int l = 0; l < L; ++l) num += v(l, m) * t.a_bar(l, 0);
      // (num / hat) / sqrt(2 sigma^2 / hat)
      CHECK(t.omega(0, m) == doctest::Approx(num / std::sqrt(2.0 * 0.04 * hat)).epsilon(1e-12));
    }
  }

  SUBCASE("non-positive inverse diagonal") {
    s.hat_sigma_b_inv(1, 1) = 0.0;
    CHECK_THROWS_AS(update_omega(s, DenseMatrix::Zero(L, M), cfg), NonPositiveInverseDiagonal);
  }
}

TEST_CASE("update_k") {
  SolverConfig cfg = config(1);
  cfg.epsilon = 0.1;
  CHECK(update_k(10.0, 4.0, cfg) == doctest::Approx(9.4).epsilon(1e-15));
  cfg.epsilon = 1.0;
  CHECK(update_k(10.0, 4.0, cfg) == 4.0);
  cfg.epsilon = 0.5;
  CHECK_THROWS_AS(update_k(1.0, -3.0, cfg), NonPositiveK);
  cfg.mode = KMode::fixed;
  cfg.fixed_k = 123.0;
  CHECK(update_k(10.0, 4.0, cfg) == 123.0);
  CHECK(update_k(10.0, -1e9, cfg) == 123.0);
}

TEST_CASE("compute_zb") {
  CHECK(compute_zb(5.0, 0.0) == 1.0);
  CHECK(compute_zb(7.25, 7.25) == 0.0);
  CHECK(compute_zb(2.0, 4.0) == -1.0);
}

TEST_CASE("update_b single-component substitution") {
  const SolverConfig base = config(1, 0.1);
  FactorState s = init_state(base, 2, 1, 1);
  s.hat_sigma_b_inv = DenseMatrix::Constant(1, 1, 0.5);
  s.ridge = DenseMatrix::Constant(1, 1, 1.0);
  s.omega = DenseMatrix::Zero(1, 1);
  s.erf_omega = DenseMatrix::Zero(1, 1);
  s.exp_omega = DenseMatrix::Ones(1, 1);
  s.k = 2.0;
  s.z_b = 0.5;
  const DenseMatrix v = DenseMatrix::Zero(2, 1);

  SolverConfig comp = base;
  comp.erf = ErfConvention::complementary;
  s.erf_omega(0, 0) = laplace_erf(0.0, comp.erf);
  update_b(s, v, comp);
  CHECK(s.b_bar(0, 0) == doctest::Approx(0.995).epsilon(1e-15));

  // the odd error function vanishes at zero, so only the ridge survives
  s.erf_omega(0, 0) = laplace_erf(0.0, base.erf);
  update_b(s, v, base);
  CHECK(s.b_bar(0, 0) == 1.0);
}

TEST_CASE("update_b in the uniform-prior limit") {
  std::mt19937_64 rng(6);
  const SolverConfig cfg = config(3, 0.2);
  FactorState s = init_state(cfg, 5, 4, 3);
  const DenseMatrix v = oracle::random_matrix(5, 4, rng);
  update_a(s, v, cfg);
  update_hat_sigma_b(s);
  update_omega(s, v, cfg);
  s.k = 1e300;
  s.z_b = 1.0;
  update_b(s, v, cfg);
  CHECK(oracle::rel_error(s.b_bar, s.ridge) <= 1e-12);
  const DenseMatrix plain = (cfg.sigma * cfg.sigma * s.hat_sigma_b_inv.diagonal()).replicate(1, 4);
  CHECK(oracle::rel_error(s.sigma_b_diag, plain) <= 1e-12);
}

TEST_CASE("update_b rejects a vanishing denominator") {
  const SolverConfig cfg = config(2);
  FactorState s = init_state(cfg, 3, 3, 2);
  s.z_b = 0.0;
  CHECK_THROWS_AS(update_b(s, DenseMatrix::Zero(3, 3), cfg), ZeroDenominator);
}

TEST_CASE("each update agrees with the index-loop oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CAPTURE(seed);
    CHECK(compare_with_oracle(seed, ErfConvention::standard).max() <= 1e-10);
    CHECK(compare_with_oracle(seed, ErfConvention::complementary).max() <= 1e-10);
  }
}

TEST_CASE("update_a shares one hat matrix across rows") {
  // per-row oracle: each row l solves its own system, identical by construction
  std::mt19937_64 rng(7);
  const SolverConfig cfg = config(3, 0.3);
  FactorState s = init_state(cfg, 6, 5, 3);
  const DenseMatrix v = oracle::random_matrix(6, 5, rng);
  update_a(s, v, cfg);
  const oracle::AStep o = oracle::update_a(v, init_state(cfg, 6, 5, 3).b_bar, DenseMatrix::Ones(3, 5), cfg.sigma,
                                           DenseMatrix::Ones(3, 1));
  for (int l = 0; l < 6; ++l) CHECK(oracle::rel_error(DenseMatrix(s.a_bar.row(l)), o.a_bar.row(l)) <= 1e-12);
}

TEST_CASE("run stops after one iteration when the threshold exceeds any Z_B") {
  std::mt19937_64 rng(8);
  SolverConfig cfg = config(2, 0.1);
  cfg.zb_threshold = 2.0;
  const DenseMatrix v = oracle::random_matrix(6, 5, rng);
  const RunResult r = run(v, cfg);
  CHECK(r.trace.termination == Termination::zb_below_threshold);
  CHECK(r.state.iter == 1);
  REQUIRE(r.trace.records.size() == 1);
  CHECK(r.trace.records[0].iter == 1);
}

TEST_CASE("run returns the previous state when Z_B goes negative") {
  GroundTruth gt = sample_ground_truth(20, 20, 2, 0.5, 9);
  gt.sigma = 0.05;
  SolverConfig cfg = config(2, 0.05);
  cfg.k0 = 1e-3;  // far below S, so the first Z_B is negative
  cfg.epsilon = 0.01;
  const RunResult r = run(observe(gt).v, cfg);
  CHECK(r.trace.termination == Termination::zb_nonfinite_or_negative);
  CHECK(r.state.iter == 0);
  CHECK(r.state.k == cfg.k0);
  CHECK(r.trace.records.empty());
  CHECK_FALSE(r.trace.diagnostic.empty());
}

TEST_CASE("run reports divergence with a full k step") {
  GroundTruth gt = sample_ground_truth(10, 10, 2, 0.5, 10);
  gt.sigma = 0.05;
  SolverConfig cfg = config(2, 0.05);
  cfg.erf = ErfConvention::complementary;
  cfg.k0 = 1.0;
  cfg.epsilon = 1.0;
  const RunResult r = run(observe(gt).v, cfg);
  // eps = 1 sets k = S: either k <= 0 or k Z_B = 0 in the b update
  CHECK(r.trace.termination == Termination::diverged);
  CHECK(r.state.finite());
}

TEST_CASE("run honours max_iters and the trace stride") {
  std::mt19937_64 rng(11);
  SolverConfig cfg = config(2, 0.1);
  cfg.max_iters = 25;
  cfg.trace_stride = 10;
  const DenseMatrix v = oracle::random_matrix(8, 8, rng);
  const RunResult r = run(v, cfg, [](const FactorState& s) {
    IterationMetrics m;
    m.rmse_v = static_cast<double>(s.iter);
    return m;
  });
  CHECK(r.trace.termination == Termination::max_iters);
  CHECK(r.state.iter == 25);
  REQUIRE(r.trace.records.size() == 4);
  CHECK(r.trace.records[0].iter == 1);
  CHECK(r.trace.records[1].iter == 10);
  CHECK(r.trace.records[2].iter == 20);
  CHECK(r.trace.records[3].iter == 25);
  CHECK(*r.trace.records[3].metrics.rmse_v == 25.0);
  for (std::size_t i = 1; i < r.trace.records.size(); ++i)
    CHECK(r.trace.records[i].iter > r.trace.records[i - 1].iter);
}

TEST_CASE("run is deterministic") {
  GroundTruth gt = sample_ground_truth(12, 10, 2, 0.6, 12);
  gt.sigma = 0.05;
  const DenseMatrix v = observe(gt).v;
  SolverConfig cfg = config(2, 0.05);
  cfg.max_iters = 300;
  cfg.init_seed = 5;
  const RunResult a = run(v, cfg);
  const RunResult b = run(v, cfg);
  CHECK(a.state.a_bar == b.state.a_bar);
  CHECK(a.state.b_bar == b.state.b_bar);
  CHECK(a.state.k == b.state.k);
  REQUIRE(a.trace.records.size() == b.trace.records.size());
  for (std::size_t i = 0; i < a.trace.records.size(); ++i) CHECK(a.trace.records[i].z_b == b.trace.records[i].z_b);
}

TEST_CASE("a warm-started run continues where the first one stopped") {
  GroundTruth gt = sample_ground_truth(12, 10, 2, 0.6, 12);
  gt.sigma = 0.05;
  const DenseMatrix v = observe(gt).v;
  SolverConfig cfg = config(2, 0.05);
  cfg.init_seed = 5;
  cfg.max_iters = 150;
  const RunResult whole = run(v, cfg);
  REQUIRE(whole.trace.termination == Termination::max_iters);
  cfg.max_iters = 100;
  const RunResult head = run(v, cfg);
  const FactorState resumed = warm_start(head.state);
  CHECK(resumed.iter == 0);
  CHECK(std::isinf(resumed.z_b));
  cfg.max_iters = 50;
  const RunResult tail = run(v, cfg, {}, resumed);
  CHECK(tail.state.iter == 50);
  CHECK(tail.state.a_bar == whole.state.a_bar);
  CHECK(tail.state.b_bar == whole.state.b_bar);
  CHECK(tail.state.k == whole.state.k);
}

TEST_CASE("noiseless problem started at the truth with a huge fixed k") {
  GroundTruth gt = sample_ground_truth(30, 25, 3, 0.8, 13);
  const DenseMatrix v = observe(gt, true).v;
  SolverConfig cfg = config(3, 1e-6);
  cfg.mode = KMode::fixed;
  cfg.fixed_k = 1e300;
  cfg.max_iters = 1;
  FactorState start = init_state(cfg, 30, 25, 3);
  start.a_bar = gt.a_star;
  start.b_bar = gt.b_star;
  start.sigma_b_diag.setZero();
  const RunResult r = run(v, cfg, {}, start);
  CHECK(r.state.iter == 1);
  CHECK(rmse_v(v, r.state.a_bar, r.state.b_bar) <= 1e-9);
}

TEST_CASE("invalid configurations") {
  const DenseMatrix v = DenseMatrix::Ones(3, 3);
  SolverConfig cfg = config(1);
  cfg.epsilon = 0.0;
  CHECK_THROWS_AS(run(v, cfg), InvalidConfig);
  cfg = config(1);
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(run(v, cfg), InvalidConfig);
  cfg = config(1);
  cfg.mode = KMode::fixed;
  CHECK_THROWS_AS(run(v, cfg), InvalidConfig);
  cfg = config(2);
  cfg.c_a_diag = Vector::Ones(3);
  CHECK_THROWS_AS(run(v, cfg), InvalidConfig);
  cfg = config(1);
  DenseMatrix bad = v;
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(run(bad, cfg), Error);
}
