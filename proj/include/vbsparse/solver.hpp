#pragma once

// Variational-Bayes sparse matrix factorization V ~ A B with a Gaussian prior
// on A and a Laplace prior exp(-|b|/k) on B, truncated at first order in 1/k.
// The Laplace scale k is tuned by relaxing it toward the zero point of the
// first-order normalization factor Z_B = 1 - S/k.

#include "vbsparse/linalg.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace vbsparse {

class NonPositiveInverseDiagonal : public Error {
 public:
  using Error::Error;
};
class NonPositiveK : public Error {
 public:
  using Error::Error;
};
class ZeroDenominator : public Error {
 public:
  using Error::Error;
};
class InvalidConfig : public Error {
 public:
  using Error::Error;
};

// Which error function enters the Laplace correction terms and Z_B.
//   standard:      erf(x), the odd function.  E|b| under N(mu, s^2) expands to
//                  s*sqrt(2/pi)*exp(-w^2) + mu*erf(w), which is what the
//                  bracket of Z_B must equal for the zero point to exist.
//   complementary: erf_paper(x) = erfc(x), the "integral from x to infinity"
//                  reading.  Kept for A/B comparison; the bracket can go
//                  negative and the k relaxation then runs through zero.
enum class ErfConvention { standard, complementary };

enum class KMode { tuned, fixed };

struct SolverConfig {
  int rank = 1;                 // H
  double sigma = 0.05;          // noise magnitude, known a priori
  Vector c_a_diag;              // (C_A)_hh; empty means all ones
  double epsilon = 0.1;         // partial-update rate for k
  double k0 = 1e8;              // initial k in tuned mode; must exceed the first S
  double zb_threshold = 1e-5;
  std::int64_t max_iters = 1'000'000;
  KMode mode = KMode::tuned;
  double fixed_k = 0.0;         // used when mode == fixed
  std::uint64_t init_seed = 0;
  ErfConvention erf = ErfConvention::standard;
  // Use the previous iterate of a_bar in the ridge term of the b update
  // (the literal algorithm listing).  Off: the current iterate, as in the
  // closed-form mean.
  bool stale_a_in_b_ridge = false;
  std::int64_t trace_stride = 1;

  // Throws InvalidConfig.
  void validate() const;
  double c_a(int h) const { return c_a_diag.size() == 0 ? 1.0 : c_a_diag(h); }
  double initial_k() const { return mode == KMode::fixed ? fixed_k : k0; }
};

struct FactorState {
  DenseMatrix a_bar;                   // L x H
  DenseMatrix b_bar;                   // H x M
  Vector sigma_a_diag;                 // (Sigma_Al)_hh, identical for every l
  DenseMatrix sigma_b_diag;            // H x M, clamped at 0
  DenseMatrix sigma_b_diag_unclamped;  // H x M, raw value before clamping
  SpdMatrix hat_sigma_a;               // shared over l
  SpdMatrix hat_sigma_b;               // shared over m
  DenseMatrix hat_sigma_b_inv;
  DenseMatrix ridge;                   // hatSigma_B^-1 a_bar^T V, H x M
  DenseMatrix omega;                   // H x M
  DenseMatrix erf_omega;               // erf(omega) under the configured convention
  DenseMatrix exp_omega;               // exp(-omega^2)
  double k = 0.0;
  double z_b = 0.0;
  std::int64_t iter = 0;
  double jitter_a = 0.0;
  double jitter_b = 0.0;
  std::int64_t clamp_count = 0;        // Sigma_B entries clamped in the last b update

  int rows() const { return static_cast<int>(a_bar.rows()); }
  int cols() const { return static_cast<int>(b_bar.cols()); }
  int rank() const { return static_cast<int>(a_bar.cols()); }
  bool finite() const;
};

struct IterationMetrics {
  std::optional<double> rmse_a;
  std::optional<double> rmse_b;
  std::optional<double> rmse_v;
  std::optional<double> sparsity_b;
};

using MetricHook = std::function<IterationMetrics(const FactorState&)>;

struct TraceRecord {
  std::int64_t iter = 0;
  double k = 0.0;
  double z_b = 0.0;
  IterationMetrics metrics;
  std::int64_t clamped = 0;
};

enum class Termination { zb_below_threshold, zb_nonfinite_or_negative, max_iters, diverged };

const char* to_string(Termination t);

struct RunTrace {
  std::vector<TraceRecord> records;
  Termination termination = Termination::max_iters;
  std::string diagnostic;
  std::int64_t clamp_events = 0;  // Sigma_B clamps summed over every iteration
};

struct RunResult {
  FactorState state;
  RunTrace trace;
};

// Random N(0,1) means from cfg.init_seed, Sigma_B = 1, k = initial k and a
// +infinity Z_B sentinel.
FactorState init_state(const SolverConfig& cfg, int rows, int cols, int rank);

// A finished state as the start of a new run: iteration count 0 and the Z_B
// sentinel, so the next run's stopping test waits for its own first Z_B.
FactorState warm_start(FactorState s);

// hat_sigma_a, sigma_a_diag and a_bar from the current b_bar / sigma_b_diag.
void update_a(FactorState& s, const DenseMatrix& v, const SolverConfig& cfg);

// hat_sigma_b = L diag(sigma_a_diag) + a_bar^T a_bar and its inverse.
void update_hat_sigma_b(FactorState& s);

// Ridge numerator hatSigma_B^-1 a_bar^T V, omega, and the erf / exp tables
// that zb_sum and update_b read.  Requires the inverse from
// update_hat_sigma_b.
void update_omega(FactorState& s, const DenseMatrix& v, const SolverConfig& cfg);

// The scalar S with Z_B = 1 - S/k; its fixed point in k is the zero of Z_B.
double zb_sum(const FactorState& s, const SolverConfig& cfg);

// (1 - eps) k + eps S in tuned mode, the configured k in fixed mode.
double update_k(double k, double zb_sum_value, const SolverConfig& cfg);

double compute_zb(double k, double zb_sum_value);

// b_bar and sigma_b_diag from omega, k and z_b.  stale_a_bar is the previous
// iterate, used only when cfg.stale_a_in_b_ridge is set.
void update_b(FactorState& s, const DenseMatrix& v, const SolverConfig& cfg,
              const DenseMatrix* stale_a_bar = nullptr);

// One full iteration in the fixed order a -> hat_sigma_b -> omega -> k -> Z_B
// -> b.  Returns false, leaving b untouched, when Z_B is negative or not
// finite.
bool iterate(FactorState& s, const DenseMatrix& v, const SolverConfig& cfg);

RunResult run(const DenseMatrix& v, const SolverConfig& cfg, const MetricHook& hook = {},
              std::optional<FactorState> initial = std::nullopt);

// The error function selected by the convention.
double laplace_erf(double x, ErfConvention convention);

}  // namespace vbsparse
