#include "vbsparse/solver.hpp"

#include "vbsparse/synth.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace vbsparse {

namespace {

constexpr double kMinKZb = 1e-300;

void require_dims(const FactorState& s, const DenseMatrix& v) {
  if (v.rows() != s.a_bar.rows() || v.cols() != s.b_bar.cols())
    throw DimensionMismatch("observation dimensions do not match the factor state");
}

}  // namespace

double laplace_erf(double x, ErfConvention convention) {
  return convention == ErfConvention::standard ? std::erf(x) : erf_paper(x);
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::zb_below_threshold: return "zb_below_threshold";
    case Termination::zb_nonfinite_or_negative: return "zb_nonfinite_or_negative";
    case Termination::max_iters: return "max_iters";
    case Termination::diverged: return "diverged";
  }
  return "unknown";
}

void SolverConfig::validate() const {
  if (rank < 1) throw InvalidConfig("rank must be >= 1");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InvalidConfig("sigma must be > 0");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw InvalidConfig("epsilon must lie in (0, 1]");
  if (!(zb_threshold > 0.0)) throw InvalidConfig("zb_threshold must be > 0");
  if (mode == KMode::tuned && !(k0 > 0.0)) throw InvalidConfig("k0 must be > 0");
  if (mode == KMode::fixed && !(fixed_k > 0.0)) throw InvalidConfig("fixed k must be > 0");
  if (max_iters < 1) throw InvalidConfig("max_iters must be >= 1");
  if (trace_stride < 1) throw InvalidConfig("trace stride must be >= 1");
  if (c_a_diag.size() != 0) {
    if (c_a_diag.size() != rank) throw InvalidConfig("c_a_diag length must equal H");
    if ((c_a_diag.array() <= 0.0).any()) throw InvalidConfig("c_a_diag entries must be > 0");
  }
}

bool FactorState::finite() const {
  return a_bar.allFinite() && b_bar.allFinite() && sigma_a_diag.allFinite() &&
         sigma_b_diag.allFinite() && hat_sigma_a.matrix().allFinite() &&
         hat_sigma_b.matrix().allFinite() && omega.allFinite() && std::isfinite(k);
}

FactorState init_state(const SolverConfig& cfg, int rows, int cols, int rank) {
  if (rows < 1 || cols < 1 || rank < 1) throw DimensionMismatch("dimensions must be >= 1");
  const std::uint64_t seed = derive_seed(cfg.init_seed, Stream::init);
  FactorState s;
  s.a_bar = gaussian_matrix(rows, rank, seed);
  s.b_bar = gaussian_matrix(rank, cols, mix64(seed));
  s.sigma_a_diag = Vector::Ones(rank);
  s.sigma_b_diag = DenseMatrix::Ones(rank, cols);
  s.sigma_b_diag_unclamped = s.sigma_b_diag;
  s.hat_sigma_a = SpdMatrix(DenseMatrix::Identity(rank, rank));
  s.hat_sigma_b = SpdMatrix(DenseMatrix::Identity(rank, rank));
  s.hat_sigma_b_inv = DenseMatrix::Identity(rank, rank);
  s.ridge = DenseMatrix::Zero(rank, cols);
  s.omega = DenseMatrix::Zero(rank, cols);
  s.erf_omega = DenseMatrix::Zero(rank, cols);
  s.exp_omega = DenseMatrix::Ones(rank, cols);
  s.k = cfg.initial_k();
  s.z_b = std::numeric_limits<double>::infinity();
  s.iter = 0;
  return s;
}

FactorState warm_start(FactorState s) {
  s.z_b = std::numeric_limits<double>::infinity();
  s.iter = 0;
  s.clamp_count = 0;
  return s;
}

void update_a(FactorState& s, const DenseMatrix& v, const SolverConfig& cfg) {
  require_dims(s, v);
  const int rank = s.rank();
  const double var = cfg.sigma * cfg.sigma;

  DenseMatrix hat = s.b_bar * s.b_bar.transpose();
  const Vector sum_sigma_b = s.sigma_b_diag.rowwise().sum();
  for (int h = 0; h < rank; ++h) hat(h, h) += var / cfg.c_a(h) + sum_sigma_b(h);
  hat = 0.5 * (hat + hat.transpose());
  s.hat_sigma_a = SpdMatrix(std::move(hat));

  SpdInverse inv = spd_inverse(s.hat_sigma_a);
  s.jitter_a = inv.jitter;
  const DenseMatrix& hat_inv = inv.inverse.matrix();
  s.sigma_a_diag = var * hat_inv.diagonal();
  s.a_bar = (v * s.b_bar.transpose()) * hat_inv;
}

void update_hat_sigma_b(FactorState& s) {
  DenseMatrix hat = s.a_bar.transpose() * s.a_bar;
  hat.diagonal() += static_cast<double>(s.rows()) * s.sigma_a_diag;
  hat = 0.5 * (hat + hat.transpose());
  s.hat_sigma_b = SpdMatrix(std::move(hat));

  SpdInverse inv = spd_inverse(s.hat_sigma_b);
  s.jitter_b = inv.jitter;
  s.hat_sigma_b_inv = inv.inverse.matrix();
}

void update_omega(FactorState& s, const DenseMatrix& v, const SolverConfig& cfg) {
  require_dims(s, v);
  const Vector diag = s.hat_sigma_b_inv.diagonal();
  if ((diag.array() <= 0.0).any())
    throw NonPositiveInverseDiagonal("hatSigma_B^-1 has a non-positive diagonal entry");
  s.ridge = s.hat_sigma_b_inv * (s.a_bar.transpose() * v);
  const Vector inv_scale = (2.0 * cfg.sigma * cfg.sigma * diag).cwiseSqrt().cwiseInverse();
  s.omega = inv_scale.asDiagonal() * s.ridge;
  const ErfConvention convention = cfg.erf;
  s.erf_omega = s.omega.unaryExpr([convention](double w) { return laplace_erf(w, convention); });
  s.exp_omega = (-s.omega.array().square()).exp().matrix();
}

double zb_sum(const FactorState& s, const SolverConfig& cfg) {
  const double var = cfg.sigma * cfg.sigma;
  const Vector diag = s.hat_sigma_b_inv.diagonal();
  const Vector pref = (2.0 * var / std::numbers::pi * diag).cwiseSqrt();
  double total = 0.0;
  for (Eigen::Index m = 0; m < s.omega.cols(); ++m)
    for (Eigen::Index h = 0; h < s.omega.rows(); ++h)
      total += pref(h) * s.exp_omega(h, m) + s.ridge(h, m) * s.erf_omega(h, m);
  return total;
}

double update_k(double k, double zb_sum_value, const SolverConfig& cfg) {
  if (cfg.mode == KMode::fixed) return cfg.fixed_k;
  const double next = (1.0 - cfg.epsilon) * k + cfg.epsilon * zb_sum_value;
  if (!(next > 0.0)) throw NonPositiveK("k update produced a non-positive value");
  return next;
}

double compute_zb(double k, double zb_sum_value) { return 1.0 - zb_sum_value / k; }

void update_b(FactorState& s, const DenseMatrix& v, const SolverConfig& cfg,
              const DenseMatrix* stale_a_bar) {
  require_dims(s, v);
  const double kz = s.k * s.z_b;
  if (!(std::abs(kz) >= kMinKZb)) throw ZeroDenominator("|k Z_B| is too small");

  const double var = cfg.sigma * cfg.sigma;
  const DenseMatrix& inv = s.hat_sigma_b_inv;
  const Vector diag = inv.diagonal();

  // shift_hm = sum_h' sigma^2 inv_h'h erf(omega_h'm) / (k Z_B)
  const DenseMatrix shift = (var / kz) * (inv.transpose() * s.erf_omega);

  // gauss_h'm = sqrt(2 / (pi sigma^2 inv_h'h')) exp(-omega_h'm^2)
  const Vector pref = (2.0 / (std::numbers::pi * var) * diag.cwiseInverse()).cwiseSqrt();
  const DenseMatrix gauss = pref.asDiagonal() * s.exp_omega;
  const DenseMatrix inv_sq = inv.array().square().matrix();
  const DenseMatrix curvature = (var * var / kz) * (inv_sq.transpose() * gauss);

  DenseMatrix raw = (var * diag).replicate(1, s.cols()) - curvature - shift.array().square().matrix();
  s.sigma_b_diag_unclamped = raw;
  s.clamp_count = (raw.array() < 0.0).count();
  s.sigma_b_diag = raw.cwiseMax(0.0);

  if (cfg.stale_a_in_b_ridge && stale_a_bar != nullptr)
    s.b_bar = inv * (stale_a_bar->transpose() * v) - shift;
  else
    s.b_bar = s.ridge - shift;
}

bool iterate(FactorState& s, const DenseMatrix& v, const SolverConfig& cfg) {
  const DenseMatrix previous_a = cfg.stale_a_in_b_ridge ? s.a_bar : DenseMatrix();
  update_a(s, v, cfg);
  update_hat_sigma_b(s);
  update_omega(s, v, cfg);
  const double total = zb_sum(s, cfg);
  s.k = update_k(s.k, total, cfg);
  s.z_b = compute_zb(s.k, total);
  if (!std::isfinite(s.z_b) || s.z_b < 0.0) return false;
  update_b(s, v, cfg, cfg.stale_a_in_b_ridge ? &previous_a : nullptr);
  ++s.iter;
  return true;
}

RunResult run(const DenseMatrix& v, const SolverConfig& cfg, const MetricHook& hook,
              std::optional<FactorState> initial) {
  if (v.rows() < 1 || v.cols() < 1) throw DimensionMismatch("empty observation matrix");
  if (!v.allFinite()) throw Error("observation matrix contains non-finite entries");

  cfg.validate();
  RunResult result;
  if (initial) {
    result.state = std::move(*initial);
    require_dims(result.state, v);
    if (result.state.rank() != cfg.rank) throw DimensionMismatch("initial state rank differs from cfg.rank");
    if (cfg.mode == KMode::fixed) result.state.k = cfg.fixed_k;
  } else {
    result.state = init_state(cfg, static_cast<int>(v.rows()), static_cast<int>(v.cols()), cfg.rank);
  }

  FactorState& state = result.state;
  RunTrace& trace = result.trace;
  bool pending_record = false;

  auto record = [&](const FactorState& s) {
    TraceRecord r;
    r.iter = s.iter;
    r.k = s.k;
    r.z_b = s.z_b;
    r.clamped = s.clamp_count;
    if (hook) r.metrics = hook(s);
    trace.records.push_back(r);
    pending_record = false;
  };

  trace.termination = Termination::zb_below_threshold;
  while (state.z_b > cfg.zb_threshold) {
    if (state.iter >= cfg.max_iters) {
      trace.termination = Termination::max_iters;
      break;
    }
    FactorState next = state;
    try {
      if (!iterate(next, v, cfg)) {
        trace.termination = Termination::zb_nonfinite_or_negative;
        trace.diagnostic = "Z_B = " + std::to_string(next.z_b) + " at iteration " +
                           std::to_string(next.iter + 1);
        break;
      }
    } catch (const Error& e) {
      trace.termination = Termination::diverged;
      trace.diagnostic = e.what();
      break;
    }
    if (!next.finite()) {
      trace.termination = Termination::diverged;
      trace.diagnostic = "non-finite state at iteration " + std::to_string(next.iter);
      break;
    }
    state = std::move(next);
    trace.clamp_events += state.clamp_count;
    if (state.iter == 1 || state.iter % cfg.trace_stride == 0)
      record(state);
    else
      pending_record = true;
  }
  // the first and last completed iterations are always in the trace
  if (pending_record) record(state);
  return result;
}

}  // namespace vbsparse
