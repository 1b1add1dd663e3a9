#pragma once

// Reconstruction errors that quotient out the degeneracy of matrix
// factorization: column permutation, per-column sign and per-column scale
// {c_h a_lh, b_hm / c_h}.

#include "vbsparse/linalg.hpp"

#include <vector>

namespace vbsparse {

class ZeroColumn : public Error {
 public:
  using Error::Error;
};
class TooLarge : public Error {
 public:
  using Error::Error;
};

struct Alignment {
  std::vector<int> assignment;  // ground-truth column h -> estimated column h'
  std::vector<int> sign;        // s'_h in {-1, +1}
  std::vector<double> norm;     // N_h' = sqrt(sum_l a_bar_lh'^2 / L), per estimated column
  std::vector<int> pair_sign;   // best A-side sign of every (h, h') pair, row-major H x H'
};

struct MetricsReport {
  double rmse_a = 0.0;
  double rmse_b = 0.0;
  double rmse_v = 0.0;
  double sparsity_b = 0.0;
  Alignment alignment;
};

inline constexpr double kDefaultSparsityThreshold = 1e-2;

// Column RMS norms of a_bar; throws ZeroColumn on an all-zero column.
std::vector<double> column_norms(const DenseMatrix& a_bar);

struct AlignedError {
  double rmse = 0.0;
  Alignment alignment;
};

// For each ground-truth column independently, the best (h', sign) pair.  Two
// ground-truth columns may pick the same estimated column.
AlignedError align_and_rmse_a(const DenseMatrix& a_star, const DenseMatrix& a_bar);

// Which sign multiplies candidate row h' in the RMSE_B minimum over h'.
//   per_candidate: the A-side sign of the pair (h, h'); invariant under
//                  per-column sign flips of the estimate.
//   assigned:      the single sign of h's A-side match for every candidate.
//                  Equal to per_candidate whenever the B minimum lands on the
//                  A match, not sign invariant otherwise.
enum class BSign { per_candidate, assigned };

// Per h, minimum over h' of sum_m (B*_hm - s N_h' b_bar_h'm)^2.
double rmse_b(const DenseMatrix& b_star, const DenseMatrix& b_bar, const Alignment& align,
              BSign mode = BSign::per_candidate);

double rmse_v(const DenseMatrix& v, const DenseMatrix& a_bar, const DenseMatrix& b_bar);

// Fraction of |N_h b_bar_hm| below threshold.
double sparsity_b(const DenseMatrix& a_bar, const DenseMatrix& b_bar,
                  double threshold = kDefaultSparsityThreshold);

// Fraction of exactly-zero entries.
double zero_fraction(const DenseMatrix& m);

struct BruteForceAlignment {
  AlignedError per_column;   // same objective as align_and_rmse_a
  AlignedError permutation;  // best one-to-one assignment over all H! orders
};

// Exhaustive enumeration, for H <= 8.  Throws TooLarge otherwise.
BruteForceAlignment brute_force_alignment(const DenseMatrix& a_star, const DenseMatrix& a_bar);

MetricsReport evaluate(const DenseMatrix& a_star, const DenseMatrix& b_star, const DenseMatrix& v,
                       const DenseMatrix& a_bar, const DenseMatrix& b_bar,
                       double sparsity_threshold = kDefaultSparsityThreshold);

}  // namespace vbsparse
