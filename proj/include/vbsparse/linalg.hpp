#pragma once

// Dense linear-algebra substrate for the VB solver: matrix aliases, an SPD
// wrapper, jittered Cholesky inversion and the complementary error function.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace vbsparse {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// Symmetric matrix that is expected to be positive definite.  Symmetry is
// checked on construction; definiteness is only established by spd_inverse.
class SpdMatrix {
 public:
  SpdMatrix() = default;
  explicit SpdMatrix(DenseMatrix m);

  static constexpr double kSymmetryTolerance = 1e-10;

  Eigen::Index dim() const { return m_.rows(); }
  const DenseMatrix& matrix() const { return m_; }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

 private:
  DenseMatrix m_;
};

struct SpdInverse {
  SpdMatrix inverse;
  double jitter = 0.0;  // diagonal shift that made the factorization succeed
};

// Inverts via Cholesky.  When the plain factorization fails, retries with a
// diagonal shift of 1e-10*tr(M)/dim, escalating by 10x up to 1e-4*tr(M)/dim.
SpdInverse spd_inverse(const SpdMatrix& m);

// (2/sqrt(pi)) * integral_x^inf exp(-t^2) dt, i.e. erfc(x).  Named apart from
// std::erf so the two conventions cannot be swapped silently.
double erf_paper(double x);

bool all_finite(const DenseMatrix& m);

}  // namespace vbsparse
