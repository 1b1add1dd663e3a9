#include "vbsparse/linalg.hpp"

#include <cmath>

namespace vbsparse {

SpdMatrix::SpdMatrix(DenseMatrix m) : m_(std::move(m)) {
  if (m_.rows() < 1 || m_.rows() != m_.cols())
    throw DimensionMismatch("SpdMatrix: matrix must be square and non-empty");
  const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
  if ((m_ - m_.transpose()).cwiseAbs().maxCoeff() > kSymmetryTolerance * scale)
    throw Error("SpdMatrix: matrix is not symmetric");
}

SpdInverse spd_inverse(const SpdMatrix& m) {
  const auto n = m.dim();
  const DenseMatrix& a = m.matrix();
  const DenseMatrix identity = DenseMatrix::Identity(n, n);

  Eigen::LLT<DenseMatrix> llt(a);
  if (llt.info() == Eigen::Success) {
    DenseMatrix inv = llt.solve(identity);
    inv = (0.5 * (inv + inv.transpose())).eval();
    if (all_finite(inv)) return {SpdMatrix(std::move(inv)), 0.0};
  }

  const double base = std::abs(a.trace()) / static_cast<double>(n);
  for (double level = 1e-10; level <= 1e-4 * (1 + 1e-9); level *= 10) {
    const double jitter = level * base;
    llt.compute(a + jitter * identity);
    if (llt.info() != Eigen::Success) continue;
    DenseMatrix inv = llt.solve(identity);
    inv = (0.5 * (inv + inv.transpose())).eval();
    if (all_finite(inv)) return {SpdMatrix(std::move(inv)), jitter};
  }
  throw NotPositiveDefinite("spd_inverse: Cholesky failed at every jitter level");
}

double erf_paper(double x) { return std::erfc(x); }

bool all_finite(const DenseMatrix& m) { return m.allFinite(); }

}  // namespace vbsparse
