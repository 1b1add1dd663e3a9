#include "vbsparse/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace vbsparse {

std::vector<double> column_norms(const DenseMatrix& a_bar) {
  const double rows = static_cast<double>(a_bar.rows());
  std::vector<double> norms(a_bar.cols());
  for (Eigen::Index h = 0; h < a_bar.cols(); ++h) {
    norms[h] = std::sqrt(a_bar.col(h).squaredNorm() / rows);
    if (!(norms[h] > 0.0)) throw ZeroColumn("a_bar column " + std::to_string(h) + " is zero");
  }
  return norms;
}

namespace {

double column_residual(const DenseMatrix& a_star, const DenseMatrix& a_bar, Eigen::Index h,
                       Eigen::Index hp, int sign, double norm) {
  double sum = 0.0;
  for (Eigen::Index l = 0; l < a_star.rows(); ++l) {
    const double d = a_star(l, h) - sign * a_bar(l, hp) / norm;
    sum += d * d;
  }
  return sum;
}

}  // namespace

AlignedError align_and_rmse_a(const DenseMatrix& a_star, const DenseMatrix& a_bar) {
  if (a_star.rows() != a_bar.rows()) throw DimensionMismatch("A* and a_bar differ in L");
  const auto rows = a_star.rows();
  const auto truth_cols = a_star.cols();
  const auto est_cols = a_bar.cols();

  AlignedError out;
  out.alignment.norm = column_norms(a_bar);
  out.alignment.assignment.assign(truth_cols, 0);
  out.alignment.sign.assign(truth_cols, 1);
  out.alignment.pair_sign.assign(truth_cols * est_cols, 1);

  // With unit-RMS estimate columns, sum_l (x_l - s y_l / N)^2
  //   = |x|^2 + L - 2 s <x, y> / N, so the best sign follows <x, y>.
  const DenseMatrix cross = a_star.transpose() * a_bar;
  const Eigen::VectorXd truth_sq = a_star.colwise().squaredNorm();
  double total = 0.0;
  for (Eigen::Index h = 0; h < truth_cols; ++h) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index hp = 0; hp < est_cols; ++hp) {
      const double c = cross(h, hp) / out.alignment.norm[hp];
      const int s = c < 0.0 ? -1 : 1;
      out.alignment.pair_sign[h * est_cols + hp] = s;
      const double value = truth_sq(h) + static_cast<double>(rows) - 2.0 * s * c;
      if (value < best) {
        best = value;
        out.alignment.assignment[h] = static_cast<int>(hp);
        out.alignment.sign[h] = s;
      }
    }
    // the expansion cancels badly near a perfect match, so sum the chosen pair directly
    total += column_residual(a_star, a_bar, h, out.alignment.assignment[h], out.alignment.sign[h],
                             out.alignment.norm[out.alignment.assignment[h]]);
  }
  out.rmse = std::sqrt(total / static_cast<double>(rows * truth_cols));
  return out;
}

double rmse_b(const DenseMatrix& b_star, const DenseMatrix& b_bar, const Alignment& align, BSign mode) {
  if (b_star.cols() != b_bar.cols()) throw DimensionMismatch("B* and b_bar differ in M");
  const auto truth_rows = b_star.rows();
  const auto est_rows = b_bar.rows();
  if (static_cast<Eigen::Index>(align.sign.size()) != truth_rows ||
      static_cast<Eigen::Index>(align.norm.size()) != est_rows ||
      (mode == BSign::per_candidate &&
       static_cast<Eigen::Index>(align.pair_sign.size()) != truth_rows * est_rows))
    throw DimensionMismatch("alignment does not match B* / b_bar");
  double total = 0.0;
  for (Eigen::Index h = 0; h < truth_rows; ++h) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index hp = 0; hp < est_rows; ++hp) {
      const int sign = mode == BSign::assigned ? align.sign[h] : align.pair_sign[h * est_rows + hp];
      const double scale = sign * align.norm[hp];
      const double value = (b_star.row(h) - scale * b_bar.row(hp)).squaredNorm();
      best = std::min(best, value);
    }
    total += best;
  }
  return std::sqrt(total / static_cast<double>(b_star.rows() * b_star.cols()));
}

double rmse_v(const DenseMatrix& v, const DenseMatrix& a_bar, const DenseMatrix& b_bar) {
  if (a_bar.cols() != b_bar.rows() || v.rows() != a_bar.rows() || v.cols() != b_bar.cols())
    throw DimensionMismatch("rmse_v: inconsistent dimensions");
  return std::sqrt((v - a_bar * b_bar).squaredNorm() / static_cast<double>(v.size()));
}

double sparsity_b(const DenseMatrix& a_bar, const DenseMatrix& b_bar, double threshold) {
  if (a_bar.cols() != b_bar.rows()) throw DimensionMismatch("sparsity_b: inconsistent rank");
  const std::vector<double> norms = column_norms(a_bar);
  std::int64_t sparse = 0;
  for (Eigen::Index h = 0; h < b_bar.rows(); ++h)
    for (Eigen::Index m = 0; m < b_bar.cols(); ++m)
      if (std::abs(norms[h] * b_bar(h, m)) < threshold) ++sparse;
  return static_cast<double>(sparse) / static_cast<double>(b_bar.size());
}

double zero_fraction(const DenseMatrix& m) {
  return static_cast<double>((m.array() == 0.0).count()) / static_cast<double>(m.size());
}


BruteForceAlignment brute_force_alignment(const DenseMatrix& a_star, const DenseMatrix& a_bar) {
  if (a_star.rows() != a_bar.rows()) throw DimensionMismatch("A* and a_bar differ in L");
  const auto truth_cols = a_star.cols();
  const auto est_cols = a_bar.cols();
  if (truth_cols > 8 || est_cols > 8) throw TooLarge("brute-force alignment supports H <= 8");
  const double denom = static_cast<double>(a_star.rows() * truth_cols);

  const std::vector<double> norms = column_norms(a_bar);
  // residual[h][hp][0 for -1, 1 for +1]
  std::vector<std::vector<std::array<double, 2>>> residual(truth_cols,
                                                           std::vector<std::array<double, 2>>(est_cols));
  for (Eigen::Index h = 0; h < truth_cols; ++h)
    for (Eigen::Index hp = 0; hp < est_cols; ++hp)
      for (int si = 0; si < 2; ++si)
        residual[h][hp][si] = column_residual(a_star, a_bar, h, hp, si == 0 ? -1 : 1, norms[hp]);

  BruteForceAlignment out;
  auto& per = out.per_column;
  per.alignment.norm = norms;
  per.alignment.assignment.assign(truth_cols, 0);
  per.alignment.sign.assign(truth_cols, 1);
  per.alignment.pair_sign.assign(truth_cols * est_cols, 1);
  for (Eigen::Index h = 0; h < truth_cols; ++h)
    for (Eigen::Index hp = 0; hp < est_cols; ++hp)
      if (residual[h][hp][0] < residual[h][hp][1]) per.alignment.pair_sign[h * est_cols + hp] = -1;
  double total = 0.0;
  for (Eigen::Index h = 0; h < truth_cols; ++h) {
    double best = std::numeric_limits<double>::infinity();
    // +1 first so exact sign ties resolve to +1
    for (Eigen::Index hp = 0; hp < est_cols; ++hp)
      for (int si : {1, 0})
        if (residual[h][hp][si] < best) {
          best = residual[h][hp][si];
          per.alignment.assignment[h] = static_cast<int>(hp);
          per.alignment.sign[h] = si == 0 ? -1 : 1;
        }
    total += best;
  }
  per.rmse = std::sqrt(total / denom);

  auto& perm = out.permutation;
  perm.alignment.norm = norms;
  perm.alignment.pair_sign = per.alignment.pair_sign;
  perm.rmse = std::numeric_limits<double>::infinity();
  if (est_cols >= truth_cols) {
    std::vector<int> order(est_cols);
    std::iota(order.begin(), order.end(), 0);
    double best_total = std::numeric_limits<double>::infinity();
    do {
      double sum = 0.0;
      for (Eigen::Index h = 0; h < truth_cols; ++h) {
        const auto& r = residual[h][order[h]];
        sum += std::min(r[0], r[1]);
      }
      if (sum < best_total) {
        best_total = sum;
        perm.alignment.assignment.assign(order.begin(), order.begin() + truth_cols);
        perm.alignment.sign.resize(truth_cols);
        for (Eigen::Index h = 0; h < truth_cols; ++h) {
          const auto& r = residual[h][order[h]];
          perm.alignment.sign[h] = r[0] < r[1] ? -1 : 1;
        }
      }
    } while (std::next_permutation(order.begin(), order.end()));
    perm.rmse = std::sqrt(best_total / denom);
  }
  return out;
}

MetricsReport evaluate(const DenseMatrix& a_star, const DenseMatrix& b_star, const DenseMatrix& v,
                       const DenseMatrix& a_bar, const DenseMatrix& b_bar, double sparsity_threshold) {
  MetricsReport report;
  AlignedError a = align_and_rmse_a(a_star, a_bar);
  report.rmse_a = a.rmse;
  report.alignment = std::move(a.alignment);
  report.rmse_b = rmse_b(b_star, b_bar, report.alignment);
  report.rmse_v = rmse_v(v, a_bar, b_bar);
  report.sparsity_b = sparsity_b(a_bar, b_bar, sparsity_threshold);
  return report;
}

}  // namespace vbsparse
