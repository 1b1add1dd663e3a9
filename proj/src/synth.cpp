#include "vbsparse/synth.hpp"

#include <random>

namespace vbsparse {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, Stream stream) {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(stream)));
}

DenseMatrix gaussian_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  DenseMatrix m(rows, cols);
  // row-major fill order so the draw sequence does not depend on storage
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

GroundTruth sample_ground_truth(int rows, int cols, int rank, double rho, std::uint64_t seed) {
  if (!(rho > 0.0 && rho <= 1.0)) throw InvalidRho("rho must lie in (0, 1]");
  if (rows < 1 || cols < 1 || rank < 1) throw DimensionMismatch("dimensions must be >= 1");

  std::mt19937_64 rng(derive_seed(seed, Stream::factors));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution slab(rho);

  GroundTruth gt;
  gt.rho = rho;
  gt.seed = seed;
  gt.a_star.resize(rows, rank);
  for (int l = 0; l < rows; ++l)
    for (int h = 0; h < rank; ++h) gt.a_star(l, h) = normal(rng);
  gt.b_star.resize(rank, cols);
  for (int h = 0; h < rank; ++h)
    for (int m = 0; m < cols; ++m) {
      // both draws are always consumed to keep the stream layout fixed
      const bool nonzero = slab(rng);
      const double value = normal(rng);
      gt.b_star(h, m) = nonzero ? value : 0.0;
    }
  return gt;
}

ObservationMatrix observe(const GroundTruth& gt, bool zero_noise) {
  if (zero_noise) {
    ObservationMatrix obs;
    obs.v = gt.a_star * gt.b_star;
    obs.provenance = Provenance::synthetic;
    return obs;
  }
  return observe(gt, gt.sigma);
}

ObservationMatrix observe(const GroundTruth& gt, double sigma) {
  ObservationMatrix obs;
  obs.v = gt.a_star * gt.b_star;
  obs.provenance = Provenance::synthetic;
  if (sigma > 0.0)
    obs.v += sigma * gaussian_matrix(static_cast<int>(obs.v.rows()), static_cast<int>(obs.v.cols()),
                                     derive_seed(gt.seed, Stream::noise));
  return obs;
}

}  // namespace vbsparse
