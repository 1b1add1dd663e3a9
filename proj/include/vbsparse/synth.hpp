#pragma once

#include "vbsparse/linalg.hpp"

#include <cstdint>
#include <string>

namespace vbsparse {

class InvalidRho : public Error {
 public:
  using Error::Error;
};

// Ground-truth factors: dense Gaussian A* (L x H) and Bernoulli-Gaussian
// B* (H x M).  rho is the weight of the Gaussian slab, i.e. the probability
// that an entry of B* is nonzero.
struct GroundTruth {
  DenseMatrix a_star;
  DenseMatrix b_star;
  double rho = 1.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

enum class Provenance { synthetic, image, external };

struct ObservationMatrix {
  DenseMatrix v;
  Provenance provenance = Provenance::external;
  std::string source;  // image path, or empty
};

// Independent random streams derived from one seed.  Factors, noise and
// solver initialization never share a generator.
enum class Stream : std::uint64_t { factors = 1, noise = 2, init = 3, image_noise = 4 };

std::uint64_t derive_seed(std::uint64_t seed, Stream stream);

// splitmix64 finalizer; a bijection on 64-bit words.
std::uint64_t mix64(std::uint64_t x);

GroundTruth sample_ground_truth(int rows, int cols, int rank, double rho, std::uint64_t seed);

// V = A* B* + E, E_ij ~ N(0, sigma^2) drawn from the noise stream of gt.seed.
// With zero_noise the product is returned exactly and sigma is ignored.
ObservationMatrix observe(const GroundTruth& gt, bool zero_noise = false);

// V = A* B* + E with an explicit noise level, reusing one ground truth
// across a noise sweep.
ObservationMatrix observe(const GroundTruth& gt, double sigma);

// Entries ~ N(0,1) from the given seed.
DenseMatrix gaussian_matrix(int rows, int cols, std::uint64_t seed);

}  // namespace vbsparse
