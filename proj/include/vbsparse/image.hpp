#pragma once

// 8-bit grayscale PGM (P5 binary, P2 plain) input/output and pixel
// standardization.

#include "vbsparse/synth.hpp"

#include <filesystem>
#include <string>

namespace vbsparse {

class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};
class CorruptHeader : public Error {
 public:
  using Error::Error;
};
class NormalizationDegenerate : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};

enum class Normalization { none, global, per_column };

Normalization parse_normalization(const std::string& name);
const char* to_string(Normalization n);

// Raw pixel values (0..maxval) as an L x M matrix, L = image height.
DenseMatrix read_pgm(const std::filesystem::path& path);

// Writes P5; values are rounded and clamped to [0, 255].
void write_pgm(const std::filesystem::path& path, const DenseMatrix& pixels);

// global: one mean and one population standard deviation over all pixels.
// per_column: the same, column by column.
// Throws NormalizationDegenerate on zero variance.
DenseMatrix standardize(const DenseMatrix& pixels, Normalization mode);

ObservationMatrix ingest_image(const std::filesystem::path& path,
                               Normalization mode = Normalization::global);

}  // namespace vbsparse
