#include "vbsparse/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <vector>

namespace vbsparse {

Normalization parse_normalization(const std::string& name) {
  if (name == "none") return Normalization::none;
  if (name == "global") return Normalization::global;
  if (name == "per_column") return Normalization::per_column;
  throw Error("unknown normalization '" + name + "'");
}

const char* to_string(Normalization n) {
  switch (n) {
    case Normalization::none: return "none";
    case Normalization::global: return "global";
    case Normalization::per_column: return "per_column";
  }
  return "unknown";
}

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  // Next whitespace-delimited token, skipping '#' comments.
  std::string token() {
    skip_space_and_comments();
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) out.push_back(static_cast<char>(bytes_[pos_++]));
    if (out.empty()) throw CorruptHeader("PGM: unexpected end of header");
    return out;
  }

  long number() {
    const std::string t = token();
    for (char c : t)
      if (!std::isdigit(static_cast<unsigned char>(c))) throw CorruptHeader("PGM: bad header field '" + t + "'");
    if (t.size() > 9) throw CorruptHeader("PGM: header field too large");
    return std::stol(t);
  }

  // The single whitespace byte after maxval.
  void skip_one() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw CorruptHeader("PGM: missing separator");
    ++pos_;
  }

  std::size_t pos() const { return pos_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

DenseMatrix read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 2 || bytes[0] != 'P') throw UnsupportedFormat("not a PGM file: " + path.string());
  const char kind = static_cast<char>(bytes[1]);
  if (kind != '5' && kind != '2') throw UnsupportedFormat("only P5 and P2 PGM are supported");

  HeaderReader header(bytes);
  header.token();  // magic
  const long width = header.number();
  const long height = header.number();
  const long maxval = header.number();
  if (width < 1 || height < 1) throw CorruptHeader("PGM: non-positive dimensions");
  if (maxval < 1 || maxval > 255) throw UnsupportedFormat("only 8-bit PGM (maxval <= 255) is supported");

  DenseMatrix pixels(height, width);
  if (kind == '5') {
    header.skip_one();
    const std::size_t start = header.pos();
    if (bytes.size() - start < static_cast<std::size_t>(width * height))
      throw CorruptHeader("PGM: truncated pixel data");
    for (long r = 0; r < height; ++r)
      for (long c = 0; c < width; ++c) {
        const unsigned value = bytes[start + r * width + c];
        if (value > static_cast<unsigned>(maxval)) throw CorruptHeader("PGM: pixel exceeds maxval");
        pixels(r, c) = value;
      }
  } else {
    for (long r = 0; r < height; ++r)
      for (long c = 0; c < width; ++c) {
        const long value = header.number();
        if (value > maxval) throw CorruptHeader("PGM: pixel exceeds maxval");
        pixels(r, c) = static_cast<double>(value);
      }
  }
  return pixels;
}

void write_pgm(const std::filesystem::path& path, const DenseMatrix& pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << pixels.cols() << ' ' << pixels.rows() << "\n255\n";
  for (Eigen::Index r = 0; r < pixels.rows(); ++r)
    for (Eigen::Index c = 0; c < pixels.cols(); ++c) {
      const double v = std::clamp(std::round(pixels(r, c)), 0.0, 255.0);
      out.put(static_cast<char>(static_cast<unsigned char>(v)));
    }
  if (!out) throw IoError("failed writing " + path.string());
}

namespace {

// Two-pass mean / population variance in long double.
void standardize_block(Eigen::Ref<DenseMatrix> block) {
  const long double n = static_cast<long double>(block.size());
  long double sum = 0;
  for (Eigen::Index j = 0; j < block.cols(); ++j)
    for (Eigen::Index i = 0; i < block.rows(); ++i) sum += block(i, j);
  const long double mean = sum / n;
  long double ss = 0;
  for (Eigen::Index j = 0; j < block.cols(); ++j)
    for (Eigen::Index i = 0; i < block.rows(); ++i) {
      const long double d = block(i, j) - mean;
      ss += d * d;
    }
  const long double sd = std::sqrt(ss / n);
  if (!(sd > 0)) throw NormalizationDegenerate("image has zero variance");
  for (Eigen::Index j = 0; j < block.cols(); ++j)
    for (Eigen::Index i = 0; i < block.rows(); ++i)
      block(i, j) = static_cast<double>((block(i, j) - mean) / sd);
}

}  // namespace

DenseMatrix standardize(const DenseMatrix& pixels, Normalization mode) {
  DenseMatrix out = pixels;
  switch (mode) {
    case Normalization::none: break;
    case Normalization::global: standardize_block(out); break;
    case Normalization::per_column:
      for (Eigen::Index c = 0; c < out.cols(); ++c) standardize_block(out.col(c));
      break;
  }
  return out;
}

ObservationMatrix ingest_image(const std::filesystem::path& path, Normalization mode) {
  ObservationMatrix obs;
  obs.v = standardize(read_pgm(path), mode);
  obs.provenance = Provenance::image;
  obs.source = path.string();
  return obs;
}

}  // namespace vbsparse
