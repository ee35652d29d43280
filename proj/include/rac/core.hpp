#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rac {

// Dense row-major matrix of doubles. All heavy math in this library runs in
// double precision; float32 appears only in the on-disk formats.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, value) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  const double* row(std::size_t r) const { return data_.data() + r * cols_; }
  double* row(std::size_t r) { return data_.data() + r * cols_; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Deterministic random source. mt19937_64 is fully specified by the standard;
// the conversions below avoid std::uniform_*_distribution, whose output is
// implementation-defined, so streams reproduce bit-exactly everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive on both ends.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (hi <= lo) return lo;
    const double span = static_cast<double>(hi - lo) + 1.0;
    auto offset = static_cast<std::int64_t>(uniform() * span);
    if (offset > hi - lo) offset = hi - lo;
    return lo + offset;
  }

  std::size_t index(std::size_t count) {
    return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(count) - 1));
  }

  // Box-Muller, one cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log1p(-u1));
    const double angle = 2.0 * pi() * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  static constexpr double pi() { return 3.14159265358979323846; }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

namespace io {

inline void write_bytes(std::ostream& out, const void* data, std::size_t count) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(count));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  write_bytes(out, b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(out, b, 8);
}

inline void write_f32(std::ostream& out, float v) {
  write_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

// Tracks the byte offset so parse errors can point at the exact position.
class ByteReader {
 public:
  ByteReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  std::uint64_t offset() const { return offset_; }

  void read_bytes(void* dst, std::size_t count, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(count));
    if (static_cast<std::size_t>(in_.gcount()) != count) {
      throw std::runtime_error(source_ + ": truncated file while reading " + what +
                               " at byte offset " + std::to_string(offset_));
    }
    offset_ += count;
  }

  std::uint32_t read_u32(const char* what) {
    unsigned char b[4];
    read_bytes(b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  }

  std::uint64_t read_u64(const char* what) {
    unsigned char b[8];
    read_bytes(b, 8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  float read_f32(const char* what) { return std::bit_cast<float>(read_u32(what)); }
  double read_f64(const char* what) { return std::bit_cast<double>(read_u64(what)); }

  bool at_eof() {
    in_.peek();
    return in_.eof();
  }

  const std::string& source() const { return source_; }

  [[noreturn]] void fail(const std::string& message, std::uint64_t at) const {
    throw std::runtime_error(source_ + ": " + message + " at byte offset " + std::to_string(at));
  }

 private:
  std::istream& in_;
  std::string source_;
  std::uint64_t offset_ = 0;
};

// Writes through a temp file and renames into place, so a failure never
// leaves a partial output behind.
template <typename Fn>
void atomic_write_file(const std::filesystem::path& path, Fn&& fn) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  try {
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
      fn(out);
      out.flush();
      if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    std::filesystem::remove(tmp, ec);
    throw;
  }
}

}  // namespace io
}  // namespace rac
