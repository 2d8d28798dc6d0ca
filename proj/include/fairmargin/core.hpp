#pragma once

// Numeric primitives shared by every module. All arithmetic is double.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace fairmargin {

using Vector = std::vector<double>;

/// Clamp margin applied to cosines so arccos and its derivative stay finite.
inline constexpr double kCosineEpsilon = 1e-7;

/// Norms below this are treated as zero by l2_normalize.
inline constexpr double kZeroNormThreshold = 1e-12;

/// Dense row-major matrix. Rows are the natural unit of access here: a
/// classifier head stores one class prototype per row, an encoder layer one
/// output unit per row.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

/// Returns v / ||v||. Throws ZeroVector when ||v|| < 1e-12.
Vector l2_normalize(std::span<const double> v);

/// In-place variant of l2_normalize; returns the norm before scaling.
double l2_normalize_inplace(std::span<double> v);

/// Dot product of two unit vectors clamped to [-1 + eps, 1 - eps].
/// Throws DimensionMismatch on unequal lengths.
double cosine(std::span<const double> u, std::span<const double> v);

/// Max-shifted softmax.
Vector softmax(std::span<const double> logits);

/// log(sum(exp(z))) computed with the max shift.
double log_sum_exp(std::span<const double> logits);

/// Seeded pseudo-random stream.
///
/// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Every derived quantity (uniform doubles, bounded integers,
/// Gaussian draws, permutations) is computed here rather than through the
/// implementation-defined <random> distributions, so a seed yields the same
/// stream on every platform and standard library.
///
///   uniform()   = (bits >> 11) * 2^-53, in [0, 1)
///   below(n)    = rejection sampling on the top of the 64-bit range
///   normal()    = Box-Muller, cosine branch only, no cached second draw
///   split(k)    = new stream seeded with splitmix64(seed ^ splitmix64(k + 1))
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Fisher-Yates permutation of [0, n).
  std::vector<std::size_t> permutation(std::size_t n);

  /// Independent child stream; the parent's state is not advanced.
  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace fairmargin
