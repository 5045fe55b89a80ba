#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cbnn/bitslice.hpp"

namespace cbnn {

/// Row-major real tensor.
struct DenseTensor {
  std::vector<int> shape;
  std::vector<float> values;

  DenseTensor() = default;
  explicit DenseTensor(std::vector<int> shape, float fill = 0.0f);
  DenseTensor(std::vector<int> shape, std::vector<float> values);

  std::size_t size() const { return values.size(); }
  int rank() const { return static_cast<int>(shape.size()); }

  // 2-D view helpers; rank-1 tensors read as a single row.
  int rows() const;
  int cols() const;
  float at(int r, int c) const { return values[static_cast<std::size_t>(r) * cols() + c]; }
  float& at(int r, int c) { return values[static_cast<std::size_t>(r) * cols() + c]; }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;
};

std::size_t element_count(const std::vector<int>& shape);

/// {-1,+1} matrix, one bit per element. Bit 1 encodes +1, bit 0 encodes -1.
/// Padding bits past `cols` in each row are always zero.
class BitPackedMatrix {
 public:
  BitPackedMatrix() = default;
  BitPackedMatrix(int rows, int cols);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int words_per_row() const { return words_per_row_; }

  std::span<const std::uint64_t> row(int r) const {
    return {words_.data() + static_cast<std::size_t>(r) * words_per_row_,
            static_cast<std::size_t>(words_per_row_)};
  }
  std::span<std::uint64_t> row(int r) {
    return {words_.data() + static_cast<std::size_t>(r) * words_per_row_,
            static_cast<std::size_t>(words_per_row_)};
  }

  bool get(int r, int c) const { return (row(r)[c >> 6] >> (c & 63)) & 1u; }
  void set(int r, int c, bool positive);
  int value(int r, int c) const { return get(r, c) ? 1 : -1; }

  const std::vector<std::uint64_t>& words() const { return words_; }
  std::vector<std::uint64_t>& words() { return words_; }

  friend bool operator==(const BitPackedMatrix&, const BitPackedMatrix&) = default;

 private:
  int rows_ = 0;
  int cols_ = 0;
  int words_per_row_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Elementwise sign with sign(0) = +1. Rank >= 2 tensors map to
/// (shape[0], product of remaining dims); rank-1 to a single row.
BitPackedMatrix sign_binarize(const DenseTensor& x);

/// Unpacks to a rank-2 tensor of +-1 values.
DenseTensor unpack(const BitPackedMatrix& m);

/// Sum of a_i * b_i over n logical +-1 elements, computed as
/// 2 * popcount(XNOR(a, b)) - n. Rows must have equal logical length.
int xnor_popcount_dot(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, int n);

/// Entry (i, j) = xnor_popcount_dot(A_i, B_j); B holds the transposed operand.
DenseTensor binary_gemm(const BitPackedMatrix& a, const BitPackedMatrix& b);

/// Integer form of binary_gemm into a caller-owned (a.rows x b.rows) buffer.
void binary_gemm(const BitPackedMatrix& a, const BitPackedMatrix& b, std::span<std::int32_t> out);

/// Standard product of (m x k) and (k x n) row-major matrices.
DenseTensor dense_gemm(const DenseTensor& a, const DenseTensor& b);

struct ConvGeometry {
  int kernel = 3;
  int stride = 1;
  int padding = 1;

  int output_size(int input_size) const;
};

/// Lowers a (C, H, W) tensor to a (positions x C*k*k) matrix. Each row is one
/// receptive field flattened channel-major (c, ky, kx); out-of-image taps take
/// pad_value.
DenseTensor im2col(const DenseTensor& chw, const ConvGeometry& geometry, float pad_value = 0.0f);

/// Bit-sliced variant: rows are packed +-1 receptive fields in the same
/// (c, ky, kx) order; padding taps are -1.
BitPackedMatrix im2col(const BitSlicedTensor& input, const ConvGeometry& geometry);

}  // namespace cbnn
