#include "cbnn/tensor.hpp"

#include <bit>
#include <string>

#include "cbnn/error.hpp"
#include "cbnn/kernels.hpp"
#include "cbnn/parallel.hpp"

namespace cbnn {

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative tensor dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

DenseTensor::DenseTensor(std::vector<int> s, float fill)
    : shape(std::move(s)), values(element_count(shape), fill) {}

DenseTensor::DenseTensor(std::vector<int> s, std::vector<float> v)
    : shape(std::move(s)), values(std::move(v)) {
  if (values.size() != element_count(shape))
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match the product of the shape");
}

int DenseTensor::rows() const {
  if (shape.empty()) return 1;
  return shape.size() == 1 ? 1 : shape[0];
}

int DenseTensor::cols() const {
  if (shape.empty()) return 1;
  if (shape.size() == 1) return shape[0];
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) n *= static_cast<std::size_t>(shape[i]);
  return static_cast<int>(n);
}

BitPackedMatrix::BitPackedMatrix(int rows, int cols)
    : rows_(rows), cols_(cols), words_per_row_((cols + 63) / 64),
      words_(static_cast<std::size_t>(rows) * words_per_row_, 0) {
  if (rows < 0 || cols < 0) throw ShapeError("negative matrix dimension");
}

void BitPackedMatrix::set(int r, int c, bool positive) {
  auto& w = row(r)[c >> 6];
  const std::uint64_t bit = std::uint64_t{1} << (c & 63);
  w = positive ? (w | bit) : (w & ~bit);
}

BitPackedMatrix sign_binarize(const DenseTensor& x) {
  const int rows = x.rows();
  const int cols = x.cols();
  BitPackedMatrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    auto dst = m.row(r);
    const float* src = x.values.data() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c)
      if (src[c] >= 0.0f) dst[c >> 6] |= std::uint64_t{1} << (c & 63);
  }
  return m;
}

DenseTensor unpack(const BitPackedMatrix& m) {
  DenseTensor out({m.rows(), m.cols()});
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) out.at(r, c) = static_cast<float>(m.value(r, c));
  return out;
}

int xnor_popcount_dot(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b, int n) {
  if (a.size() != b.size() || static_cast<int>(a.size()) != (n + 63) / 64)
    throw ShapeError("xnor_popcount_dot operands have mismatched lengths");
  // Padding bits are zero in both rows, so they never disagree; counting
  // disagreements over whole words equals n - popcount(XNOR) over logical bits.
  int disagree = 0;
  for (std::size_t w = 0; w < a.size(); ++w) disagree += std::popcount(a[w] ^ b[w]);
  return n - 2 * disagree;
}

namespace {

void binary_gemm_rows(const BitPackedMatrix& a, const BitPackedMatrix& b, int i0, int i1,
                      std::int32_t* out) {
  const int words = a.words_per_row();
  const int n = a.cols();
  const int nb = b.rows();
  const std::uint64_t* bw = b.words().data();
  for (int i = i0; i < i1; ++i) {
    const std::uint64_t* ar = a.words().data() + static_cast<std::size_t>(i) * words;
    std::int32_t* oi = out + static_cast<std::size_t>(i) * nb;
    int j = 0;
    for (; j + 4 <= nb; j += 4) {
      const std::uint64_t* b0 = bw + static_cast<std::size_t>(j) * words;
      const std::uint64_t* b1 = b0 + words;
      const std::uint64_t* b2 = b1 + words;
      const std::uint64_t* b3 = b2 + words;
      int d0 = 0, d1 = 0, d2 = 0, d3 = 0;
      for (int w = 0; w < words; ++w) {
        const std::uint64_t av = ar[w];
        d0 += std::popcount(av ^ b0[w]);
        d1 += std::popcount(av ^ b1[w]);
        d2 += std::popcount(av ^ b2[w]);
        d3 += std::popcount(av ^ b3[w]);
      }
      oi[j] = n - 2 * d0;
      oi[j + 1] = n - 2 * d1;
      oi[j + 2] = n - 2 * d2;
      oi[j + 3] = n - 2 * d3;
    }
    for (; j < nb; ++j) {
      const std::uint64_t* bj = bw + static_cast<std::size_t>(j) * words;
      int d = 0;
      for (int w = 0; w < words; ++w) d += std::popcount(ar[w] ^ bj[w]);
      oi[j] = n - 2 * d;
    }
  }
}

}  // namespace

void binary_gemm(const BitPackedMatrix& a, const BitPackedMatrix& b, std::span<std::int32_t> out) {
  if (a.cols() != b.cols())
    throw ShapeError("binary_gemm inner dimensions differ: " + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.cols()));
  if (out.size() != static_cast<std::size_t>(a.rows()) * b.rows())
    throw ShapeError("binary_gemm output buffer has the wrong size");
  constexpr int rows_per_task = 8;
  const auto tasks = static_cast<std::size_t>((a.rows() + rows_per_task - 1) / rows_per_task);
  parallel_for(tasks, [&](std::size_t t0, std::size_t t1) {
    binary_gemm_rows(a, b, static_cast<int>(t0) * rows_per_task,
                     std::min(a.rows(), static_cast<int>(t1) * rows_per_task), out.data());
  });
}

DenseTensor binary_gemm(const BitPackedMatrix& a, const BitPackedMatrix& b) {
  std::vector<std::int32_t> raw(static_cast<std::size_t>(a.rows()) * b.rows());
  binary_gemm(a, b, raw);
  DenseTensor out({a.rows(), b.rows()});
  for (std::size_t i = 0; i < raw.size(); ++i) out.values[i] = static_cast<float>(raw[i]);
  return out;
}

DenseTensor dense_gemm(const DenseTensor& a, const DenseTensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("dense_gemm expects rank-2 operands");
  if (a.shape[1] != b.shape[0])
    throw ShapeError("dense_gemm inner dimensions differ: " + std::to_string(a.shape[1]) + " vs " +
                     std::to_string(b.shape[0]));
  DenseTensor c({a.shape[0], b.shape[1]});
  kernels::gemm(false, false, a.shape[0], b.shape[1], a.shape[1], a.values.data(),
                b.values.data(), c.values.data());
  return c;
}

int ConvGeometry::output_size(int input_size) const {
  if (kernel <= 0 || stride <= 0 || padding < 0) throw ShapeError("invalid convolution geometry");
  const int padded = input_size + 2 * padding;
  if (kernel > padded)
    throw ShapeError("kernel " + std::to_string(kernel) + " larger than padded input " +
                     std::to_string(padded));
  return (padded - kernel) / stride + 1;
}

DenseTensor im2col(const DenseTensor& chw, const ConvGeometry& g, float pad_value) {
  if (chw.rank() != 3) throw ShapeError("im2col expects a (C, H, W) tensor");
  const int c = chw.shape[0], h = chw.shape[1], w = chw.shape[2];
  const int oh = g.output_size(h), ow = g.output_size(w);
  DenseTensor out({oh * ow, c * g.kernel * g.kernel});
  kernels::im2col(chw.values.data(), c, h, w, g.kernel, g.stride, g.padding, pad_value,
                  out.values.data());
  return out;
}

BitPackedMatrix im2col(const BitSlicedTensor& input, const ConvGeometry& g) {
  input.validate();
  const int c = input.channels(), h = input.height, w = input.width;
  const int oh = g.output_size(h), ow = g.output_size(w);
  const int k = g.kernel;
  BitPackedMatrix out(oh * ow, c * k * k);
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      const int r = oy * ow + ox;
      auto row = out.row(r);
      int col = 0;
      for (int ch = 0; ch < c; ++ch)
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx, ++col) {
            const int y = oy * g.stride + ky - g.padding;
            const int x = ox * g.stride + kx - g.padding;
            if (y < 0 || y >= h || x < 0 || x >= w) continue;
            if (input.at(y, x, ch)) row[col >> 6] |= std::uint64_t{1} << (col & 63);
          }
    }
  return out;
}

}  // namespace cbnn
