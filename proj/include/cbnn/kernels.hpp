#pragma once

// Scalar-generic building blocks shared by inference and training. Training
// instantiates them in float; gradient checks instantiate them in double.

#include <algorithm>
#include <cstddef>
#include <vector>

#include "cbnn/parallel.hpp"

namespace cbnn::kernels {

namespace detail {

// C[m x n] += A[m x k] * B[k x n], all row-major and contiguous.
template <typename T>
void gemm_nn_block(int m, int n, int k, const T* a, const T* b, T* c) {
  constexpr int kc = 256;
  constexpr int nc = 512;
  for (int p0 = 0; p0 < k; p0 += kc) {
    const int pe = std::min(k, p0 + kc);
    for (int j0 = 0; j0 < n; j0 += nc) {
      const int je = std::min(n, j0 + nc);
      const int width = je - j0;
      int i = 0;
      for (; i + 4 <= m; i += 4) {
        T* c0 = c + static_cast<std::size_t>(i) * n + j0;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        for (int p = p0; p < pe; ++p) {
          const T* bp = b + static_cast<std::size_t>(p) * n + j0;
          const T a0 = a[static_cast<std::size_t>(i) * k + p];
          const T a1 = a[static_cast<std::size_t>(i + 1) * k + p];
          const T a2 = a[static_cast<std::size_t>(i + 2) * k + p];
          const T a3 = a[static_cast<std::size_t>(i + 3) * k + p];
#pragma GCC ivdep
          for (int j = 0; j < width; ++j) {
            const T bv = bp[j];
            c0[j] += a0 * bv;
            c1[j] += a1 * bv;
            c2[j] += a2 * bv;
            c3[j] += a3 * bv;
          }
        }
      }
      for (; i < m; ++i) {
        T* ci = c + static_cast<std::size_t>(i) * n + j0;
        for (int p = p0; p < pe; ++p) {
          const T* bp = b + static_cast<std::size_t>(p) * n + j0;
          const T ai = a[static_cast<std::size_t>(i) * k + p];
#pragma GCC ivdep
          for (int j = 0; j < width; ++j) ci[j] += ai * bp[j];
        }
      }
    }
  }
}

template <typename T>
std::vector<T> transpose(const T* src, int rows, int cols) {
  std::vector<T> out(static_cast<std::size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c)
      out[static_cast<std::size_t>(c) * rows + r] = src[static_cast<std::size_t>(r) * cols + c];
  return out;
}

}  // namespace detail

/// C (m x n) = op(A) * op(B) (+ C when accumulate). op(A) is m x k: A is
/// stored (m x k), or (k x m) when trans_a. op(B) is k x n: B is stored
/// (k x n), or (n x k) when trans_b. Rows of C are split across workers, so
/// results do not depend on the thread count.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate = false) {
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, T(0));
  if (m == 0 || n == 0 || k == 0) return;
  std::vector<T> at, bt;
  if (trans_a) {
    at = detail::transpose(a, k, m);
    a = at.data();
  }
  if (trans_b) {
    bt = detail::transpose(b, n, k);
    b = bt.data();
  }
  constexpr int rows_per_task = 16;
  const std::size_t tasks = static_cast<std::size_t>((m + rows_per_task - 1) / rows_per_task);
  parallel_for(tasks, [&](std::size_t t0, std::size_t t1) {
    const int i0 = static_cast<int>(t0) * rows_per_task;
    const int i1 = std::min(m, static_cast<int>(t1) * rows_per_task);
    detail::gemm_nn_block(i1 - i0, n, k, a + static_cast<std::size_t>(i0) * k, b,
                          c + static_cast<std::size_t>(i0) * n);
  });
}

/// (C, H, W) -> (positions x C*k*k), rows flattened (c, ky, kx).
template <typename T>
void im2col(const T* chw, int channels, int height, int width, int kernel, int stride,
            int padding, T pad_value, T* out) {
  const int oh = (height + 2 * padding - kernel) / stride + 1;
  const int ow = (width + 2 * padding - kernel) / stride + 1;
  const int row_len = channels * kernel * kernel;
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      T* row = out + (static_cast<std::size_t>(oy) * ow + ox) * row_len;
      for (int c = 0; c < channels; ++c)
        for (int ky = 0; ky < kernel; ++ky) {
          const int y = oy * stride + ky - padding;
          for (int kx = 0; kx < kernel; ++kx) {
            const int x = ox * stride + kx - padding;
            *row++ = (y < 0 || y >= height || x < 0 || x >= width)
                         ? pad_value
                         : chw[(static_cast<std::size_t>(c) * height + y) * width + x];
          }
        }
    }
}

/// Transposed lowering: (C, H, W) -> (C*k*k x positions), so a conv is a
/// plain gemm with the weights on the left. Skips the transpose in gemm.
template <typename T>
void im2col_t(const T* chw, int channels, int height, int width, int kernel, int stride,
              int padding, T pad_value, T* out) {
  const int oh = (height + 2 * padding - kernel) / stride + 1;
  const int ow = (width + 2 * padding - kernel) / stride + 1;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < kernel; ++ky)
      for (int kx = 0; kx < kernel; ++kx)
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * stride + ky - padding;
          const bool row_out = y < 0 || y >= height;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox * stride + kx - padding;
            *out++ = (row_out || x < 0 || x >= width)
                         ? pad_value
                         : chw[(static_cast<std::size_t>(c) * height + y) * width + x];
          }
        }
}

/// Adjoint of im2col: scatters column gradients back, dropping padding taps.
template <typename T>
void col2im_add(const T* cols, int channels, int height, int width, int kernel, int stride,
                int padding, T* chw) {
  const int oh = (height + 2 * padding - kernel) / stride + 1;
  const int ow = (width + 2 * padding - kernel) / stride + 1;
  const int row_len = channels * kernel * kernel;
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox) {
      const T* row = cols + (static_cast<std::size_t>(oy) * ow + ox) * row_len;
      for (int c = 0; c < channels; ++c)
        for (int ky = 0; ky < kernel; ++ky) {
          const int y = oy * stride + ky - padding;
          for (int kx = 0; kx < kernel; ++kx, ++row) {
            const int x = ox * stride + kx - padding;
            if (y < 0 || y >= height || x < 0 || x >= width) continue;
            chw[(static_cast<std::size_t>(c) * height + y) * width + x] += *row;
          }
        }
    }
}

}  // namespace cbnn::kernels
