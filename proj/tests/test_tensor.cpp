#include <doctest.h>

#include <cmath>
#include <vector>

#include "cbnn/error.hpp"
#include "cbnn/kernels.hpp"
#include "cbnn/parallel.hpp"
#include "cbnn/rng.hpp"
#include "cbnn/tensor.hpp"
#include "oracles.hpp"

using namespace cbnn;

namespace {

std::vector<int> random_pm1(std::size_t n, Rng& rng) {
  std::vector<int> v(n);
  for (auto& x : v) x = (rng.next_u64() & 1) ? 1 : -1;
  return v;
}

DenseTensor as_tensor(const std::vector<int>& v, int rows, int cols) {
  return DenseTensor({rows, cols}, std::vector<float>(v.begin(), v.end()));
}

}  // namespace

TEST_SUITE("tensor") {

TEST_CASE("sign_binarize maps zero to +1 and keeps padding bits clear") {
  DenseTensor x({2, 70});
  x.at(0, 0) = 0.0f;
  x.at(0, 1) = -0.0f;
  x.at(0, 2) = -3.0f;
  x.at(1, 69) = -1e-30f;
  const auto m = sign_binarize(x);
  CHECK(m.words_per_row() == 2);
  CHECK(m.value(0, 0) == 1);
  CHECK(m.value(0, 1) == 1);
  CHECK(m.value(0, 2) == -1);
  CHECK(m.value(1, 69) == -1);
  for (int r = 0; r < 2; ++r) CHECK((m.row(r)[1] >> 6) == 0);
  CHECK(unpack(m).at(0, 2) == -1.0f);
}

TEST_CASE("xnor_popcount_dot equals the +-1 inner product") {
  Rng rng(1);
  for (int n = 1; n <= 300; ++n) {
    const auto a = random_pm1(n, rng), b = random_pm1(n, rng);
    const auto pa = sign_binarize(as_tensor(a, 1, n)), pb = sign_binarize(as_tensor(b, 1, n));
    int ref = 0;
    for (int i = 0; i < n; ++i) ref += a[i] * b[i];
    CHECK(xnor_popcount_dot(pa.row(0), pb.row(0), n) == ref);
  }
  BitPackedMatrix a(1, 10), b(1, 200);
  CHECK_THROWS_AS(xnor_popcount_dot(a.row(0), b.row(0), 10), ShapeError);
}

TEST_CASE("binary_gemm matches the dense +-1 oracle") {
  Rng rng(2);
  for (int t = 0; t < 150; ++t) {
    const int m = 1 + static_cast<int>(rng.below(40));
    const int n = 1 + static_cast<int>(rng.below(40));
    const int k = 1 + static_cast<int>(rng.below(200));
    const auto a = random_pm1(static_cast<std::size_t>(m) * k, rng);
    const auto b = random_pm1(static_cast<std::size_t>(n) * k, rng);
    const auto ref = oracle::gemm_bt(a, b, m, n, k);
    const auto got = binary_gemm(sign_binarize(as_tensor(a, m, k)), sign_binarize(as_tensor(b, n, k)));
    REQUIRE(got.rows() == m);
    REQUIRE(got.cols() == n);
    for (int i = 0; i < m * n; ++i) CHECK(got.values[i] == static_cast<float>(ref[i]));
  }
}

TEST_CASE("binary_gemm rejects mismatched inner dimensions") {
  BitPackedMatrix a(2, 10), b(3, 11);
  CHECK_THROWS_AS(binary_gemm(a, b), ShapeError);
}

TEST_CASE("binary_gemm result does not depend on the thread count") {
  Rng rng(3);
  const auto a = sign_binarize(as_tensor(random_pm1(97 * 333, rng), 97, 333));
  const auto b = sign_binarize(as_tensor(random_pm1(45 * 333, rng), 45, 333));
  set_thread_count(1);
  const auto one = binary_gemm(a, b);
  set_thread_count(4);
  const auto four = binary_gemm(a, b);
  set_thread_count(1);
  CHECK(one == four);
}

TEST_CASE("dense_gemm matches the naive product") {
  Rng rng(4);
  for (int t = 0; t < 40; ++t) {
    const int m = 1 + static_cast<int>(rng.below(50));
    const int n = 1 + static_cast<int>(rng.below(50));
    const int k = 1 + static_cast<int>(rng.below(300));
    DenseTensor a({m, k}), b({k, n});
    std::vector<double> ad(a.size()), bd(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ad[i] = a.values[i] = static_cast<float>(rng.uniform(-1, 1));
    for (std::size_t i = 0; i < b.size(); ++i) bd[i] = b.values[i] = static_cast<float>(rng.uniform(-1, 1));
    const auto c = dense_gemm(a, b);
    const auto ref = oracle::gemm(ad, bd, m, n, k);
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(c.values[i] == doctest::Approx(ref[i]).epsilon(1e-4));
  }
}

TEST_CASE("kernels::gemm handles every transpose combination and accumulation") {
  Rng rng(5);
  for (int t = 0; t < 40; ++t) {
    const int m = 1 + static_cast<int>(rng.below(37));
    const int n = 1 + static_cast<int>(rng.below(37));
    const int k = 1 + static_cast<int>(rng.below(300));
    std::vector<double> a(static_cast<std::size_t>(m) * k), b(static_cast<std::size_t>(k) * n);
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    const auto ref = oracle::gemm(a, b, m, n, k);
    std::vector<double> at(a.size()), bt(b.size());
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
    for (int p = 0; p < k; ++p)
      for (int j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
    for (int ta = 0; ta < 2; ++ta)
      for (int tb = 0; tb < 2; ++tb) {
        std::vector<double> c(static_cast<std::size_t>(m) * n, 1.0);
        kernels::gemm<double>(ta, tb, m, n, k, ta ? at.data() : a.data(), tb ? bt.data() : b.data(),
                              c.data(), true);
        for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(ref[i] + 1.0).epsilon(1e-12));
      }
  }
}

TEST_CASE("im2col convolution equals direct convolution") {
  Rng rng(6);
  for (int t = 0; t < 60; ++t) {
    const int c = 1 + static_cast<int>(rng.below(5));
    const int h = 1 + static_cast<int>(rng.below(9));
    const int w = 1 + static_cast<int>(rng.below(9));
    const int o = 1 + static_cast<int>(rng.below(6));
    const int k = 1 + 2 * static_cast<int>(rng.below(2));
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int pad = static_cast<int>(rng.below(2));
    if (h + 2 * pad < k || w + 2 * pad < k) continue;
    const float pad_value = rng.below(2) ? -1.0f : 0.0f;
    DenseTensor x({c, h, w});
    for (auto& v : x.values) v = static_cast<float>(static_cast<int>(rng.below(7)) - 3);
    std::vector<float> wt(static_cast<std::size_t>(o) * c * k * k);
    for (auto& v : wt) v = static_cast<float>(static_cast<int>(rng.below(5)) - 2);
    const ConvGeometry g{k, stride, pad};
    const auto cols = im2col(x, g, pad_value);
    const int oh = g.output_size(h), ow = g.output_size(w);
    REQUIRE(cols.rows() == oh * ow);
    const auto ref = oracle::conv2d<float>(x.values, c, h, w, wt, o, k, stride, pad, pad_value);
    for (int oc = 0; oc < o; ++oc)
      for (int pos = 0; pos < oh * ow; ++pos) {
        float s = 0;
        for (int j = 0; j < cols.cols(); ++j) s += cols.at(pos, j) * wt[oc * cols.cols() + j];
        CHECK(s == ref[oc * oh * ow + pos]);  // small integers: exact
      }
  }
}

TEST_CASE("im2col_t is the transpose of im2col") {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    const int c = 1 + static_cast<int>(rng.below(4)), h = 2 + static_cast<int>(rng.below(7));
    const int w = 2 + static_cast<int>(rng.below(7)), k = 1 + 2 * static_cast<int>(rng.below(2));
    const int stride = 1 + static_cast<int>(rng.below(2)), pad = static_cast<int>(rng.below(2));
    const int oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
    const int positions = oh * ow, len = c * k * k;
    std::vector<float> x(static_cast<std::size_t>(c) * h * w);
    for (auto& v : x) v = static_cast<float>(rng.uniform(-1, 1));
    std::vector<float> rows(static_cast<std::size_t>(positions) * len), cols(rows.size());
    kernels::im2col(x.data(), c, h, w, k, stride, pad, -1.0f, rows.data());
    kernels::im2col_t(x.data(), c, h, w, k, stride, pad, -1.0f, cols.data());
    int mismatches = 0;
    for (int p = 0; p < positions; ++p)
      for (int j = 0; j < len; ++j)
        mismatches += rows[static_cast<std::size_t>(p) * len + j] != cols[static_cast<std::size_t>(j) * positions + p];
    CHECK(mismatches == 0);
  }
}

TEST_CASE("col2im_add is the adjoint of im2col") {
  Rng rng(7);
  for (int t = 0; t < 30; ++t) {
    const int c = 1 + static_cast<int>(rng.below(4)), h = 2 + static_cast<int>(rng.below(6));
    const int w = 2 + static_cast<int>(rng.below(6)), k = 3, pad = 1, stride = 1;
    const int positions = h * w, len = c * k * k;
    std::vector<double> x(static_cast<std::size_t>(c) * h * w), y(static_cast<std::size_t>(positions) * len);
    for (auto& v : x) v = rng.uniform(-1, 1);
    for (auto& v : y) v = rng.uniform(-1, 1);
    std::vector<double> cols(y.size()), back(x.size(), 0.0);
    kernels::im2col<double>(x.data(), c, h, w, k, stride, pad, 0.0, cols.data());
    kernels::col2im_add<double>(y.data(), c, h, w, k, stride, pad, back.data());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += cols[i] * y[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * back[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("bit-sliced im2col agrees with the dense lowering padded with -1") {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    const int w = 1 + static_cast<int>(rng.below(6)), h = 1 + static_cast<int>(rng.below(6));
    const auto img = oracle::random_image(w, h, 3, 255, rng);
    const auto bs = int2b(img);
    const ConvGeometry g{3, 1, 1};
    const auto packed = im2col(bs, g);
    DenseTensor chw({bs.channels(), h, w});
    for (int ch = 0; ch < bs.channels(); ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          chw.values[(static_cast<std::size_t>(ch) * h + y) * w + x] = bs.at(y, x, ch) ? 1.0f : -1.0f;
    CHECK(unpack(packed) == im2col(chw, g, -1.0f));
  }
}

TEST_CASE("conv geometry rejects kernels larger than the padded input") {
  const ConvGeometry g{5, 1, 0};
  CHECK(g.output_size(5) == 1);
  CHECK_THROWS_AS(g.output_size(4), ShapeError);
  CHECK(ConvGeometry{3, 2, 1}.output_size(8) == 4);
}

}  // TEST_SUITE

TEST_SUITE("parallel") {

TEST_CASE("parallel_for visits each index once for any thread count") {
  for (int threads : {1, 2, 3, 8}) {
    set_thread_count(threads);
    for (std::size_t n : {0u, 1u, 5u, 64u, 1001u}) {
      std::vector<int> hits(n, 0);
      parallel_for(n, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) ++hits[i];
      });
      for (int h : hits) CHECK(h == 1);
    }
  }
  set_thread_count(1);
}

TEST_CASE("parallel_for propagates worker exceptions") {
  set_thread_count(3);
  CHECK_THROWS_AS(parallel_for(100,
                               [](std::size_t b, std::size_t) {
                                 if (b > 0) throw ShapeError("boom");
                               }),
                  ShapeError);
  set_thread_count(1);
}

TEST_CASE("nested parallel_for runs inline") {
  set_thread_count(4);
  std::vector<int> hits(64, 0);
  parallel_for(8, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i)
      parallel_for(8, [&](std::size_t b2, std::size_t e2) {
        for (std::size_t j = b2; j < e2; ++j) ++hits[i * 8 + j];
      });
  });
  for (int h : hits) CHECK(h == 1);
  set_thread_count(1);
}

}  // TEST_SUITE
