#include "cbnn/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

#include "cbnn/error.hpp"
#include "cbnn/kernels.hpp"
#include "cbnn/rng.hpp"

namespace cbnn {

double median_seconds(const std::function<void()>& fn, int repetitions) {
  if (repetitions < 1) throw ConfigError("repetitions must be at least 1");
  fn();
  std::vector<double> t;
  t.reserve(repetitions);
  for (int r = 0; r < repetitions; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    t.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  const auto mid = t.size() / 2;
  return t.size() % 2 ? t[mid] : 0.5 * (t[mid - 1] + t[mid]);
}

namespace {

std::string dims_of(int m, int n, int k) {
  return std::to_string(m) + "x" + std::to_string(n) + "x" + std::to_string(k);
}

void check_dims(int m, int n, int k) {
  if (m < 1 || n < 1 || k < 1) throw ConfigError("benchmark dimensions must be positive");
}

std::vector<float> random_signs(std::size_t n, Rng& rng) {
  std::vector<float> v(n);
  for (auto& x : v) x = (rng.next_u64() >> 63) ? 1.0f : -1.0f;
  return v;
}

}  // namespace

BenchReport bench_gemm(int m, int n, int k, int repetitions, std::uint64_t seed) {
  check_dims(m, n, k);
  Rng rng(seed);
  const DenseTensor a({m, k}, random_signs(static_cast<std::size_t>(m) * k, rng));
  const DenseTensor bt({n, k}, random_signs(static_cast<std::size_t>(n) * k, rng));
  // Dense baseline reads B as (k x n), the natural layout for a row-major product.
  std::vector<float> b(static_cast<std::size_t>(k) * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) b[static_cast<std::size_t>(j) * n + i] = bt.at(i, j);
  const BitPackedMatrix pa = sign_binarize(a);
  const BitPackedMatrix pb = sign_binarize(bt);
  std::vector<float> c(static_cast<std::size_t>(m) * n);
  std::vector<std::int32_t> ci(c.size());

  BenchReport r;
  r.kernel = "binary_gemm";
  r.dims = dims_of(m, n, k);
  r.reference_seconds = median_seconds(
      [&] { kernels::gemm(false, false, m, n, k, a.values.data(), b.data(), c.data()); },
      repetitions);
  r.measured_seconds = median_seconds([&] { binary_gemm(pa, pb, ci); }, repetitions);
  r.speedup = r.reference_seconds / r.measured_seconds;
  return r;
}

BenchReport bench_self(int m, int n, int k, int repetitions, std::uint64_t seed) {
  check_dims(m, n, k);
  Rng rng(seed);
  const auto a = random_signs(static_cast<std::size_t>(m) * k, rng);
  const auto b = random_signs(static_cast<std::size_t>(k) * n, rng);
  std::vector<float> c(static_cast<std::size_t>(m) * n);
  auto run = [&] { kernels::gemm(false, false, m, n, k, a.data(), b.data(), c.data()); };
  BenchReport r;
  r.kernel = "dense_gemm_self";
  r.dims = dims_of(m, n, k);
  r.reference_seconds = median_seconds(run, repetitions);
  r.measured_seconds = median_seconds(run, repetitions);
  r.speedup = r.reference_seconds / r.measured_seconds;
  return r;
}

BenchReport bench_networks(const ArchitectureSpec& base, const ArchitectureSpec& compact,
                           int images, int repetitions, std::uint64_t seed) {
  if (images < 1) throw ConfigError("images must be at least 1");
  if (base.width != compact.width || base.height != compact.height ||
      base.base_channels != compact.base_channels)
    throw ShapeError("benchmarked networks must share an input shape");
  const InferenceModel mb(base, init_params(base, seed));
  const InferenceModel mc(compact, init_params(compact, seed));
  Rng rng(derive_key(seed, 0x494d47ULL));
  const std::uint32_t bound = std::max(base.magnitude_bound, compact.magnitude_bound);
  std::vector<PixelTensor> inputs;
  for (int i = 0; i < images; ++i) {
    PixelTensor img(base.width, base.height, base.base_channels, bound);
    for (auto& v : img.values) v = static_cast<std::uint16_t>(rng.below(bound + 1ULL));
    inputs.push_back(std::move(img));
  }
  float sink = 0.0f;
  auto run = [&](const InferenceModel& m) {
    for (const auto& img : inputs) sink += m.forward(img)[0];
  };
  BenchReport r;
  r.kernel = "network_inference";
  r.dims = base.name + "_vs_" + compact.name + "_x" + std::to_string(images);
  r.reference_seconds = median_seconds([&] { run(mb); }, repetitions) / images;
  r.measured_seconds = median_seconds([&] { run(mc); }, repetitions) / images;
  r.speedup = r.reference_seconds / r.measured_seconds;
  if (sink != sink) r.speedup = 0.0;  // keeps the forward passes observable
  return r;
}

std::string bench_csv(const std::vector<BenchReport>& reports) {
  std::ostringstream out;
  out << "kernel,dims,reference_s,measured_s,speedup\n";
  char buf[128];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, ",%.9f,%.9f,%.4f\n", r.reference_seconds, r.measured_seconds,
                  r.speedup);
    out << r.kernel << ',' << r.dims << buf;
  }
  return out.str();
}

}  // namespace cbnn
