#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cbnn/network.hpp"

namespace cbnn {

struct BenchReport {
  std::string kernel;          // kernel id
  std::string dims;            // e.g. "512x512x512"
  double reference_seconds = 0.0;  // dense baseline, median per op
  double measured_seconds = 0.0;   // kernel under test, median per op
  double speedup = 0.0;            // reference_seconds / measured_seconds
};

/// Median wall time of fn over `repetitions` runs after one untimed warm-up.
double median_seconds(const std::function<void()>& fn, int repetitions);

/// binary_gemm against dense float GEMM on the same logical (m x k) * (k x n)
/// problem with random +-1 operands.
BenchReport bench_gemm(int m, int n, int k, int repetitions = 10, std::uint64_t seed = 1);

/// Dense GEMM timed against itself; speedup should sit near 1.
BenchReport bench_self(int m, int n, int k, int repetitions = 10, std::uint64_t seed = 1);

/// Single-image inference of `base` versus `compact` on random inputs
/// (random parameters). speedup = base time / compact time.
BenchReport bench_networks(const ArchitectureSpec& base, const ArchitectureSpec& compact,
                           int images = 8, int repetitions = 10, std::uint64_t seed = 1);

/// kernel,dims,reference_s,measured_s,speedup rows.
std::string bench_csv(const std::vector<BenchReport>& reports);

}  // namespace cbnn
