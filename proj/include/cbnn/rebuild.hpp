#pragma once

// Compact network construction once the prunable slices are known.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cbnn/data.hpp"
#include "cbnn/network.hpp"
#include "cbnn/training.hpp"

namespace cbnn {

/// Drops the given slices from a bit-sliced architecture and scales every
/// hidden conv/dense depth by kept/N. The class layer, layer count and
/// first-layer precision are preserved. Strict mode rejects depths that do
/// not scale to an integer; otherwise they round down to a multiple of 8
/// (never below 8).
ArchitectureSpec shrink_arch(const ArchitectureSpec& arch, std::span<const int> pruned,
                             bool strict = true);

/// Prefix form: prunes slices 1..P of an N-slice architecture.
ArchitectureSpec shrink_arch(const ArchitectureSpec& arch, int n_slices, int p, bool strict = true);

struct CompressionReport {
  std::string base_name;
  std::string compact_name;
  CostReport base_cost;
  CostReport compact_cost;
  double size_ratio = 1.0;  // base size_bits / compact size_bits
  double gops_ratio = 1.0;  // base macs / compact macs
  double base_err = 0.0;
  double compact_err = 0.0;
  double delta_err = 0.0;  // compact_err - base_err
};

CompressionReport compression_report(const ArchitectureSpec& base, const ArchitectureSpec& compact,
                                     double base_err, double compact_err);

/// Ratio of two values after rounding each to `digits` decimals, the way a
/// table computed from printed figures would.
double printed_ratio(double numerator, double denominator, int digits = 2);

/// Two rows (base, compact): arch,err,delta_err,size_mb,size_ratio,gops,gops_ratio.
std::string compression_csv(const CompressionReport& report);

struct RebuildResult {
  ArchitectureSpec compact_arch;
  TrainResult training;
  CompressionReport report;
};

/// Shrinks base_model's architecture by the prunable set, trains the compact
/// network from scratch on train_set with a seed derived from config.seed,
/// and compares both models on test_set.
RebuildResult rebuild_and_retrain(const InferenceModel& base_model, std::span<const int> prunable,
                                  const LabeledDataset& train_set, const LabeledDataset& test_set,
                                  const TrainConfig& config, bool strict = true,
                                  const EpochCallback& on_epoch = {});

/// Seed used for the compact network's training run.
std::uint64_t rebuild_seed(std::uint64_t seed);

}  // namespace cbnn
