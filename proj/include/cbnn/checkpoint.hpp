#pragma once

// Checkpoint file, little-endian throughout:
//
//   "CBNN"  u32 version
//   string  architecture text (u32 length + bytes, see arch_text)
//   u64 seed, u32 epochs, f64 final_err
//   per layer, in order:
//     conv/dense, binary: ceil(count/64) u64 words, bit i = (w_i >= 0), LSB first
//     conv/dense, full:   count f32 values
//     batchnorm:          scale, shift, mean, variance as f32 arrays
//
// Weights are ordered (out, in, kh, kw). Binary layers keep only their signs,
// so a loaded checkpoint reproduces inference exactly but holds +-1 in place
// of the training-time reference weights.

#include <cstdint>
#include <iosfwd>
#include <string>

#include "cbnn/network.hpp"

namespace cbnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;
  double final_err = 0.0;

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  ArchitectureSpec arch;
  ParameterStore params;
  CheckpointMeta meta;
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Parameters as they survive a save/load cycle (binary weights -> +-1).
ParameterStore checkpoint_params(const ArchitectureSpec& arch, const ParameterStore& params);

}  // namespace cbnn
