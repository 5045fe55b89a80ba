#pragma once

// Bit-sliced input representation.
//
// An integer image with values in [0, A] is expanded into N = ceil(log2(A+1))
// binary planes per channel. Slice n (1-based) holds the n-th least significant
// bit. Channel c, slice n of the expanded tensor lives at channel index
// c * bits_per_channel + (position of n among the surviving slices).

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace cbnn {

/// Raw non-negative integer image, row-major (H, W, C).
struct PixelTensor {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::uint32_t magnitude_bound = 255;
  std::vector<std::uint16_t> values;

  PixelTensor() = default;
  PixelTensor(int width, int height, int channels, std::uint32_t magnitude_bound);

  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  std::uint16_t at(int y, int x, int c) const { return values[index(y, x, c)]; }
  std::uint16_t& at(int y, int x, int c) { return values[index(y, x, c)]; }

  /// Throws ShapeError / RangeError when an invariant is broken.
  void validate() const;

  friend bool operator==(const PixelTensor&, const PixelTensor&) = default;
};

/// Binary expansion of a PixelTensor, row-major (H, W, base_channels * bits_per_channel).
struct BitSlicedTensor {
  int width = 0;
  int height = 0;
  int base_channels = 0;
  int bits_per_channel = 0;
  std::uint32_t magnitude_bound = 0;
  // Original 1-based slice index of each stored bit plane, ascending.
  std::vector<int> slices;
  std::vector<std::uint8_t> bits;

  int channels() const { return base_channels * bits_per_channel; }

  std::size_t index(int y, int x, int channel) const {
    return (static_cast<std::size_t>(y) * width + x) * channels() + channel;
  }
  std::uint8_t at(int y, int x, int channel) const { return bits[index(y, x, channel)]; }

  /// Position of an original slice index among the stored planes, or -1.
  int plane_of(int slice) const;

  void validate() const;

  friend bool operator==(const BitSlicedTensor&, const BitSlicedTensor&) = default;
};

/// N = ceil(log2(A + 1)); at least 1.
int bits_for_bound(std::uint32_t magnitude_bound);

/// Lossless conversion. bits == 0 selects bits_for_bound(A); a forced N that
/// cannot represent A is rejected with RangeError.
BitSlicedTensor int2b(const PixelTensor& input, int bits = 0);

/// Inverse of int2b. Pruned planes contribute zero bits.
PixelTensor b2int(const BitSlicedTensor& input);

/// Replaces the given slices (in every base channel) with fair coin flips drawn
/// from a counter-based stream keyed by seed. Same seed, same output.
BitSlicedTensor randomize_slices(const BitSlicedTensor& input, std::span<const int> slices,
                                 std::uint64_t seed);

/// Removes the given slices from every base channel; surviving planes keep order.
BitSlicedTensor prune_slices(const BitSlicedTensor& input, std::span<const int> slices);

/// Slices {1..count}.
std::vector<int> slice_prefix(int count);

// Serialization: five little-endian u32 header fields (width, height,
// base_channels, bits_per_channel, magnitude_bound) followed by the bits,
// row-major (H, W, channel), LSB-first in little-endian 64-bit words.
void write_bitsliced(std::ostream& out, const BitSlicedTensor& t);

/// Reads one record. When bits_per_channel is below bits_for_bound(A), the
/// stored planes are taken to be the most significant ones (prefix pruning).
BitSlicedTensor read_bitsliced(std::istream& in);

}  // namespace cbnn
