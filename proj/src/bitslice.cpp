#include "cbnn/bitslice.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include "binary_io.hpp"
#include "cbnn/error.hpp"
#include "cbnn/rng.hpp"

namespace cbnn {

PixelTensor::PixelTensor(int w, int h, int c, std::uint32_t bound)
    : width(w), height(h), channels(c), magnitude_bound(bound),
      values(static_cast<std::size_t>(w) * h * c, 0) {}

void PixelTensor::validate() const {
  if (width <= 0 || height <= 0 || channels <= 0)
    throw ShapeError("pixel tensor dimensions must be positive");
  if (values.size() != static_cast<std::size_t>(width) * height * channels)
    throw ShapeError("pixel tensor value count does not match width*height*channels");
  if (magnitude_bound > 0xffff) throw RangeError("magnitude bound above 65535 is unsupported");
  for (std::size_t i = 0; i < values.size(); ++i)
    if (values[i] > magnitude_bound)
      throw RangeError("pixel value " + std::to_string(values[i]) + " at index " +
                       std::to_string(i) + " exceeds magnitude bound " +
                       std::to_string(magnitude_bound));
}

int BitSlicedTensor::plane_of(int slice) const {
  auto it = std::lower_bound(slices.begin(), slices.end(), slice);
  if (it == slices.end() || *it != slice) return -1;
  return static_cast<int>(it - slices.begin());
}

void BitSlicedTensor::validate() const {
  if (width <= 0 || height <= 0 || base_channels <= 0 || bits_per_channel <= 0)
    throw ShapeError("bit-sliced tensor dimensions must be positive");
  if (static_cast<int>(slices.size()) != bits_per_channel)
    throw ShapeError("slice list length does not match bits_per_channel");
  if (!std::is_sorted(slices.begin(), slices.end()) ||
      std::adjacent_find(slices.begin(), slices.end()) != slices.end())
    throw ShapeError("slice list must be strictly ascending");
  if (bits.size() != static_cast<std::size_t>(width) * height * channels())
    throw ShapeError("bit count does not match width*height*channels");
}

int bits_for_bound(std::uint32_t magnitude_bound) {
  // ceil(log2(A + 1)) is the bit width of A.
  return std::max(1, static_cast<int>(std::bit_width(magnitude_bound)));
}

std::vector<int> slice_prefix(int count) {
  std::vector<int> out(static_cast<std::size_t>(std::max(0, count)));
  for (int i = 0; i < count; ++i) out[i] = i + 1;
  return out;
}

BitSlicedTensor int2b(const PixelTensor& input, int bits) {
  input.validate();
  const int natural = bits_for_bound(input.magnitude_bound);
  if (bits == 0) bits = natural;
  if (bits < natural || bits > 16)
    throw RangeError("cannot represent magnitude bound " + std::to_string(input.magnitude_bound) +
                     " losslessly in " + std::to_string(bits) + " bits");

  BitSlicedTensor out;
  out.width = input.width;
  out.height = input.height;
  out.base_channels = input.channels;
  out.bits_per_channel = bits;
  out.magnitude_bound = input.magnitude_bound;
  out.slices = slice_prefix(bits);
  out.bits.resize(input.values.size() * bits);

  auto dst = out.bits.begin();
  for (std::uint16_t v : input.values)
    for (int n = 0; n < bits; ++n) *dst++ = static_cast<std::uint8_t>((v >> n) & 1u);
  return out;
}

PixelTensor b2int(const BitSlicedTensor& input) {
  input.validate();
  PixelTensor out(input.width, input.height, input.base_channels, input.magnitude_bound);
  const int planes = input.bits_per_channel;
  auto src = input.bits.begin();
  for (auto& v : out.values) {
    unsigned value = 0;
    for (int p = 0; p < planes; ++p) value |= static_cast<unsigned>(*src++ & 1u) << (input.slices[p] - 1);
    v = static_cast<std::uint16_t>(value);
  }
  return out;
}

namespace {

std::vector<int> resolve_planes(const BitSlicedTensor& t, std::span<const int> slices) {
  const int top = std::max(bits_for_bound(t.magnitude_bound), t.slices.empty() ? 0 : t.slices.back());
  std::vector<int> planes;
  for (int s : slices) {
    if (s < 1 || s > top)
      throw RangeError("slice index " + std::to_string(s) + " outside 1.." + std::to_string(top));
    const int p = t.plane_of(s);
    if (p < 0) throw RangeError("slice " + std::to_string(s) + " is not present (already pruned)");
    planes.push_back(p);
  }
  std::sort(planes.begin(), planes.end());
  planes.erase(std::unique(planes.begin(), planes.end()), planes.end());
  return planes;
}

}  // namespace

BitSlicedTensor randomize_slices(const BitSlicedTensor& input, std::span<const int> slices,
                                 std::uint64_t seed) {
  input.validate();
  const auto planes = resolve_planes(input, slices);
  BitSlicedTensor out = input;
  if (planes.empty()) return out;

  const CounterRng rng(seed);
  const int bits = input.bits_per_channel;
  const std::size_t pixels = static_cast<std::size_t>(input.width) * input.height;
  const std::size_t stride = static_cast<std::size_t>(input.channels());
  // One 64-bit draw covers 64 consecutive target bits.
  std::uint64_t draw = 0;
  std::uint64_t flat = 0;
  for (std::size_t px = 0; px < pixels; ++px)
    for (int c = 0; c < input.base_channels; ++c)
      for (int p : planes) {
        if ((flat & 63) == 0) draw = rng.at(flat >> 6);
        out.bits[px * stride + static_cast<std::size_t>(c) * bits + p] =
            static_cast<std::uint8_t>((draw >> (flat & 63)) & 1u);
        ++flat;
      }
  return out;
}

BitSlicedTensor prune_slices(const BitSlicedTensor& input, std::span<const int> slices) {
  input.validate();
  const auto planes = resolve_planes(input, slices);
  if (static_cast<int>(planes.size()) == input.bits_per_channel)
    throw ShapeError("pruning every slice would leave an empty input");

  std::vector<int> keep;
  for (int p = 0; p < input.bits_per_channel; ++p)
    if (!std::binary_search(planes.begin(), planes.end(), p)) keep.push_back(p);

  BitSlicedTensor out;
  out.width = input.width;
  out.height = input.height;
  out.base_channels = input.base_channels;
  out.bits_per_channel = static_cast<int>(keep.size());
  out.magnitude_bound = input.magnitude_bound;
  for (int p : keep) out.slices.push_back(input.slices[p]);
  out.bits.reserve(static_cast<std::size_t>(input.width) * input.height * out.channels());

  const std::size_t pixels = static_cast<std::size_t>(input.width) * input.height;
  const int bits = input.bits_per_channel;
  for (std::size_t px = 0; px < pixels; ++px)
    for (int c = 0; c < input.base_channels; ++c)
      for (int p : keep)
        out.bits.push_back(input.bits[(px * input.base_channels + c) * bits + p]);
  return out;
}

void write_bitsliced(std::ostream& out, const BitSlicedTensor& t) {
  t.validate();
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.width));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.height));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.base_channels));
  io::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.bits_per_channel));
  io::put<std::uint32_t>(out, t.magnitude_bound);
  std::uint64_t word = 0;
  std::size_t i = 0;
  for (; i < t.bits.size(); ++i) {
    word |= static_cast<std::uint64_t>(t.bits[i] & 1u) << (i & 63);
    if ((i & 63) == 63) {
      io::put(out, word);
      word = 0;
    }
  }
  if ((i & 63) != 0) io::put(out, word);
}

BitSlicedTensor read_bitsliced(std::istream& in) {
  BitSlicedTensor t;
  t.width = static_cast<int>(io::get<std::uint32_t>(in, "width"));
  t.height = static_cast<int>(io::get<std::uint32_t>(in, "height"));
  t.base_channels = static_cast<int>(io::get<std::uint32_t>(in, "base_channels"));
  t.bits_per_channel = static_cast<int>(io::get<std::uint32_t>(in, "bits_per_channel"));
  t.magnitude_bound = io::get<std::uint32_t>(in, "magnitude_bound");
  const int natural = bits_for_bound(t.magnitude_bound);
  if (t.width <= 0 || t.height <= 0 || t.base_channels <= 0 || t.bits_per_channel <= 0 ||
      t.bits_per_channel > 16 || t.width > (1 << 16) || t.height > (1 << 16) ||
      t.base_channels > (1 << 16))
    throw FormatError("implausible bit-sliced tensor header");
  const int top = std::max(natural, t.bits_per_channel);
  for (int s = top - t.bits_per_channel + 1; s <= top; ++s) t.slices.push_back(s);

  const std::size_t count = static_cast<std::size_t>(t.width) * t.height * t.channels();
  t.bits.resize(count);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < count; ++i) {
    if ((i & 63) == 0) word = io::get<std::uint64_t>(in, "bit payload");
    t.bits[i] = static_cast<std::uint8_t>((word >> (i & 63)) & 1u);
  }
  return t;
}

}  // namespace cbnn
