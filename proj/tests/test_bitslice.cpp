#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "cbnn/bitslice.hpp"
#include "cbnn/error.hpp"
#include "cbnn/rng.hpp"
#include "oracles.hpp"

using namespace cbnn;

TEST_SUITE("bitslice") {

TEST_CASE("bits_for_bound is ceil(log2(A+1))") {
  CHECK(bits_for_bound(0) == 1);
  CHECK(bits_for_bound(1) == 1);
  CHECK(bits_for_bound(2) == 2);
  CHECK(bits_for_bound(3) == 2);
  CHECK(bits_for_bound(4) == 3);
  CHECK(bits_for_bound(255) == 8);
  CHECK(bits_for_bound(256) == 9);
  CHECK(bits_for_bound(65535) == 16);
  for (std::uint32_t a = 1; a < 5000; ++a)
    CHECK(bits_for_bound(a) == static_cast<int>(std::ceil(std::log2(a + 1.0) - 1e-12)));
}

TEST_CASE("int2b layout: channel c, slice n at c*N + (n-1)") {
  PixelTensor img(2, 1, 3, 255);
  img.at(0, 0, 0) = 0b10110001;
  img.at(0, 0, 1) = 255;
  img.at(0, 0, 2) = 0;
  img.at(0, 1, 0) = 1;
  const auto t = int2b(img);
  REQUIRE(t.channels() == 24);
  REQUIRE(t.bits_per_channel == 8);
  for (int n = 1; n <= 8; ++n) {
    CHECK(t.at(0, 0, 0 * 8 + n - 1) == ((0b10110001 >> (n - 1)) & 1));
    CHECK(t.at(0, 0, 1 * 8 + n - 1) == 1);
    CHECK(t.at(0, 0, 2 * 8 + n - 1) == 0);
  }
  CHECK(t.at(0, 1, 0) == 1);
  CHECK(t.at(0, 1, 1) == 0);
}

TEST_CASE("int2b roundtrip over every value and every channel position") {
  PixelTensor img(16, 16, 3, 255);
  for (int v = 0; v < 256; ++v)
    for (int c = 0; c < 3; ++c) img.at(v / 16, v % 16, c) = static_cast<std::uint16_t>((v + 85 * c) % 256);
  CHECK(b2int(int2b(img)) == img);
}

TEST_CASE("int2b property: random images and bounds roundtrip") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto bound = static_cast<std::uint32_t>(1 + rng.below(65535));
    const int w = 1 + static_cast<int>(rng.below(6)), h = 1 + static_cast<int>(rng.below(6));
    const int c = 1 + static_cast<int>(rng.below(4));
    const auto img = oracle::random_image(w, h, c, bound, rng);
    const int extra = static_cast<int>(rng.below(3));
    const int n = std::min(16, bits_for_bound(bound) + extra);
    const auto t = int2b(img, n);
    CHECK(t.channels() == c * n);
    CHECK(b2int(t) == img);
  }
}

TEST_CASE("int2b rejects a forced N that cannot hold A") {
  PixelTensor img(1, 1, 1, 255);
  CHECK_THROWS_AS(int2b(img, 7), RangeError);
  PixelTensor bad(1, 1, 1, 10);
  bad.values[0] = 11;
  CHECK_THROWS_AS(int2b(bad), RangeError);
  PixelTensor big(1, 1, 1, 70000);
  CHECK_THROWS_AS(int2b(big), RangeError);
}

TEST_CASE("b2int of pruned slices contributes zero bits") {
  PixelTensor img(1, 1, 1, 255);
  img.values[0] = 0b11111111;
  const std::vector<int> drop{1, 2, 3, 4};
  CHECK(b2int(prune_slices(int2b(img), drop)).values[0] == 0b11110000);
}

TEST_CASE("randomize_slices only touches the named slices and is seeded") {
  Rng rng(3);
  const auto img = oracle::random_image(8, 8, 3, 255, rng);
  const auto t = int2b(img);
  const std::vector<int> target{2, 5};
  const auto a = randomize_slices(t, target, 42);
  const auto b = randomize_slices(t, target, 42);
  const auto c = randomize_slices(t, target, 43);
  CHECK(a == b);
  CHECK(a != c);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      for (int ch = 0; ch < 24; ++ch) {
        const int slice = ch % 8 + 1;
        if (slice != 2 && slice != 5) CHECK(a.at(y, x, ch) == t.at(y, x, ch));
      }
  // Randomizing nothing is the identity.
  CHECK(randomize_slices(t, std::vector<int>{}, 1) == t);
  CHECK_THROWS_AS(randomize_slices(t, std::vector<int>{9}, 1), RangeError);
}

TEST_CASE("randomize_slices bits are fair") {
  PixelTensor img(64, 64, 3, 255);
  const auto t = int2b(img);
  const std::vector<int> all = slice_prefix(8);
  std::size_t ones = 0, total = 0;
  for (std::uint64_t seed = 0; seed < 11; ++seed) {
    const auto r = randomize_slices(t, all, seed);
    for (auto b : r.bits) ones += b;
    total += r.bits.size();
  }
  CHECK(std::abs(static_cast<double>(ones) / total - 0.5) < 0.01);
}

TEST_CASE("prune_slices keeps surviving planes in order") {
  Rng rng(5);
  const auto img = oracle::random_image(4, 3, 2, 255, rng);
  const auto t = int2b(img);
  const std::vector<int> drop{1, 3};
  const auto p = prune_slices(t, drop);
  CHECK(p.bits_per_channel == 6);
  CHECK(p.slices == std::vector<int>{2, 4, 5, 6, 7, 8});
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 2; ++c)
        for (int j = 0; j < 6; ++j)
          CHECK(p.at(y, x, c * 6 + j) == ((img.at(y, x, c) >> (p.slices[j] - 1)) & 1));
  CHECK_THROWS_AS(prune_slices(t, slice_prefix(8)), ShapeError);
  CHECK_THROWS_AS(prune_slices(p, std::vector<int>{1}), RangeError);
}

TEST_CASE("serialization roundtrip and header") {
  Rng rng(9);
  const auto t = int2b(oracle::random_image(5, 7, 3, 255, rng));
  std::stringstream ss;
  write_bitsliced(ss, t);
  const std::string bytes = ss.str();
  CHECK(bytes.size() == 20 + 8 * ((5 * 7 * 24 + 63) / 64));
  std::uint32_t hdr[5];
  std::memcpy(hdr, bytes.data(), 20);
  CHECK(hdr[0] == 5);
  CHECK(hdr[1] == 7);
  CHECK(hdr[2] == 3);
  CHECK(hdr[3] == 8);
  CHECK(hdr[4] == 255);
  CHECK(read_bitsliced(ss) == t);
}

TEST_CASE("serialized prefix-pruned tensors read back as the top slices") {
  Rng rng(11);
  const auto t = prune_slices(int2b(oracle::random_image(3, 3, 3, 255, rng)), slice_prefix(4));
  std::stringstream ss;
  write_bitsliced(ss, t);
  CHECK(read_bitsliced(ss) == t);
}

TEST_CASE("truncated serialization reports the offset") {
  Rng rng(1);
  const auto t = int2b(oracle::random_image(4, 4, 3, 255, rng));
  std::stringstream ss;
  write_bitsliced(ss, t);
  std::string s = ss.str();
  s.resize(s.size() - 3);
  std::stringstream cut(s);
  try {
    read_bitsliced(cut);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
  }
}

}  // TEST_SUITE
