#include "cbnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cbnn/error.hpp"
#include "cbnn/kernels.hpp"
#include "cbnn/parallel.hpp"
#include "cbnn/rng.hpp"

namespace cbnn {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::dense: return "dense";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::batchnorm: return "batchnorm";
    case LayerKind::sign_activation: return "sign";
  }
  return "?";
}

const char* to_string(Precision precision) {
  return precision == Precision::binary ? "binary" : "full";
}

const char* to_string(InputEncoding encoding) {
  return encoding == InputEncoding::bitsliced ? "bitsliced" : "pixels";
}

std::size_t LayerSpec::weight_count() const {
  switch (kind) {
    case LayerKind::conv:
      return static_cast<std::size_t>(in_channels) * out_channels * kernel * kernel;
    case LayerKind::dense:
      return static_cast<std::size_t>(in_channels) * out_channels;
    default:
      return 0;
  }
}

ConvGeometry conv_geometry(int kernel) { return ConvGeometry{kernel, 1, kernel / 2}; }

std::vector<int> ArchitectureSpec::kept_slices() const {
  std::vector<int> kept;
  for (int s = 1; s <= bits; ++s)
    if (std::find(pruned_slices.begin(), pruned_slices.end(), s) == pruned_slices.end())
      kept.push_back(s);
  return kept;
}

std::vector<ActivationShape> infer_shapes(const ArchitectureSpec& arch) {
  if (arch.width <= 0 || arch.height <= 0 || arch.channels <= 0)
    throw ShapeError("architecture input shape must be positive");
  std::vector<ActivationShape> shapes;
  shapes.reserve(arch.layers.size());
  ActivationShape cur{arch.channels, arch.height, arch.width, false};
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + "): ";
    switch (l.kind) {
      case LayerKind::conv: {
        if (cur.flat) throw ShapeError(where + "convolution after flattening");
        if (l.in_channels != cur.channels)
          throw ShapeError(where + "expects " + std::to_string(l.in_channels) +
                           " input channels, got " + std::to_string(cur.channels));
        if (l.out_channels <= 0 || l.kernel <= 0) throw ShapeError(where + "non-positive size");
        const ConvGeometry g = conv_geometry(l.kernel);
        cur = {l.out_channels, g.output_size(cur.height), g.output_size(cur.width), false};
        break;
      }
      case LayerKind::dense: {
        if (static_cast<std::size_t>(l.in_channels) != cur.size())
          throw ShapeError(where + "expects " + std::to_string(l.in_channels) +
                           " inputs, got " + std::to_string(cur.size()));
        if (l.out_channels <= 0) throw ShapeError(where + "non-positive size");
        cur = {l.out_channels, 1, 1, true};
        break;
      }
      case LayerKind::maxpool: {
        if (cur.flat) throw ShapeError(where + "pooling after flattening");
        if (l.pool != 2) throw ShapeError(where + "only 2x2 pooling is supported");
        if (cur.height < l.pool || cur.width < l.pool) throw ShapeError(where + "input too small");
        cur = {cur.channels, cur.height / l.pool, cur.width / l.pool, false};
        break;
      }
      case LayerKind::batchnorm:
        if (l.in_channels != cur.channels || l.out_channels != cur.channels)
          throw ShapeError(where + "channel count " + std::to_string(l.in_channels) +
                           " does not match input " + std::to_string(cur.channels));
        break;
      case LayerKind::sign_activation:
        break;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

void ArchitectureSpec::validate() const {
  if (encoding == InputEncoding::bitsliced) {
    if (bits <= 0 || bits > 16) throw ShapeError("bits per channel must lie in 1..16");
    if (bits_for_bound(magnitude_bound) > bits)
      throw RangeError("magnitude bound needs more than " + std::to_string(bits) + " bits");
    for (int s : pruned_slices)
      if (s < 1 || s > bits) throw RangeError("pruned slice " + std::to_string(s) + " out of range");
    const auto kept = kept_slices();
    if (kept.empty()) throw ShapeError("every slice is pruned");
    if (channels != base_channels * static_cast<int>(kept.size()))
      throw ShapeError("input channels " + std::to_string(channels) + " != base channels " +
                       std::to_string(base_channels) + " x kept slices " +
                       std::to_string(kept.size()));
  } else if (channels != base_channels) {
    throw ShapeError("pixel-encoded input must have channels == base_channels");
  }
  if (classes < 2) throw ShapeError("at least two classes are required");
  const auto shapes = infer_shapes(*this);
  if (shapes.empty()) throw ShapeError("architecture has no layers");
  const auto& last = shapes.back();
  if (!last.flat || last.channels != classes)
    throw ShapeError("final layer must produce " + std::to_string(classes) + " logits");
}

ArchitectureSpec build_ladder(const LadderConfig& c) {
  ArchitectureSpec arch;
  arch.name = c.name;
  arch.width = c.width;
  arch.height = c.height;
  arch.base_channels = c.base_channels;
  arch.encoding = c.encoding;
  arch.bits = c.bits;
  arch.magnitude_bound = c.magnitude_bound;
  arch.pruned_slices = c.pruned_slices;
  std::sort(arch.pruned_slices.begin(), arch.pruned_slices.end());
  arch.classes = c.classes;
  arch.channels = c.encoding == InputEncoding::bitsliced
                      ? c.base_channels * static_cast<int>(arch.kept_slices().size())
                      : c.base_channels;

  bool first = true;
  auto precision = [&] {
    const Precision p = first ? c.first_layer : Precision::binary;
    first = false;
    return p;
  };
  auto bn = [](int ch) {
    return LayerSpec{LayerKind::batchnorm, ch, ch, 0, Precision::full, 2};
  };
  const LayerSpec sign{LayerKind::sign_activation, 0, 0, 0, Precision::binary, 2};

  int ch = arch.channels;
  int h = c.height, w = c.width;
  for (std::size_t i = 0; i < c.conv_depths.size(); ++i) {
    const int d = c.conv_depths[i];
    arch.layers.push_back({LayerKind::conv, ch, d, c.kernel, precision(), 2});
    ch = d;
    if (c.pool_every > 0 && (i + 1) % c.pool_every == 0) {
      arch.layers.push_back({LayerKind::maxpool, 0, 0, 0, Precision::binary, 2});
      h /= 2;
      w /= 2;
    }
    arch.layers.push_back(bn(d));
    arch.layers.push_back(sign);
  }
  int features = ch * h * w;
  for (int d : c.dense_depths) {
    arch.layers.push_back({LayerKind::dense, features, d, 0, precision(), 2});
    arch.layers.push_back(bn(d));
    arch.layers.push_back(sign);
    features = d;
  }
  arch.layers.push_back({LayerKind::dense, features, c.classes, 0, precision(), 2});
  arch.layers.push_back(bn(c.classes));
  arch.validate();
  return arch;
}

ArchitectureSpec baseline_cifar_arch() {
  LadderConfig c;
  c.name = "cifar10_bnn";
  c.conv_depths = {128, 128, 256, 256, 512, 512};
  c.dense_depths = {1024, 1024};
  c.classes = 10;
  return build_ladder(c);
}

ArchitectureSpec svhn_baseline_arch() {
  LadderConfig c;
  c.name = "svhn_bnn";
  c.conv_depths = {64, 64, 128, 128, 256, 256};
  c.dense_depths = {512, 512};
  c.classes = 10;
  return build_ladder(c);
}

ArchitectureSpec gtsrb_baseline_arch() {
  LadderConfig c;
  c.name = "gtsrb_bnn";
  c.conv_depths = {128, 128, 256, 256, 512, 512};
  c.dense_depths = {1024, 1024};
  c.classes = 43;
  return build_ladder(c);
}

ArchitectureSpec reconstruct_arch(const ArchitectureSpec& pixel_arch, int bits) {
  if (pixel_arch.encoding != InputEncoding::pixels)
    throw ShapeError("reconstruct_arch expects a pixel-input architecture");
  ArchitectureSpec arch = pixel_arch;
  arch.name = pixel_arch.name + "_reconstructed";
  arch.encoding = InputEncoding::bitsliced;
  arch.bits = bits;
  arch.pruned_slices.clear();
  arch.channels = pixel_arch.base_channels * bits;
  bool first = true;
  for (auto& l : arch.layers) {
    if (!l.weighted()) continue;
    if (first) {
      l.in_channels = arch.channels;
      l.precision = Precision::full;
      first = false;
    }
  }
  // A dense first layer reads a flattened input whose size also grew.
  if (!arch.layers.empty() && arch.layers.front().kind == LayerKind::dense)
    arch.layers.front().in_channels = arch.channels * arch.width * arch.height;
  arch.validate();
  return arch;
}

CostReport cost_model(const ArchitectureSpec& arch, int nonbinary_weight_bits) {
  const auto shapes = infer_shapes(arch);
  CostReport r;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    if (!l.weighted()) continue;
    const std::uint64_t w = l.weight_count();
    r.weights += w;
    r.size_bits += w * (l.precision == Precision::binary ? 1u
                                                          : static_cast<unsigned>(nonbinary_weight_bits));
    r.macs += l.kind == LayerKind::conv
                  ? w * static_cast<std::uint64_t>(shapes[i].height) * shapes[i].width
                  : w;
  }
  r.size_mb = static_cast<double>(r.size_bits) / 8.0 / 1e6;
  r.gops = 2.0 * static_cast<double>(r.macs) / 1e9;
  return r;
}

AffineChannel fold_batchnorm(float scale, float shift, float mean, float variance) {
  const float a = scale / std::sqrt(variance + kBatchNormEpsilon);
  return {a, shift - a * mean};
}

ParameterStore init_params(const ArchitectureSpec& arch, std::uint64_t seed) {
  arch.validate();
  ParameterStore store;
  store.layers.resize(arch.layers.size());
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    LayerParams& p = store.layers[i];
    if (l.weighted()) {
      const int taps = l.kind == LayerKind::conv ? l.kernel * l.kernel : 1;
      const double limit = std::sqrt(6.0 / (static_cast<double>(l.in_channels) * taps +
                                            static_cast<double>(l.out_channels) * taps));
      Rng rng(derive_key(seed, i));
      p.weights.resize(l.weight_count());
      for (auto& w : p.weights) w = static_cast<float>(rng.uniform(-limit, limit));
    } else if (l.kind == LayerKind::batchnorm) {
      p.scale.assign(l.out_channels, 1.0f);
      p.shift.assign(l.out_channels, 0.0f);
      p.mean.assign(l.out_channels, 0.0f);
      p.variance.assign(l.out_channels, 1.0f);
    }
  }
  return store;
}

void check_params(const ArchitectureSpec& arch, const ParameterStore& params) {
  if (params.layers.size() != arch.layers.size())
    throw ShapeError("parameter store has " + std::to_string(params.layers.size()) +
                     " layers, architecture has " + std::to_string(arch.layers.size()));
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    const LayerParams& p = params.layers[i];
    const std::string where = "layer " + std::to_string(i) + ": ";
    if (l.weighted() && p.weights.size() != l.weight_count())
      throw ShapeError(where + "missing or mis-sized weights");
    if (l.kind == LayerKind::batchnorm) {
      const auto n = static_cast<std::size_t>(l.out_channels);
      if (p.scale.size() != n || p.shift.size() != n || p.mean.size() != n ||
          p.variance.size() != n)
        throw ShapeError(where + "missing or mis-sized batchnorm statistics");
    }
  }
}

BitSlicedTensor encode_bitsliced(const ArchitectureSpec& arch, const PixelTensor& image) {
  if (arch.encoding != InputEncoding::bitsliced)
    throw ShapeError("architecture does not take bit-sliced input");
  if (image.width != arch.width || image.height != arch.height ||
      image.channels != arch.base_channels)
    throw ShapeError("image shape does not match the architecture input");
  PixelTensor bounded = image;
  bounded.magnitude_bound = arch.magnitude_bound;
  BitSlicedTensor t = int2b(bounded, arch.bits);
  if (!arch.pruned_slices.empty()) t = prune_slices(t, arch.pruned_slices);
  return t;
}

std::vector<float> input_values(const BitSlicedTensor& input) {
  const int c = input.channels();
  std::vector<float> chw(static_cast<std::size_t>(c) * input.height * input.width);
  for (int y = 0; y < input.height; ++y)
    for (int x = 0; x < input.width; ++x)
      for (int ch = 0; ch < c; ++ch)
        chw[(static_cast<std::size_t>(ch) * input.height + y) * input.width + x] =
            input.at(y, x, ch) ? 1.0f : -1.0f;
  return chw;
}

std::vector<float> input_values(const ArchitectureSpec& arch, const PixelTensor& image) {
  if (arch.encoding == InputEncoding::bitsliced) return input_values(encode_bitsliced(arch, image));
  if (image.width != arch.width || image.height != arch.height || image.channels != arch.channels)
    throw ShapeError("image shape does not match the architecture input");
  std::vector<float> chw(image.values.size());
  const float scale = 2.0f / static_cast<float>(std::max<std::uint32_t>(1, arch.magnitude_bound));
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c)
        chw[(static_cast<std::size_t>(c) * image.height + y) * image.width + x] =
            static_cast<float>(image.at(y, x, c)) * scale - 1.0f;
  return chw;
}

// ---------------------------------------------------------------------------
// Inference

// A packed activation is either a feature map stored per pixel (words_per_pixel
// words holding the channel bits of one pixel) or, when shape.flat, a single
// channel-major bit vector.
struct InferenceModel::Activation {
  ActivationShape shape;
  bool packed = false;
  std::vector<float> dense;
  std::vector<std::uint64_t> bits;
  int words_per_pixel = 0;
};

struct InferenceModel::CompiledLayer {
  LayerSpec spec;
  ActivationShape in;
  ActivationShape out;
  bool packed_input = false;
  // Binary weights for the packed path. Conv rows are laid out (ky, kx, word)
  // to match the per-pixel packed activations.
  BitPackedMatrix packed_weights;
  int padding_bits = 0;
  // Effective weights for the dense path, (out, in*k*k); +-1 for binary layers.
  std::vector<float> weights;
  std::vector<AffineChannel> affine;
};

namespace {

int words_for(int bits) { return (bits + 63) / 64; }

}  // namespace

InferenceModel::InferenceModel(ArchitectureSpec arch, const ParameterStore& params)
    : arch_(std::move(arch)) {
  arch_.validate();
  check_params(arch_, params);
  const auto shapes = infer_shapes(arch_);
  bool packed = arch_.encoding == InputEncoding::bitsliced;
  ActivationShape cur{arch_.channels, arch_.height, arch_.width, false};
  layers_.reserve(arch_.layers.size());
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    CompiledLayer cl;
    cl.spec = arch_.layers[i];
    cl.in = cur;
    cl.out = shapes[i];
    cl.packed_input = packed;
    const LayerParams& p = params.layers[i];
    switch (cl.spec.kind) {
      case LayerKind::conv:
      case LayerKind::dense: {
        const bool binary = cl.spec.precision == Precision::binary;
        if (binary && packed) {
          const int out_ch = cl.spec.out_channels;
          if (cl.spec.kind == LayerKind::conv) {
            const int k = cl.spec.kernel;
            const int in_ch = cl.spec.in_channels;
            const int wpp = words_for(in_ch);
            cl.packed_weights = BitPackedMatrix(out_ch, k * k * wpp * 64);
            cl.padding_bits = k * k * (wpp * 64 - in_ch);
            for (int o = 0; o < out_ch; ++o)
              for (int c = 0; c < in_ch; ++c)
                for (int ky = 0; ky < k; ++ky)
                  for (int kx = 0; kx < k; ++kx) {
                    const float w =
                        p.weights[((static_cast<std::size_t>(o) * in_ch + c) * k + ky) * k + kx];
                    if (w >= 0.0f) cl.packed_weights.set(o, (ky * k + kx) * wpp * 64 + c, true);
                  }
          } else {
            DenseTensor w({out_ch, cl.spec.in_channels}, p.weights);
            cl.packed_weights = sign_binarize(w);
          }
        } else {
          cl.weights = p.weights;
          if (binary)
            for (auto& w : cl.weights) w = w >= 0.0f ? 1.0f : -1.0f;
        }
        packed = false;
        break;
      }
      case LayerKind::batchnorm:
        for (int c = 0; c < cl.spec.out_channels; ++c)
          cl.affine.push_back(fold_batchnorm(p.scale[c], p.shift[c], p.mean[c], p.variance[c]));
        packed = false;
        break;
      case LayerKind::sign_activation:
        packed = true;
        break;
      case LayerKind::maxpool:
        break;
    }
    cur = shapes[i];
    layers_.push_back(std::move(cl));
  }
}

InferenceModel::InferenceModel(const InferenceModel&) = default;
InferenceModel::InferenceModel(InferenceModel&&) noexcept = default;
InferenceModel& InferenceModel::operator=(const InferenceModel&) = default;
InferenceModel& InferenceModel::operator=(InferenceModel&&) noexcept = default;
InferenceModel::~InferenceModel() = default;

namespace {

// Dense (C, H, W) -> packed per-pixel map; bit set where value >= 0.
void pack_map(const std::vector<float>& chw, const ActivationShape& s,
              std::vector<std::uint64_t>& bits, int& wpp) {
  wpp = words_for(s.channels);
  bits.assign(static_cast<std::size_t>(s.height) * s.width * wpp, 0);
  const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
  for (int c = 0; c < s.channels; ++c) {
    const float* src = chw.data() + c * plane;
    const int shift = c & 63;
    std::uint64_t* dst = bits.data() + (c >> 6);
    // Branch-free: activations are close to random in sign.
    for (std::size_t px = 0; px < plane; ++px)
      dst[px * wpp] |= static_cast<std::uint64_t>(src[px] >= 0.0f) << shift;
  }
}

void pack_flat(const std::vector<float>& v, std::vector<std::uint64_t>& bits) {
  bits.assign(words_for(static_cast<int>(v.size())), 0);
  for (std::size_t i = 0; i < v.size(); ++i)
    bits[i >> 6] |= static_cast<std::uint64_t>(v[i] >= 0.0f) << (i & 63);
}

bool map_bit(const std::vector<std::uint64_t>& bits, int wpp, std::size_t pixel, int c) {
  return (bits[pixel * wpp + (c >> 6)] >> (c & 63)) & 1u;
}

}  // namespace

std::vector<float> InferenceModel::run(Activation act) const {
  auto to_dense = [](Activation& a) {
    if (!a.packed) return;
    const ActivationShape& s = a.shape;
    a.dense.assign(s.size(), 0.0f);
    if (s.flat) {
      for (std::size_t i = 0; i < s.size(); ++i)
        a.dense[i] = ((a.bits[i >> 6] >> (i & 63)) & 1u) ? 1.0f : -1.0f;
    } else {
      const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
      for (int c = 0; c < s.channels; ++c)
        for (std::size_t px = 0; px < plane; ++px)
          a.dense[c * plane + px] = map_bit(a.bits, a.words_per_pixel, px, c) ? 1.0f : -1.0f;
    }
    a.packed = false;
    a.bits.clear();
  };

  for (const CompiledLayer& cl : layers_) {
    const LayerSpec& l = cl.spec;
    switch (l.kind) {
      case LayerKind::conv: {
        const ConvGeometry g = conv_geometry(l.kernel);
        const int positions = cl.out.height * cl.out.width;
        std::vector<float> out(static_cast<std::size_t>(l.out_channels) * positions);
        if (!cl.packed_weights.words().empty() && act.packed) {
          const int k = l.kernel;
          const int wpp = act.words_per_pixel;
          BitPackedMatrix cols(positions, k * k * wpp * 64);
          for (int oy = 0; oy < cl.out.height; ++oy)
            for (int ox = 0; ox < cl.out.width; ++ox) {
              auto row = cols.row(oy * cl.out.width + ox);
              for (int ky = 0; ky < k; ++ky) {
                const int y = oy * g.stride + ky - g.padding;
                for (int kx = 0; kx < k; ++kx) {
                  const int x = ox * g.stride + kx - g.padding;
                  if (y < 0 || y >= cl.in.height || x < 0 || x >= cl.in.width) continue;
                  const std::size_t px = static_cast<std::size_t>(y) * cl.in.width + x;
                  std::copy_n(act.bits.begin() + px * wpp, wpp,
                              row.begin() + (ky * k + kx) * wpp);
                }
              }
            }
          // Weights on the left give (out_channels x positions), already CHW.
          std::vector<std::int32_t> raw(static_cast<std::size_t>(positions) * l.out_channels);
          binary_gemm(cl.packed_weights, cols, raw);
          for (std::size_t i = 0; i < raw.size(); ++i)
            out[i] = static_cast<float>(raw[i] - cl.padding_bits);
        } else {
          const float pad = act.packed ? -1.0f : 0.0f;
          to_dense(act);
          const int row_len = l.in_channels * l.kernel * l.kernel;
          std::vector<float> cols(static_cast<std::size_t>(positions) * row_len);
          kernels::im2col_t(act.dense.data(), l.in_channels, cl.in.height, cl.in.width, l.kernel,
                            g.stride, g.padding, pad, cols.data());
          kernels::gemm(false, false, l.out_channels, positions, row_len, cl.weights.data(),
                        cols.data(), out.data());
        }
        act.packed = false;
        act.bits.clear();
        act.dense = std::move(out);
        act.shape = cl.out;
        break;
      }
      case LayerKind::dense: {
        std::vector<float> out(static_cast<std::size_t>(l.out_channels));
        if (!cl.packed_weights.words().empty() && act.packed) {
          BitPackedMatrix row(1, l.in_channels);
          if (act.shape.flat) {
            std::copy(act.bits.begin(), act.bits.end(), row.row(0).begin());
          } else {
            // Per-pixel map -> channel-major flat vector.
            const std::size_t plane = static_cast<std::size_t>(act.shape.height) * act.shape.width;
            auto dst = row.row(0);
            for (int c = 0; c < act.shape.channels; ++c)
              for (std::size_t px = 0; px < plane; ++px)
                if (map_bit(act.bits, act.words_per_pixel, px, c)) {
                  const std::size_t i = c * plane + px;
                  dst[i >> 6] |= std::uint64_t{1} << (i & 63);
                }
          }
          std::vector<std::int32_t> raw(static_cast<std::size_t>(l.out_channels));
          binary_gemm(row, cl.packed_weights, raw);
          for (int o = 0; o < l.out_channels; ++o) out[o] = static_cast<float>(raw[o]);
        } else {
          to_dense(act);
          kernels::gemm(false, true, 1, l.out_channels, l.in_channels, act.dense.data(),
                        cl.weights.data(), out.data());
        }
        act.packed = false;
        act.bits.clear();
        act.dense = std::move(out);
        act.shape = cl.out;
        break;
      }
      case LayerKind::maxpool: {
        const int p = l.pool;
        const ActivationShape& in = cl.in;
        const ActivationShape& o = cl.out;
        if (act.packed) {
          const int wpp = act.words_per_pixel;
          std::vector<std::uint64_t> bits(static_cast<std::size_t>(o.height) * o.width * wpp, 0);
          for (int y = 0; y < o.height; ++y)
            for (int x = 0; x < o.width; ++x) {
              std::uint64_t* dst = bits.data() + (static_cast<std::size_t>(y) * o.width + x) * wpp;
              for (int dy = 0; dy < p; ++dy)
                for (int dx = 0; dx < p; ++dx) {
                  const std::size_t px =
                      static_cast<std::size_t>(y * p + dy) * in.width + (x * p + dx);
                  for (int w = 0; w < wpp; ++w) dst[w] |= act.bits[px * wpp + w];
                }
            }
          act.bits = std::move(bits);
        } else {
          std::vector<float> out(o.size());
          for (int c = 0; c < o.channels; ++c)
            for (int y = 0; y < o.height; ++y)
              for (int x = 0; x < o.width; ++x) {
                float m = -std::numeric_limits<float>::infinity();
                for (int dy = 0; dy < p; ++dy)
                  for (int dx = 0; dx < p; ++dx)
                    m = std::max(m, act.dense[(static_cast<std::size_t>(c) * in.height + y * p + dy) *
                                                  in.width +
                                              x * p + dx]);
                out[(static_cast<std::size_t>(c) * o.height + y) * o.width + x] = m;
              }
          act.dense = std::move(out);
        }
        act.shape = o;
        break;
      }
      case LayerKind::batchnorm: {
        to_dense(act);
        const std::size_t plane = act.shape.flat ? 1 : static_cast<std::size_t>(act.shape.height) *
                                                            act.shape.width;
        for (int c = 0; c < l.out_channels; ++c) {
          const AffineChannel f = cl.affine[c];
          float* v = act.dense.data() + c * plane;
          for (std::size_t i = 0; i < plane; ++i) v[i] = f.a * v[i] + f.b;
        }
        break;
      }
      case LayerKind::sign_activation: {
        if (act.packed) break;
        if (act.shape.flat) {
          pack_flat(act.dense, act.bits);
        } else {
          pack_map(act.dense, act.shape, act.bits, act.words_per_pixel);
        }
        act.dense.clear();
        act.packed = true;
        break;
      }
    }
  }
  to_dense(act);
  return std::move(act.dense);
}

std::vector<float> InferenceModel::forward(const BitSlicedTensor& input) const {
  if (arch_.encoding != InputEncoding::bitsliced)
    throw ShapeError("architecture " + arch_.name + " does not take bit-sliced input");
  input.validate();
  if (input.width != arch_.width || input.height != arch_.height ||
      input.channels() != arch_.channels)
    throw ShapeError("input shape (" + std::to_string(input.width) + "," +
                     std::to_string(input.height) + "," + std::to_string(input.channels()) +
                     ") does not match architecture (" + std::to_string(arch_.width) + "," +
                     std::to_string(arch_.height) + "," + std::to_string(arch_.channels) + ")");
  if (input.slices != arch_.kept_slices())
    throw ShapeError("input carries a different slice set than the architecture expects");

  Activation act;
  act.shape = {arch_.channels, arch_.height, arch_.width, false};
  act.packed = true;
  act.words_per_pixel = words_for(arch_.channels);
  act.bits.assign(static_cast<std::size_t>(arch_.height) * arch_.width * act.words_per_pixel, 0);
  const int c = arch_.channels;
  for (std::size_t px = 0; px < static_cast<std::size_t>(arch_.height) * arch_.width; ++px)
    for (int ch = 0; ch < c; ++ch)
      if (input.bits[px * c + ch])
        act.bits[px * act.words_per_pixel + (ch >> 6)] |= std::uint64_t{1} << (ch & 63);
  return run(std::move(act));
}

std::vector<float> InferenceModel::forward(const PixelTensor& image) const {
  if (arch_.encoding == InputEncoding::bitsliced) return forward(encode_bitsliced(arch_, image));
  Activation act;
  act.shape = {arch_.channels, arch_.height, arch_.width, false};
  act.dense = input_values(arch_, image);
  return run(std::move(act));
}

std::vector<float> InferenceModel::forward(const DenseTensor& chw) const {
  if (arch_.encoding != InputEncoding::pixels)
    throw ShapeError("dense input requires a pixel-encoded architecture");
  if (chw.shape != std::vector<int>{arch_.channels, arch_.height, arch_.width})
    throw ShapeError("dense input shape does not match the architecture (C, H, W)");
  Activation act;
  act.shape = {arch_.channels, arch_.height, arch_.width, false};
  act.dense = chw.values;
  return run(std::move(act));
}

DenseTensor forward(const ArchitectureSpec& arch, const ParameterStore& params,
                    const BitSlicedTensor& input) {
  auto logits = InferenceModel(arch, params).forward(input);
  const int n = static_cast<int>(logits.size());
  return DenseTensor({1, n}, std::move(logits));
}

DenseTensor forward(const ArchitectureSpec& arch, const ParameterStore& params,
                    const DenseTensor& input) {
  auto logits = InferenceModel(arch, params).forward(input);
  const int n = static_cast<int>(logits.size());
  return DenseTensor({1, n}, std::move(logits));
}

int predict(std::span<const float> logits) {
  if (logits.empty()) throw ShapeError("empty logits");
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = static_cast<int>(i);
  return best;
}

double error_rate(const std::vector<std::vector<float>>& logits, const std::vector<int>& labels) {
  if (logits.empty()) throw ShapeError("cannot compute an error rate over zero samples");
  if (logits.size() != labels.size()) throw ShapeError("logit and label counts differ");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (predict(logits[i]) != labels[i]) ++wrong;
  return 100.0 * static_cast<double>(wrong) / static_cast<double>(logits.size());
}

double evaluate(const InferenceModel& model, const LabeledDataset& dataset,
                const InputTransform& transform) {
  if (dataset.empty()) throw ShapeError("cannot evaluate on an empty dataset");
  const ArchitectureSpec& arch = model.arch();
  for (int label : dataset.labels)
    if (label < 0 || label >= arch.classes)
      throw RangeError("label " + std::to_string(label) + " outside the class range");
  std::vector<std::uint8_t> wrong(dataset.size(), 0);
  parallel_for(dataset.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      std::vector<float> logits;
      if (arch.encoding == InputEncoding::bitsliced) {
        BitSlicedTensor input = encode_bitsliced(arch, dataset.images[i]);
        if (transform) transform(i, input);
        logits = model.forward(input);
      } else {
        logits = model.forward(dataset.images[i]);
      }
      wrong[i] = predict(logits) != dataset.labels[i];
    }
  });
  std::size_t errors = 0;
  for (auto w : wrong) errors += w;
  return 100.0 * static_cast<double>(errors) / static_cast<double>(dataset.size());
}

double evaluate(const ArchitectureSpec& arch, const ParameterStore& params,
                const LabeledDataset& dataset) {
  return evaluate(InferenceModel(arch, params), dataset);
}

}  // namespace cbnn
