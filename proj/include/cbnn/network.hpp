#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cbnn/bitslice.hpp"
#include "cbnn/data.hpp"
#include "cbnn/tensor.hpp"

namespace cbnn {

enum class LayerKind { conv, dense, maxpool, batchnorm, sign_activation };
enum class Precision { binary, full };
enum class InputEncoding { pixels, bitsliced };

const char* to_string(LayerKind kind);
const char* to_string(Precision precision);
const char* to_string(InputEncoding encoding);

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;  // conv only
  Precision precision = Precision::binary;
  int pool = 2;  // maxpool window (and stride)

  bool weighted() const { return kind == LayerKind::conv || kind == LayerKind::dense; }
  std::size_t weight_count() const;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Ordered layer list plus the input contract.
///
/// For bit-sliced inputs, `channels` is base_channels * (bits - |pruned_slices|)
/// and inputs are int2b(image, bits) with pruned_slices removed. For pixel
/// inputs, `channels` is the image channel count and values are mapped to
/// [-1, 1] by v / magnitude_bound * 2 - 1.
struct ArchitectureSpec {
  std::string name = "net";
  int width = 32;
  int height = 32;
  int channels = 3;
  InputEncoding encoding = InputEncoding::pixels;
  int base_channels = 3;
  int bits = 8;
  std::uint32_t magnitude_bound = 255;
  std::vector<int> pruned_slices;
  int classes = 10;
  std::vector<LayerSpec> layers;

  /// Checks shape compatibility, channel bookkeeping and the class count.
  void validate() const;

  /// Slices kept by the input encoder (bit-sliced inputs only).
  std::vector<int> kept_slices() const;

  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;
};

struct ActivationShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  bool flat = false;

  std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
};

/// Shape after each layer (index i = output of layers[i]). Throws ShapeError.
std::vector<ActivationShape> infer_shapes(const ArchitectureSpec& arch);

/// Convolution geometry used for a k x k kernel: stride 1, "same" padding.
ConvGeometry conv_geometry(int kernel);

/// A VGG-style ladder: conv blocks (pooling after every `pool_every` convs),
/// then hidden dense layers, then the class layer. Every weighted layer is
/// followed by batchnorm; every hidden one by a sign activation.
struct LadderConfig {
  std::string name = "net";
  int width = 32;
  int height = 32;
  int base_channels = 3;
  InputEncoding encoding = InputEncoding::pixels;
  int bits = 8;
  std::uint32_t magnitude_bound = 255;
  std::vector<int> pruned_slices;
  std::vector<int> conv_depths;
  std::vector<int> dense_depths;
  int kernel = 3;
  int pool_every = 2;
  int classes = 10;
  Precision first_layer = Precision::binary;
};

ArchitectureSpec build_ladder(const LadderConfig& config);

/// Baseline 9-layer CIFAR-10 BNN: 128,128 / 256,256 / 512,512 convs, dense
/// 1024, 1024, 10; all-binary weights; raw (32, 32, 3) input.
ArchitectureSpec baseline_cifar_arch();

/// Half-depth baseline used for SVHN and Chars74K.
ArchitectureSpec svhn_baseline_arch();

/// CIFAR-10 depths with 43 classes on a 32x32 input.
ArchitectureSpec gtsrb_baseline_arch();

/// Converts a pixel-input architecture to bit-sliced input (bits per channel)
/// with a full-precision first layer.
ArchitectureSpec reconstruct_arch(const ArchitectureSpec& pixel_arch, int bits);

struct CostReport {
  std::uint64_t weights = 0;
  std::uint64_t size_bits = 0;
  double size_mb = 0.0;  // 10^6 bytes
  std::uint64_t macs = 0;
  double gops = 0.0;  // 2 * macs / 1e9
};

/// Parameter storage and per-inference arithmetic. Binary weights cost one
/// bit, full-precision weights nonbinary_weight_bits; batchnorm and pooling
/// are excluded.
CostReport cost_model(const ArchitectureSpec& arch, int nonbinary_weight_bits = 16);

// ---------------------------------------------------------------------------
// Parameters and inference

struct LayerParams {
  std::vector<float> weights;  // (out, in, k, k) or (out, in)
  std::vector<float> scale, shift, mean, variance;  // batchnorm

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// One entry per architecture layer; parameter-free layers hold empty vectors.
struct ParameterStore {
  std::vector<LayerParams> layers;

  friend bool operator==(const ParameterStore&, const ParameterStore&) = default;
};

inline constexpr float kBatchNormEpsilon = 1e-4f;

/// Inference batchnorm as y = a * x + b.
struct AffineChannel {
  float a = 1.0f;
  float b = 0.0f;
};
AffineChannel fold_batchnorm(float scale, float shift, float mean, float variance);

/// Fresh parameters: Glorot-uniform weights, identity batchnorm.
ParameterStore init_params(const ArchitectureSpec& arch, std::uint64_t seed);

/// Throws ShapeError unless params match arch.
void check_params(const ArchitectureSpec& arch, const ParameterStore& params);

/// Maps an image to the network input under the architecture's encoding:
/// int2b then slice pruning for bit-sliced archs.
BitSlicedTensor encode_bitsliced(const ArchitectureSpec& arch, const PixelTensor& image);

/// Dense (C, H, W) input values in [-1, 1] as seen by the first layer.
std::vector<float> input_values(const ArchitectureSpec& arch, const PixelTensor& image);
std::vector<float> input_values(const BitSlicedTensor& input);

/// Compiled network: binary layers hold packed weights, batchnorm is folded.
/// Immutable after construction; forward() is safe to call concurrently.
class InferenceModel {
 public:
  InferenceModel(ArchitectureSpec arch, const ParameterStore& params);
  InferenceModel(const InferenceModel&);
  InferenceModel(InferenceModel&&) noexcept;
  InferenceModel& operator=(const InferenceModel&);
  InferenceModel& operator=(InferenceModel&&) noexcept;
  ~InferenceModel();

  const ArchitectureSpec& arch() const { return arch_; }

  std::vector<float> forward(const BitSlicedTensor& input) const;
  std::vector<float> forward(const PixelTensor& image) const;
  /// Dense (C, H, W) input; only valid for pixel-encoded archs.
  std::vector<float> forward(const DenseTensor& chw) const;

 private:
  struct Activation;
  struct CompiledLayer;

  std::vector<float> run(Activation act) const;

  ArchitectureSpec arch_;
  std::vector<CompiledLayer> layers_;
};

/// Free-function form of InferenceModel::forward; logits as a (1, classes) tensor.
DenseTensor forward(const ArchitectureSpec& arch, const ParameterStore& params,
                    const BitSlicedTensor& input);
DenseTensor forward(const ArchitectureSpec& arch, const ParameterStore& params,
                    const DenseTensor& input);

/// Argmax with lowest-index tie-break.
int predict(std::span<const float> logits);

/// Optional hook applied to each encoded input before the forward pass
/// (used to inject slice distortion).
using InputTransform = std::function<void(std::size_t index, BitSlicedTensor& input)>;

/// Error rate in percent. Samples are evaluated in parallel; the result does
/// not depend on the thread count.
double evaluate(const InferenceModel& model, const LabeledDataset& dataset,
                const InputTransform& transform = {});
double evaluate(const ArchitectureSpec& arch, const ParameterStore& params,
                const LabeledDataset& dataset);

/// Error rate of arbitrary logits rows against labels (lowest-index ties).
double error_rate(const std::vector<std::vector<float>>& logits, const std::vector<int>& labels);

}  // namespace cbnn
