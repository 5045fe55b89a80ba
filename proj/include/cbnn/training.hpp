#pragma once

// Binary-constrained training.
//
// Binary layers keep full-precision reference weights; the forward pass uses
// their signs and the gradient with respect to the signs is applied to the
// references, which are clipped to [-1, 1] after every step. Sign activations
// pass gradients straight through where |x| <= 1. The objective is
//
//   J = L + lambda * (mean_binary(1 - w^2) + mean_full(w^2))
//
// where L is the squared multi-class hinge loss, the first mean runs over all
// binary-layer weight elements and the second over full-precision ones.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cbnn/data.hpp"
#include "cbnn/network.hpp"

namespace cbnn {

struct TrainConfig {
  double lambda = 1e-5;
  double learning_rate = 1e-3;
  double lr_decay = 1.0;  // multiplicative, applied once per epoch
  int epochs = 10;
  int batch_size = 128;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double bn_momentum = 0.9;

  void validate() const;
};

/// Straight-through multiplier for the sign function: 1{|x| <= 1}.
inline double ste_mask(double x) { return (x <= 1.0 && x >= -1.0) ? 1.0 : 0.0; }

/// Mean over the batch of sum_{j != y} max(0, 1 - (z_y - z_j))^2. `logits`
/// is row-major (batch, classes). When grad is non-empty it receives dL/dz.
template <typename T>
double hinge_loss(std::span<const T> logits, int classes, std::span<const int> labels,
                  std::span<T> grad = {});

double hinge_loss(const DenseTensor& logits, const std::vector<int>& labels);

/// Unscaled regularizer means; absent groups contribute zero.
struct RegularizerTerms {
  double binary = 0.0;  // mean over binary-layer weights of (1 - w^2)
  double full = 0.0;    // mean over full-precision weights of w^2
};

RegularizerTerms regularizer_terms(const ArchitectureSpec& arch, const ParameterStore& params);

/// J = loss + lambda * (binary + full).
double objective(double loss, const RegularizerTerms& terms, double lambda);

enum class ParamRole { binary_weight, full_weight, bn_scale, bn_shift };

template <typename T>
struct ParamView {
  std::size_t layer = 0;
  ParamRole role = ParamRole::full_weight;
  std::span<T> value;
  std::span<T> grad;
};

/// Batched training-time network in scalar type T (float for training,
/// double for gradient checks).
template <typename T>
class TrainableNetwork {
 public:
  TrainableNetwork(const ArchitectureSpec& arch, const ParameterStore& params,
                   double bn_momentum = 0.9);

  const ArchitectureSpec& arch() const { return arch_; }

  /// input: (batch, C, H, W) row-major. Training mode normalizes with batch
  /// statistics and updates running averages; otherwise running statistics
  /// are used. Returns (batch, classes) outputs.
  const std::vector<T>& forward(const std::vector<T>& input, int batch, bool train);

  /// Back-propagates dL/dlogits from the last forward(…, train=true) call,
  /// overwriting all parameter gradients.
  void backward(const std::vector<T>& dlogits);

  /// Forward (train mode) + loss + backward + regularizer gradients.
  /// Returns the objective J.
  double compute_gradients(const std::vector<T>& input, std::span<const int> labels,
                           double lambda);

  /// Regularizer terms of the current reference weights.
  RegularizerTerms regularizer() const;

  std::vector<ParamView<T>> parameters();

  /// Sign-gradient masks recorded by each sign layer in the last forward pass.
  std::vector<std::vector<T>> ste_masks() const;

  ParameterStore export_params() const;

 private:
  struct Layer;

  ArchitectureSpec arch_;
  std::vector<Layer> layers_;
  std::vector<T> logits_;
  int batch_ = 0;
  double bn_momentum_;

 public:
  ~TrainableNetwork();
  TrainableNetwork(TrainableNetwork&&) noexcept;
  TrainableNetwork& operator=(TrainableNetwork&&) noexcept;
};

extern template class TrainableNetwork<float>;
extern template class TrainableNetwork<double>;

/// Encodes a batch of images as (batch, C, H, W) input values.
template <typename T>
std::vector<T> encode_batch(const ArchitectureSpec& arch, const LabeledDataset& dataset,
                            std::span<const std::size_t> indices);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean objective over the epoch
  double val_err = 0.0;     // percent
};

struct TrainState {
  ParameterStore params;  // reference weights and batchnorm statistics
  std::vector<std::vector<float>> adam_m;
  std::vector<std::vector<float>> adam_v;
  int epoch = 0;
  std::uint64_t seed = 0;
};

struct TrainResult {
  TrainState state;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from the given initial parameters (init_params(arch, seed) when
/// empty). Validation ERR is measured with the packed inference path. Throws
/// DivergenceError on a non-finite loss.
TrainResult train(const ArchitectureSpec& arch, const TrainConfig& config,
                  const LabeledDataset& train_set, const LabeledDataset& validation_set,
                  ParameterStore initial = {}, const EpochCallback& on_epoch = {});

/// History as comma-separated rows: epoch,train_loss,val_err.
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace cbnn
