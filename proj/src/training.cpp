#include "cbnn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

#include "cbnn/error.hpp"
#include "cbnn/kernels.hpp"
#include "cbnn/rng.hpp"

namespace cbnn {

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (!(lr_decay > 0.0)) throw ConfigError("lr_decay must be positive");
  if (!(bn_momentum >= 0.0 && bn_momentum < 1.0)) throw ConfigError("bn_momentum must lie in [0, 1)");
}

template <typename T>
double hinge_loss(std::span<const T> logits, int classes, std::span<const int> labels,
                  std::span<T> grad) {
  const auto batch = labels.size();
  if (classes < 1 || logits.size() != batch * static_cast<std::size_t>(classes))
    throw ShapeError("hinge_loss expects (batch, classes) logits");
  if (batch == 0) throw ShapeError("hinge_loss over an empty batch");
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
  double total = 0.0;
  const double inv = 1.0 / static_cast<double>(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= classes)
      throw RangeError("label " + std::to_string(y) + " outside 0.." + std::to_string(classes - 1));
    const T* z = logits.data() + b * classes;
    for (int j = 0; j < classes; ++j) {
      if (j == y) continue;
      const double m = 1.0 - (static_cast<double>(z[y]) - static_cast<double>(z[j]));
      if (m <= 0.0) continue;
      total += m * m;
      if (!grad.empty()) {
        grad[b * classes + j] += static_cast<T>(2.0 * m * inv);
        grad[b * classes + y] -= static_cast<T>(2.0 * m * inv);
      }
    }
  }
  return total * inv;
}

template double hinge_loss<float>(std::span<const float>, int, std::span<const int>, std::span<float>);
template double hinge_loss<double>(std::span<const double>, int, std::span<const int>, std::span<double>);

double hinge_loss(const DenseTensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw ShapeError("hinge_loss expects rank-2 logits");
  return hinge_loss<float>(logits.values, logits.shape[1], labels);
}

RegularizerTerms regularizer_terms(const ArchitectureSpec& arch, const ParameterStore& params) {
  check_params(arch, params);
  double bin_sum = 0.0, full_sum = 0.0;
  std::size_t bin_n = 0, full_n = 0;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    if (!l.weighted()) continue;
    for (float w : params.layers[i].weights) {
      const double w2 = static_cast<double>(w) * w;
      if (l.precision == Precision::binary) {
        bin_sum += 1.0 - w2;
        ++bin_n;
      } else {
        full_sum += w2;
        ++full_n;
      }
    }
  }
  return {bin_n ? bin_sum / static_cast<double>(bin_n) : 0.0,
          full_n ? full_sum / static_cast<double>(full_n) : 0.0};
}

double objective(double loss, const RegularizerTerms& terms, double lambda) {
  return loss + lambda * (terms.binary + terms.full);
}

// ---------------------------------------------------------------------------
// TrainableNetwork

template <typename T>
struct TrainableNetwork<T>::Layer {
  LayerSpec spec;
  ActivationShape in;
  ActivationShape out;
  T pad_value = T(0);
  bool needs_input_grad = true;

  std::vector<T> w, dw, wb;
  std::vector<T> gamma, beta, dgamma, dbeta, run_mean, run_var;

  std::vector<T> input;  // conv, dense, sign
  std::vector<T> xhat, inv_std;  // batchnorm (train mode)
  std::vector<std::uint32_t> argmax;  // maxpool
  std::vector<T> output;
};

template <typename T>
TrainableNetwork<T>::TrainableNetwork(const ArchitectureSpec& arch, const ParameterStore& params,
                                      double bn_momentum)
    : arch_(arch), bn_momentum_(bn_momentum) {
  arch_.validate();
  check_params(arch_, params);
  const auto shapes = infer_shapes(arch_);
  bool binary_rep = arch_.encoding == InputEncoding::bitsliced;
  bool seen_weighted = false;
  ActivationShape cur{arch_.channels, arch_.height, arch_.width, false};
  layers_.resize(arch_.layers.size());
  for (std::size_t i = 0; i < arch_.layers.size(); ++i) {
    Layer& L = layers_[i];
    L.spec = arch_.layers[i];
    L.in = cur;
    L.out = shapes[i];
    const LayerParams& p = params.layers[i];
    switch (L.spec.kind) {
      case LayerKind::conv:
      case LayerKind::dense:
        // Matches the inference path: binarized activations pad with -1.
        L.pad_value = binary_rep ? T(-1) : T(0);
        L.needs_input_grad = seen_weighted;
        seen_weighted = true;
        L.w.assign(p.weights.begin(), p.weights.end());
        L.dw.assign(L.w.size(), T(0));
        binary_rep = false;
        break;
      case LayerKind::batchnorm:
        L.gamma.assign(p.scale.begin(), p.scale.end());
        L.beta.assign(p.shift.begin(), p.shift.end());
        L.run_mean.assign(p.mean.begin(), p.mean.end());
        L.run_var.assign(p.variance.begin(), p.variance.end());
        L.dgamma.assign(L.gamma.size(), T(0));
        L.dbeta.assign(L.beta.size(), T(0));
        binary_rep = false;
        break;
      case LayerKind::sign_activation:
        binary_rep = true;
        break;
      case LayerKind::maxpool:
        break;
    }
    cur = shapes[i];
  }
}

template <typename T>
TrainableNetwork<T>::~TrainableNetwork() = default;
template <typename T>
TrainableNetwork<T>::TrainableNetwork(TrainableNetwork&&) noexcept = default;
template <typename T>
TrainableNetwork<T>& TrainableNetwork<T>::operator=(TrainableNetwork&&) noexcept = default;

template <typename T>
const std::vector<T>& TrainableNetwork<T>::forward(const std::vector<T>& input, int batch,
                                                   bool train) {
  const std::size_t in_size = static_cast<std::size_t>(arch_.channels) * arch_.height * arch_.width;
  if (batch < 1 || input.size() != in_size * batch)
    throw ShapeError("training input must be (batch, C, H, W)");
  batch_ = batch;
  const std::vector<T>* x = &input;
  for (Layer& L : layers_) {
    const LayerSpec& s = L.spec;
    const std::size_t in_n = L.in.size();
    const std::size_t out_n = L.out.size();
    L.output.assign(out_n * batch, T(0));
    switch (s.kind) {
      case LayerKind::conv: {
        L.input = *x;
        L.wb = L.w;
        if (s.precision == Precision::binary)
          for (auto& v : L.wb) v = v >= T(0) ? T(1) : T(-1);
        const ConvGeometry g = conv_geometry(s.kernel);
        const int positions = L.out.height * L.out.width;
        const int row_len = s.in_channels * s.kernel * s.kernel;
        std::vector<T> cols(static_cast<std::size_t>(positions) * row_len);
        for (int b = 0; b < batch; ++b) {
          kernels::im2col(L.input.data() + b * in_n, s.in_channels, L.in.height, L.in.width,
                          s.kernel, g.stride, g.padding, L.pad_value, cols.data());
          kernels::gemm(false, true, s.out_channels, positions, row_len, L.wb.data(), cols.data(),
                        L.output.data() + b * out_n);
        }
        break;
      }
      case LayerKind::dense: {
        L.input = *x;
        L.wb = L.w;
        if (s.precision == Precision::binary)
          for (auto& v : L.wb) v = v >= T(0) ? T(1) : T(-1);
        kernels::gemm(false, true, batch, s.out_channels, s.in_channels, L.input.data(),
                      L.wb.data(), L.output.data());
        break;
      }
      case LayerKind::maxpool: {
        const int p = s.pool;
        L.argmax.assign(out_n * batch, 0);
        for (int b = 0; b < batch; ++b)
          for (int c = 0; c < L.out.channels; ++c)
            for (int oy = 0; oy < L.out.height; ++oy)
              for (int ox = 0; ox < L.out.width; ++ox) {
                std::size_t best = 0;
                T m = -std::numeric_limits<T>::infinity();
                for (int dy = 0; dy < p; ++dy)
                  for (int dx = 0; dx < p; ++dx) {
                    const std::size_t idx =
                        b * in_n + (static_cast<std::size_t>(c) * L.in.height + oy * p + dy) *
                                       L.in.width +
                        ox * p + dx;
                    if ((*x)[idx] > m) {
                      m = (*x)[idx];
                      best = idx;
                    }
                  }
                const std::size_t o =
                    b * out_n + (static_cast<std::size_t>(c) * L.out.height + oy) * L.out.width + ox;
                L.output[o] = m;
                L.argmax[o] = static_cast<std::uint32_t>(best);
              }
        break;
      }
      case LayerKind::batchnorm: {
        const int channels = s.out_channels;
        const std::size_t plane = L.out.flat ? 1 : static_cast<std::size_t>(L.out.height) * L.out.width;
        const double count = static_cast<double>(plane) * batch;
        if (train) {
          L.xhat.assign(out_n * batch, T(0));
          L.inv_std.assign(channels, T(0));
        }
        for (int c = 0; c < channels; ++c) {
          double mean, var;
          if (train) {
            double sum = 0.0;
            for (int b = 0; b < batch; ++b)
              for (std::size_t i = 0; i < plane; ++i) sum += (*x)[b * in_n + c * plane + i];
            mean = sum / count;
            double sq = 0.0;
            for (int b = 0; b < batch; ++b)
              for (std::size_t i = 0; i < plane; ++i) {
                const double d = (*x)[b * in_n + c * plane + i] - mean;
                sq += d * d;
              }
            var = sq / count;
            L.run_mean[c] = static_cast<T>(bn_momentum_ * L.run_mean[c] + (1.0 - bn_momentum_) * mean);
            L.run_var[c] = static_cast<T>(bn_momentum_ * L.run_var[c] + (1.0 - bn_momentum_) * var);
          } else {
            mean = L.run_mean[c];
            var = L.run_var[c];
          }
          const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(kBatchNormEpsilon)));
          if (train) L.inv_std[c] = inv;
          const T m = static_cast<T>(mean);
          for (int b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t idx = b * in_n + c * plane + i;
              const T xh = ((*x)[idx] - m) * inv;
              if (train) L.xhat[idx] = xh;
              L.output[idx] = L.gamma[c] * xh + L.beta[c];
            }
        }
        break;
      }
      case LayerKind::sign_activation: {
        L.input = *x;
        for (std::size_t i = 0; i < L.output.size(); ++i)
          L.output[i] = (*x)[i] >= T(0) ? T(1) : T(-1);
        break;
      }
    }
    x = &L.output;
  }
  logits_ = *x;
  return logits_;
}

template <typename T>
void TrainableNetwork<T>::backward(const std::vector<T>& dlogits) {
  const int batch = batch_;
  if (dlogits.size() != logits_.size()) throw ShapeError("gradient does not match the logits");
  std::vector<T> grad = dlogits;
  std::vector<T> next;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    Layer& L = layers_[li];
    const LayerSpec& s = L.spec;
    const std::size_t in_n = L.in.size();
    const std::size_t out_n = L.out.size();
    const bool need_dx = li > 0;
    switch (s.kind) {
      case LayerKind::conv: {
        const ConvGeometry g = conv_geometry(s.kernel);
        const int positions = L.out.height * L.out.width;
        const int row_len = s.in_channels * s.kernel * s.kernel;
        std::fill(L.dw.begin(), L.dw.end(), T(0));
        std::vector<T> cols(static_cast<std::size_t>(positions) * row_len);
        std::vector<T> dcols;
        if (need_dx && L.needs_input_grad) {
          next.assign(in_n * batch, T(0));
          dcols.resize(cols.size());
        } else {
          next.clear();
        }
        for (int b = 0; b < batch; ++b) {
          kernels::im2col(L.input.data() + b * in_n, s.in_channels, L.in.height, L.in.width,
                          s.kernel, g.stride, g.padding, L.pad_value, cols.data());
          const T* dout = grad.data() + b * out_n;
          kernels::gemm(false, false, s.out_channels, row_len, positions, dout, cols.data(),
                        L.dw.data(), true);
          if (!dcols.empty()) {
            kernels::gemm(true, false, positions, row_len, s.out_channels, dout, L.wb.data(),
                          dcols.data());
            kernels::col2im_add(dcols.data(), s.in_channels, L.in.height, L.in.width, s.kernel,
                                g.stride, g.padding, next.data() + b * in_n);
          }
        }
        break;
      }
      case LayerKind::dense: {
        kernels::gemm(true, false, s.out_channels, s.in_channels, batch, grad.data(),
                      L.input.data(), L.dw.data());
        if (need_dx && L.needs_input_grad) {
          next.assign(in_n * batch, T(0));
          kernels::gemm(false, false, batch, s.in_channels, s.out_channels, grad.data(),
                        L.wb.data(), next.data());
        } else {
          next.clear();
        }
        break;
      }
      case LayerKind::maxpool: {
        next.assign(in_n * batch, T(0));
        for (std::size_t o = 0; o < grad.size(); ++o) next[L.argmax[o]] += grad[o];
        break;
      }
      case LayerKind::batchnorm: {
        const int channels = s.out_channels;
        const std::size_t plane = L.out.flat ? 1 : static_cast<std::size_t>(L.out.height) * L.out.width;
        const double count = static_cast<double>(plane) * batch;
        next.assign(in_n * batch, T(0));
        for (int c = 0; c < channels; ++c) {
          double dg = 0.0, db = 0.0;
          for (int b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t idx = b * in_n + c * plane + i;
              dg += static_cast<double>(grad[idx]) * L.xhat[idx];
              db += grad[idx];
            }
          L.dgamma[c] = static_cast<T>(dg);
          L.dbeta[c] = static_cast<T>(db);
          const double k = static_cast<double>(L.gamma[c]) * L.inv_std[c] / count;
          for (int b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < plane; ++i) {
              const std::size_t idx = b * in_n + c * plane + i;
              next[idx] = static_cast<T>(k * (count * grad[idx] - db - L.xhat[idx] * dg));
            }
        }
        break;
      }
      case LayerKind::sign_activation: {
        next.resize(grad.size());
        for (std::size_t i = 0; i < grad.size(); ++i)
          next[i] = static_cast<T>(ste_mask(static_cast<double>(L.input[i]))) * grad[i];
        break;
      }
    }
    if (next.empty()) break;
    grad.swap(next);
  }
}

template <typename T>
RegularizerTerms TrainableNetwork<T>::regularizer() const {
  double bin_sum = 0.0, full_sum = 0.0;
  std::size_t bin_n = 0, full_n = 0;
  for (const Layer& L : layers_) {
    if (!L.spec.weighted()) continue;
    for (T w : L.w) {
      const double w2 = static_cast<double>(w) * w;
      if (L.spec.precision == Precision::binary) {
        bin_sum += 1.0 - w2;
        ++bin_n;
      } else {
        full_sum += w2;
        ++full_n;
      }
    }
  }
  return {bin_n ? bin_sum / static_cast<double>(bin_n) : 0.0,
          full_n ? full_sum / static_cast<double>(full_n) : 0.0};
}

template <typename T>
double TrainableNetwork<T>::compute_gradients(const std::vector<T>& input,
                                              std::span<const int> labels, double lambda) {
  const int batch = static_cast<int>(labels.size());
  const auto& logits = forward(input, batch, true);
  std::vector<T> dlogits(logits.size());
  const double loss = hinge_loss<T>(logits, arch_.classes, labels, dlogits);
  backward(dlogits);

  std::size_t bin_n = 0, full_n = 0;
  for (const Layer& L : layers_)
    if (L.spec.weighted()) (L.spec.precision == Precision::binary ? bin_n : full_n) += L.w.size();
  for (Layer& L : layers_) {
    if (!L.spec.weighted() || lambda == 0.0) continue;
    const bool binary = L.spec.precision == Precision::binary;
    const double k = binary ? -2.0 * lambda / static_cast<double>(bin_n)
                            : 2.0 * lambda / static_cast<double>(full_n);
    for (std::size_t i = 0; i < L.w.size(); ++i) L.dw[i] += static_cast<T>(k * L.w[i]);
  }
  return objective(loss, regularizer(), lambda);
}

template <typename T>
std::vector<ParamView<T>> TrainableNetwork<T>::parameters() {
  std::vector<ParamView<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    Layer& L = layers_[i];
    if (L.spec.weighted()) {
      out.push_back({i,
                     L.spec.precision == Precision::binary ? ParamRole::binary_weight
                                                           : ParamRole::full_weight,
                     L.w, L.dw});
    } else if (L.spec.kind == LayerKind::batchnorm) {
      out.push_back({i, ParamRole::bn_scale, L.gamma, L.dgamma});
      out.push_back({i, ParamRole::bn_shift, L.beta, L.dbeta});
    }
  }
  return out;
}

template <typename T>
std::vector<std::vector<T>> TrainableNetwork<T>::ste_masks() const {
  std::vector<std::vector<T>> masks;
  for (const Layer& L : layers_) {
    if (L.spec.kind != LayerKind::sign_activation) continue;
    std::vector<T> m(L.input.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<T>(ste_mask(L.input[i]));
    masks.push_back(std::move(m));
  }
  return masks;
}

template <typename T>
ParameterStore TrainableNetwork<T>::export_params() const {
  ParameterStore store;
  store.layers.resize(layers_.size());
  auto to_float = [](const std::vector<T>& v) { return std::vector<float>(v.begin(), v.end()); };
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& L = layers_[i];
    LayerParams& p = store.layers[i];
    if (L.spec.weighted()) {
      p.weights = to_float(L.w);
    } else if (L.spec.kind == LayerKind::batchnorm) {
      p.scale = to_float(L.gamma);
      p.shift = to_float(L.beta);
      p.mean = to_float(L.run_mean);
      p.variance = to_float(L.run_var);
    }
  }
  return store;
}

template class TrainableNetwork<float>;
template class TrainableNetwork<double>;

template <typename T>
std::vector<T> encode_batch(const ArchitectureSpec& arch, const LabeledDataset& dataset,
                            std::span<const std::size_t> indices) {
  const std::size_t in_size = static_cast<std::size_t>(arch.channels) * arch.height * arch.width;
  std::vector<T> out(in_size * indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto values = input_values(arch, dataset.images.at(indices[b]));
    std::copy(values.begin(), values.end(), out.begin() + b * in_size);
  }
  return out;
}

template std::vector<float> encode_batch<float>(const ArchitectureSpec&, const LabeledDataset&,
                                                std::span<const std::size_t>);
template std::vector<double> encode_batch<double>(const ArchitectureSpec&, const LabeledDataset&,
                                                  std::span<const std::size_t>);

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(const ArchitectureSpec& arch, const TrainConfig& config,
                  const LabeledDataset& train_set, const LabeledDataset& validation_set,
                  ParameterStore initial, const EpochCallback& on_epoch) {
  config.validate();
  arch.validate();
  if (train_set.empty()) throw ShapeError("cannot train on an empty dataset");
  const LabeledDataset& val = validation_set.empty() ? train_set : validation_set;
  if (initial.layers.empty()) initial = init_params(arch, config.seed);

  TrainableNetwork<float> net(arch, initial, config.bn_momentum);
  auto params = net.parameters();

  TrainResult result;
  TrainState& state = result.state;
  state.seed = config.seed;
  for (const auto& p : params) {
    state.adam_m.emplace_back(p.value.size(), 0.0f);
    state.adam_v.emplace_back(p.value.size(), 0.0f);
  }

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::uint64_t step = 0;
  double lr = config.learning_rate;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle(derive_key(config.seed, 0x5348554646ULL + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, end - start);
      const auto input = encode_batch<float>(arch, train_set, idx);
      std::vector<int> labels(idx.size());
      for (std::size_t b = 0; b < idx.size(); ++b) labels[b] = train_set.labels[idx[b]];

      const double j = net.compute_gradients(input, labels, config.lambda);
      if (!std::isfinite(j))
        throw DivergenceError("non-finite objective at epoch " + std::to_string(epoch) +
                              ", step " + std::to_string(step));
      loss_sum += j * static_cast<double>(idx.size());

      ++step;
      const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto& m = state.adam_m[p];
        auto& v = state.adam_v[p];
        auto value = params[p].value;
        auto grad = params[p].grad;
        for (std::size_t i = 0; i < value.size(); ++i) {
          const double g = grad[i];
          m[i] = static_cast<float>(config.beta1 * m[i] + (1.0 - config.beta1) * g);
          v[i] = static_cast<float>(config.beta2 * v[i] + (1.0 - config.beta2) * g * g);
          const double update = lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.adam_epsilon);
          value[i] = static_cast<float>(value[i] - update);
        }
        if (params[p].role == ParamRole::binary_weight)
          for (auto& w : value) w = std::clamp(w, -1.0f, 1.0f);
      }
    }
    lr *= config.lr_decay;

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.val_err = evaluate(InferenceModel(arch, net.export_params()), val);
    result.history.push_back(rec);
    state.epoch = epoch;
    if (on_epoch) on_epoch(rec);
  }
  state.params = net.export_params();
  return result;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_err\n";
  out.precision(9);
  for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_err << '\n';
  return out.str();
}

}  // namespace cbnn
