#include "cbnn/rebuild.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "cbnn/error.hpp"
#include "cbnn/rng.hpp"

namespace cbnn {

ArchitectureSpec shrink_arch(const ArchitectureSpec& arch, std::span<const int> pruned,
                             bool strict) {
  arch.validate();
  if (arch.encoding != InputEncoding::bitsliced)
    throw ConfigError("shrink_arch needs a bit-sliced architecture");
  const std::set<int> drop(pruned.begin(), pruned.end());
  if (drop.size() != pruned.size()) throw ConfigError("duplicate slice in the prunable set");
  std::set<int> all(arch.pruned_slices.begin(), arch.pruned_slices.end());
  for (int s : drop) {
    if (s < 1 || s > arch.bits) throw RangeError("slice " + std::to_string(s) + " out of range");
    if (!all.insert(s).second)
      throw ConfigError("slice " + std::to_string(s) + " is already pruned");
  }
  if (drop.empty()) return arch;

  const int n = arch.bits - static_cast<int>(arch.pruned_slices.size());
  const int kept = n - static_cast<int>(drop.size());
  if (kept < 1) throw ConfigError("cannot prune every slice");

  auto scale = [&](int depth) {
    const long long num = static_cast<long long>(depth) * kept;
    if (num % n == 0) return static_cast<int>(num / n);
    if (strict)
      throw ConfigError("depth " + std::to_string(depth) + " x " + std::to_string(kept) + "/" +
                        std::to_string(n) +
                        " is not an integer; disable strict mode to round down to a multiple of 8");
    return std::max(8, static_cast<int>(num / n) / 8 * 8);
  };

  ArchitectureSpec out = arch;
  out.pruned_slices.assign(all.begin(), all.end());
  out.channels = arch.base_channels * kept;
  out.name = arch.name + "_p" + std::to_string(drop.size());

  // Index of the class layer: the last weighted layer.
  std::size_t last_weighted = 0;
  for (std::size_t i = 0; i < out.layers.size(); ++i)
    if (out.layers[i].weighted()) last_weighted = i;

  ActivationShape cur{out.channels, out.height, out.width, false};
  for (std::size_t i = 0; i < out.layers.size(); ++i) {
    LayerSpec& l = out.layers[i];
    switch (l.kind) {
      case LayerKind::conv:
        l.in_channels = cur.channels;
        if (i != last_weighted) l.out_channels = scale(l.out_channels);
        cur.channels = l.out_channels;
        break;
      case LayerKind::dense:
        l.in_channels = static_cast<int>(cur.size());
        if (i != last_weighted) l.out_channels = scale(l.out_channels);
        cur = {l.out_channels, 1, 1, true};
        break;
      case LayerKind::maxpool:
        cur.height /= l.pool;
        cur.width /= l.pool;
        break;
      case LayerKind::batchnorm:
        l.in_channels = l.out_channels = cur.channels;
        break;
      case LayerKind::sign_activation:
        break;
    }
  }
  out.validate();
  return out;
}

ArchitectureSpec shrink_arch(const ArchitectureSpec& arch, int n_slices, int p, bool strict) {
  if (arch.bits != n_slices || !arch.pruned_slices.empty())
    throw ConfigError("architecture does not carry " + std::to_string(n_slices) + " slices");
  if (p < 0 || p >= n_slices) throw ConfigError("P must lie in 0.." + std::to_string(n_slices - 1));
  const auto prefix = slice_prefix(p);
  return shrink_arch(arch, prefix, strict);
}

CompressionReport compression_report(const ArchitectureSpec& base, const ArchitectureSpec& compact,
                                     double base_err, double compact_err) {
  CompressionReport r;
  r.base_name = base.name;
  r.compact_name = compact.name;
  r.base_cost = cost_model(base);
  r.compact_cost = cost_model(compact);
  r.size_ratio = static_cast<double>(r.base_cost.size_bits) / static_cast<double>(r.compact_cost.size_bits);
  r.gops_ratio = static_cast<double>(r.base_cost.macs) / static_cast<double>(r.compact_cost.macs);
  r.base_err = base_err;
  r.compact_err = compact_err;
  r.delta_err = compact_err - base_err;
  return r;
}

double printed_ratio(double numerator, double denominator, int digits) {
  const double f = std::pow(10.0, digits);
  return std::round(numerator * f) / std::round(denominator * f);
}

std::string compression_csv(const CompressionReport& r) {
  std::ostringstream out;
  char buf[256];
  out << "arch,err,delta_err,size_mb,size_ratio,gops,gops_ratio\n";
  std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.6f,%.4f,%.6f,%.4f\n", r.base_name.c_str(),
                r.base_err, 0.0, r.base_cost.size_mb, 1.0, r.base_cost.gops, 1.0);
  out << buf;
  std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.6f,%.4f,%.6f,%.4f\n", r.compact_name.c_str(),
                r.compact_err, r.delta_err, r.compact_cost.size_mb, r.size_ratio,
                r.compact_cost.gops, r.gops_ratio);
  out << buf;
  return out.str();
}

std::uint64_t rebuild_seed(std::uint64_t seed) { return derive_key(seed, 0x52454255494c44ULL); }

RebuildResult rebuild_and_retrain(const InferenceModel& base_model, std::span<const int> prunable,
                                  const LabeledDataset& train_set, const LabeledDataset& test_set,
                                  const TrainConfig& config, bool strict,
                                  const EpochCallback& on_epoch) {
  RebuildResult res;
  res.compact_arch = shrink_arch(base_model.arch(), prunable, strict);
  TrainConfig cfg = config;
  cfg.seed = rebuild_seed(config.seed);
  res.training = train(res.compact_arch, cfg, train_set, test_set, {}, on_epoch);
  const double base_err = evaluate(base_model, test_set);
  const double compact_err = evaluate(res.compact_arch, res.training.state.params, test_set);
  res.report = compression_report(base_model.arch(), res.compact_arch, base_err, compact_err);
  return res;
}

}  // namespace cbnn
