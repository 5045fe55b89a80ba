#pragma once

// Run configuration: flat `key = value` lines grouped under [section]
// headers. '#' starts a comment. Unknown sections and keys are errors.
//
//   [arch]     preset or an explicit layer list (see parse_arch)
//   [data]     source = synth | cifar10 | records, plus source options
//   [train]    TrainConfig fields
//   [sensitivity]  SensitivityConfig fields
//   [rebuild]  p, strict

#include <optional>
#include <string>
#include <utility>

#include "cbnn/data.hpp"
#include "cbnn/network.hpp"
#include "cbnn/sensitivity.hpp"
#include "cbnn/training.hpp"

namespace cbnn {

struct DataConfig {
  std::string source = "synth";
  // cifar10: directory; records: train_path / test_path.
  std::string path;
  std::string train_path;
  std::string test_path;
  std::size_t train_limit = 0;
  std::size_t test_limit = 0;
  RecordLayout layout;
  // synth: samples is the training size, test_samples the test size.
  SynthTaskConfig synth;
  std::size_t test_samples = 500;
};

struct RebuildConfig {
  std::optional<int> p;  // unset: use the prunable set from sensitivity
  bool strict = true;
};

struct RunConfig {
  std::optional<ArchitectureSpec> arch;
  DataConfig data;
  TrainConfig train;
  SensitivityConfig sensitivity;
  RebuildConfig rebuild;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Fully-resolved configuration in the same format; parse_config(config_text(c))
/// reproduces c.
std::string config_text(const RunConfig& config);

/// Architecture keys: either `preset = cifar10 | svhn | gtsrb` with optional
/// `reconstruct_bits = N` and `prune = P`, or an explicit spec with name,
/// width, height, channels, encoding, base_channels, bits, magnitude_bound,
/// pruned_slices, classes and one `layer = ...` line per layer:
///
///   layer = conv in=24 out=32 kernel=3 precision=full
///   layer = dense in=512 out=64 precision=binary
///   layer = maxpool pool=2
///   layer = batchnorm channels=32
///   layer = sign
ArchitectureSpec parse_arch(const std::string& text);

/// Explicit-form text (an [arch] section body without the header).
std::string arch_text(const ArchitectureSpec& arch);

/// Loads the train and test splits described by the data section.
std::pair<LabeledDataset, LabeledDataset> load_datasets(const DataConfig& config);

}  // namespace cbnn
