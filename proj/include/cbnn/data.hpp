#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cbnn/bitslice.hpp"

namespace cbnn {

enum class Split { train, test };

struct LabeledDataset {
  std::vector<PixelTensor> images;
  std::vector<int> labels;
  int class_count = 0;
  Split split = Split::train;

  std::size_t size() const { return images.size(); }
  bool empty() const { return images.empty(); }

  void validate() const;
};

/// Record layout: one label byte followed by width*height*channels pixel
/// bytes, channel-planar (all of channel 0 row-major, then channel 1, ...).
struct RecordLayout {
  int width = 32;
  int height = 32;
  int channels = 3;
  int class_count = 10;

  std::size_t record_bytes() const {
    return 1 + static_cast<std::size_t>(width) * height * channels;
  }
};

/// Reads every record in a file. limit > 0 stops after that many records.
LabeledDataset load_records(const std::string& path, const RecordLayout& layout, Split split,
                            std::size_t limit = 0);

/// Writes the dataset in the record layout. Requires magnitude_bound <= 255.
void write_records(const std::string& path, const LabeledDataset& dataset);

/// Loads data_batch_1..5.bin and test_batch.bin from a CIFAR-10 binary
/// directory. train_limit / test_limit > 0 truncate each split.
std::pair<LabeledDataset, LabeledDataset> load_cifar10(const std::string& directory,
                                                       std::size_t train_limit = 0,
                                                       std::size_t test_limit = 0);

struct SynthTaskConfig {
  std::size_t samples = 1000;
  int width = 8;
  int height = 8;
  int channels = 3;
  int bits = 8;
  std::vector<int> significant_slices{6, 7, 8};
  int classes = 4;
  // Templates are constant over block x block pixel tiles (per channel), so
  // the label depends on regional sums a small conv net can learn.
  int block = 4;
  std::uint64_t seed = 1;     // fixes the class templates
  std::uint64_t stream = 0;   // selects the sample draw; splits share templates
  // Minimum gap between the winning and runner-up template score, as a
  // fraction of the maximum attainable score. Samples below it are redrawn.
  double margin = 0.02;
};

/// Synthetic task whose labels depend only on the significant slices.
///
/// Pixels are uniform over [0, 2^bits). The significant bits of each pixel
/// form a centered value in [-1, 1]; the label is the class whose fixed
/// random +-1 template (tiled over blocks) has the largest correlation with
/// those values.
/// Templates depend only on the seed. Bits outside significant_slices are
/// pure noise.
LabeledDataset synth_bit_task(const SynthTaskConfig& config);

/// Label function of synth_bit_task applied to an arbitrary image; returns -1
/// when the winning margin is below config.margin.
int synth_label(const SynthTaskConfig& config, const PixelTensor& image);

/// First `count` samples (or all when count exceeds the size).
LabeledDataset head(const LabeledDataset& dataset, std::size_t count);

}  // namespace cbnn
