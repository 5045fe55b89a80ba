#include "cbnn/data.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>

#include "cbnn/error.hpp"
#include "cbnn/rng.hpp"

namespace cbnn {

void LabeledDataset::validate() const {
  if (images.size() != labels.size())
    throw ShapeError("dataset has " + std::to_string(images.size()) + " images but " +
                     std::to_string(labels.size()) + " labels");
  if (class_count < 1) throw ShapeError("dataset class_count must be positive");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= class_count)
      throw RangeError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                       " outside 0.." + std::to_string(class_count - 1));
  for (const auto& img : images) img.validate();
}

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

LabeledDataset load_records(const std::string& path, const RecordLayout& layout, Split split,
                            std::size_t limit) {
  if (layout.width < 1 || layout.height < 1 || layout.channels < 1 || layout.class_count < 1 ||
      layout.class_count > 256)
    throw ShapeError("invalid record layout");
  const auto bytes = read_file(path);
  const std::size_t rec = layout.record_bytes();
  const std::size_t plane = static_cast<std::size_t>(layout.width) * layout.height;

  LabeledDataset ds;
  ds.class_count = layout.class_count;
  ds.split = split;
  std::size_t count = bytes.size() / rec;
  if (bytes.size() % rec != 0 && (limit == 0 || limit > count))
    throw FormatError(path + ": truncated record at byte offset " + std::to_string(count * rec) +
                      " (" + std::to_string(bytes.size() - count * rec) + " of " +
                      std::to_string(rec) + " bytes)");
  if (limit > 0) count = std::min(count, limit);
  ds.images.reserve(count);
  ds.labels.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    const unsigned char* p = bytes.data() + r * rec;
    if (p[0] >= layout.class_count)
      throw FormatError(path + ": label " + std::to_string(p[0]) + " at byte offset " +
                        std::to_string(r * rec) + " exceeds class count " +
                        std::to_string(layout.class_count));
    PixelTensor img(layout.width, layout.height, layout.channels, 255);
    for (int c = 0; c < layout.channels; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        img.values[i * layout.channels + c] = p[1 + c * plane + i];
    ds.images.push_back(std::move(img));
    ds.labels.push_back(p[0]);
  }
  return ds;
}

void write_records(const std::string& path, const LabeledDataset& dataset) {
  dataset.validate();
  if (dataset.class_count > 256) throw RangeError("record labels are a single byte");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    const PixelTensor& img = dataset.images[r];
    if (img.magnitude_bound > 255) throw RangeError("record pixels are single bytes");
    const std::size_t plane = static_cast<std::size_t>(img.width) * img.height;
    std::vector<char> buf(1 + plane * img.channels);
    buf[0] = static_cast<char>(dataset.labels[r]);
    for (int c = 0; c < img.channels; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        buf[1 + c * plane + i] = static_cast<char>(img.values[i * img.channels + c]);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  if (!out) throw FormatError("write failed for " + path);
}

std::pair<LabeledDataset, LabeledDataset> load_cifar10(const std::string& directory,
                                                       std::size_t train_limit,
                                                       std::size_t test_limit) {
  const RecordLayout layout;
  LabeledDataset train;
  train.class_count = layout.class_count;
  train.split = Split::train;
  for (int b = 1; b <= 5; ++b) {
    if (train_limit > 0 && train.size() >= train_limit) break;
    const std::size_t remaining = train_limit > 0 ? train_limit - train.size() : 0;
    auto part = load_records(directory + "/data_batch_" + std::to_string(b) + ".bin", layout,
                             Split::train, remaining);
    std::move(part.images.begin(), part.images.end(), std::back_inserter(train.images));
    train.labels.insert(train.labels.end(), part.labels.begin(), part.labels.end());
  }
  auto test = load_records(directory + "/test_batch.bin", layout, Split::test, test_limit);
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Synthetic bit-significance task

namespace {

struct SynthSetup {
  std::vector<int> slices;  // ascending
  double denom = 1.0;       // 2^k - 1
  std::size_t elements = 0;
  std::vector<std::vector<signed char>> templates;
};

SynthSetup prepare(const SynthTaskConfig& cfg) {
  if (cfg.width < 1 || cfg.height < 1 || cfg.channels < 1)
    throw ConfigError("synthetic image dimensions must be positive");
  if (cfg.bits < 1 || cfg.bits > 16) throw ConfigError("synthetic bits must lie in 1..16");
  if (cfg.classes < 2) throw ConfigError("synthetic task needs at least two classes");
  if (cfg.block < 1) throw ConfigError("synthetic block size must be positive");
  if (!(cfg.margin >= 0.0 && cfg.margin < 1.0)) throw ConfigError("margin must lie in [0, 1)");
  const std::set<int> unique(cfg.significant_slices.begin(), cfg.significant_slices.end());
  if (unique.empty() || unique.size() != cfg.significant_slices.size())
    throw ConfigError("significant_slices must be a non-empty set");
  if (*unique.begin() < 1 || *unique.rbegin() > cfg.bits)
    throw ConfigError("significant_slices must lie in 1.." + std::to_string(cfg.bits));

  SynthSetup s;
  s.slices.assign(unique.begin(), unique.end());
  s.elements = static_cast<std::size_t>(cfg.width) * cfg.height * cfg.channels;
  const std::size_t capacity = s.slices.size() * s.elements;
  if (capacity < 31 && static_cast<std::uint64_t>(cfg.classes) > (1ULL << capacity))
    throw ConfigError("more classes than the significant bits can distinguish");
  s.denom = static_cast<double>((1u << s.slices.size()) - 1);
  Rng rng(derive_key(cfg.seed, 0x54454d504cULL));
  const int bw = (cfg.width + cfg.block - 1) / cfg.block;
  const int bh = (cfg.height + cfg.block - 1) / cfg.block;
  s.templates.assign(cfg.classes, std::vector<signed char>(s.elements));
  for (auto& t : s.templates) {
    std::vector<signed char> cells(static_cast<std::size_t>(bw) * bh * cfg.channels);
    for (auto& v : cells) v = (rng.next_u64() >> 63) ? 1 : -1;
    for (int y = 0; y < cfg.height; ++y)
      for (int x = 0; x < cfg.width; ++x)
        for (int c = 0; c < cfg.channels; ++c)
          t[(static_cast<std::size_t>(y) * cfg.width + x) * cfg.channels + c] =
              cells[(static_cast<std::size_t>(y / cfg.block) * bw + x / cfg.block) * cfg.channels + c];
  }
  return s;
}

// Label and winning margin (as a fraction of the element count).
std::pair<int, double> score(const SynthSetup& s, const PixelTensor& img) {
  std::vector<double> centered(s.elements);
  for (std::size_t i = 0; i < s.elements; ++i) {
    unsigned sig = 0;
    for (std::size_t j = 0; j < s.slices.size(); ++j)
      sig |= ((img.values[i] >> (s.slices[j] - 1)) & 1u) << j;
    centered[i] = 2.0 * sig / s.denom - 1.0;
  }
  double best = -1e300, second = -1e300;
  int label = 0;
  for (std::size_t c = 0; c < s.templates.size(); ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < s.elements; ++i) acc += s.templates[c][i] * centered[i];
    if (acc > best) {
      second = best;
      best = acc;
      label = static_cast<int>(c);
    } else if (acc > second) {
      second = acc;
    }
  }
  return {label, (best - second) / static_cast<double>(s.elements)};
}

}  // namespace

int synth_label(const SynthTaskConfig& config, const PixelTensor& image) {
  const SynthSetup s = prepare(config);
  if (image.width != config.width || image.height != config.height ||
      image.channels != config.channels)
    throw ShapeError("image does not match the synthetic task shape");
  const auto [label, margin] = score(s, image);
  return margin >= config.margin ? label : -1;
}

LabeledDataset synth_bit_task(const SynthTaskConfig& config) {
  const SynthSetup s = prepare(config);
  const std::uint32_t bound = (1u << config.bits) - 1;
  LabeledDataset ds;
  ds.class_count = config.classes;
  ds.images.reserve(config.samples);
  ds.labels.reserve(config.samples);
  Rng rng(derive_key(derive_key(config.seed, 0x53414d50ULL), config.stream));
  constexpr int kMaxAttempts = 100000;
  for (std::size_t n = 0; n < config.samples; ++n) {
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxAttempts)
        throw ConfigError("synthetic margin too strict: no sample accepted after " +
                          std::to_string(kMaxAttempts) + " draws");
      PixelTensor img(config.width, config.height, config.channels, bound);
      for (auto& v : img.values) v = static_cast<std::uint16_t>(rng.below(bound + 1ULL));
      const auto [label, margin] = score(s, img);
      if (margin < config.margin) continue;
      ds.images.push_back(std::move(img));
      ds.labels.push_back(label);
      break;
    }
  }
  return ds;
}

LabeledDataset head(const LabeledDataset& dataset, std::size_t count) {
  LabeledDataset out;
  out.class_count = dataset.class_count;
  out.split = dataset.split;
  count = std::min(count, dataset.size());
  out.images.assign(dataset.images.begin(), dataset.images.begin() + count);
  out.labels.assign(dataset.labels.begin(), dataset.labels.begin() + count);
  return out;
}

}  // namespace cbnn
