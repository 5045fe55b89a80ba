#include "cbnn/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "cbnn/error.hpp"
#include "cbnn/rebuild.hpp"

namespace cbnn {

namespace {

struct Entry {
  std::string key;
  std::string value;
  int line = 0;
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string where(int line) { return "config line " + std::to_string(line) + ": "; }

template <typename T>
T parse_int(const Entry& e) {
  T v{};
  const char* end = e.value.data() + e.value.size();
  auto [p, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || p != end)
    throw ConfigError(where(e.line) + e.key + " expects an integer, got '" + e.value + "'");
  return v;
}

double parse_double(const Entry& e) {
  double v{};
  const char* end = e.value.data() + e.value.size();
  auto [p, ec] = std::from_chars(e.value.data(), end, v);
  if (ec != std::errc() || p != end)
    throw ConfigError(where(e.line) + e.key + " expects a number, got '" + e.value + "'");
  return v;
}

bool parse_bool(const Entry& e) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  throw ConfigError(where(e.line) + e.key + " expects true or false, got '" + e.value + "'");
}

std::vector<int> parse_int_list(const Entry& e) {
  std::vector<int> out;
  if (e.value.empty() || e.value == "none") return out;
  std::stringstream ss(e.value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    Entry sub{e.key, trim(item), e.line};
    out.push_back(parse_int<int>(sub));
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

using Sections = std::map<std::string, std::vector<Entry>>;

Sections split_sections(const std::string& text, bool allow_sections) {
  Sections out;
  std::string section = allow_sections ? "" : "arch";
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (!allow_sections || s.back() != ']')
        throw ConfigError(where(line) + "unexpected section header '" + s + "'");
      section = trim(std::string_view(s).substr(1, s.size() - 2));
      static const std::set<std::string> known{"arch", "data", "train", "sensitivity", "rebuild"};
      if (!known.count(section)) throw ConfigError(where(line) + "unknown section [" + section + "]");
      if (out.count(section)) throw ConfigError(where(line) + "duplicate section [" + section + "]");
      out[section];
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError(where(line) + "expected key = value");
    if (section.empty()) throw ConfigError(where(line) + "key outside any section");
    out[section].push_back({trim(s.substr(0, eq)), trim(s.substr(eq + 1)), line});
  }
  return out;
}

// Rejects repeated keys except those listed as repeatable.
void check_unique(const std::vector<Entry>& entries, const std::set<std::string>& repeatable = {}) {
  std::set<std::string> seen;
  for (const auto& e : entries)
    if (!repeatable.count(e.key) && !seen.insert(e.key).second)
      throw ConfigError(where(e.line) + "duplicate key '" + e.key + "'");
}

[[noreturn]] void unknown(const Entry& e, const char* section) {
  throw ConfigError(where(e.line) + "unknown key '" + e.key + "' in [" + section + "]");
}

LayerSpec parse_layer(const Entry& e) {
  std::istringstream in(e.value);
  std::string kind;
  in >> kind;
  LayerSpec l;
  if (kind == "conv") {
    l.kind = LayerKind::conv;
  } else if (kind == "dense") {
    l.kind = LayerKind::dense;
  } else if (kind == "maxpool") {
    l.kind = LayerKind::maxpool;
  } else if (kind == "batchnorm") {
    l.kind = LayerKind::batchnorm;
    l.precision = Precision::full;
  } else if (kind == "sign") {
    l.kind = LayerKind::sign_activation;
  } else {
    throw ConfigError(where(e.line) + "unknown layer kind '" + kind + "'");
  }
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ConfigError(where(e.line) + "expected name=value, got '" + tok + "'");
    const Entry a{tok.substr(0, eq), tok.substr(eq + 1), e.line};
    const bool weighted = l.weighted();
    if (a.key == "in" && weighted) {
      l.in_channels = parse_int<int>(a);
    } else if (a.key == "out" && weighted) {
      l.out_channels = parse_int<int>(a);
    } else if (a.key == "kernel" && l.kind == LayerKind::conv) {
      l.kernel = parse_int<int>(a);
    } else if (a.key == "precision" && weighted) {
      if (a.value == "binary")
        l.precision = Precision::binary;
      else if (a.value == "full")
        l.precision = Precision::full;
      else
        throw ConfigError(where(e.line) + "precision must be binary or full");
    } else if (a.key == "pool" && l.kind == LayerKind::maxpool) {
      l.pool = parse_int<int>(a);
    } else if (a.key == "channels" && l.kind == LayerKind::batchnorm) {
      l.in_channels = l.out_channels = parse_int<int>(a);
    } else {
      throw ConfigError(where(e.line) + "attribute '" + a.key + "' not valid for " + kind);
    }
  }
  return l;
}

ArchitectureSpec arch_from(const std::vector<Entry>& entries) {
  check_unique(entries, {"layer"});
  const Entry* preset = nullptr;
  for (const auto& e : entries)
    if (e.key == "preset") preset = &e;

  if (preset) {
    ArchitectureSpec arch;
    if (preset->value == "cifar10")
      arch = baseline_cifar_arch();
    else if (preset->value == "svhn")
      arch = svhn_baseline_arch();
    else if (preset->value == "gtsrb")
      arch = gtsrb_baseline_arch();
    else
      throw ConfigError(where(preset->line) + "unknown preset '" + preset->value + "'");
    int bits = 0, prune = 0;
    for (const auto& e : entries) {
      if (e.key == "preset") continue;
      if (e.key == "reconstruct_bits")
        bits = parse_int<int>(e);
      else if (e.key == "prune")
        prune = parse_int<int>(e);
      else
        throw ConfigError(where(e.line) + "key '" + e.key + "' cannot be combined with preset");
    }
    if (bits > 0) arch = reconstruct_arch(arch, bits);
    if (prune > 0) {
      if (bits == 0) throw ConfigError(where(preset->line) + "prune requires reconstruct_bits");
      arch = shrink_arch(arch, bits, prune);
    }
    return arch;
  }

  ArchitectureSpec arch;
  bool explicit_channels = false;
  for (const auto& e : entries) {
    if (e.key == "name") {
      arch.name = e.value;
    } else if (e.key == "width") {
      arch.width = parse_int<int>(e);
    } else if (e.key == "height") {
      arch.height = parse_int<int>(e);
    } else if (e.key == "channels") {
      arch.channels = parse_int<int>(e);
      explicit_channels = true;
    } else if (e.key == "encoding") {
      if (e.value == "pixels")
        arch.encoding = InputEncoding::pixels;
      else if (e.value == "bitsliced")
        arch.encoding = InputEncoding::bitsliced;
      else
        throw ConfigError(where(e.line) + "encoding must be pixels or bitsliced");
    } else if (e.key == "base_channels") {
      arch.base_channels = parse_int<int>(e);
    } else if (e.key == "bits") {
      arch.bits = parse_int<int>(e);
    } else if (e.key == "magnitude_bound") {
      arch.magnitude_bound = parse_int<std::uint32_t>(e);
    } else if (e.key == "pruned_slices") {
      arch.pruned_slices = parse_int_list(e);
    } else if (e.key == "classes") {
      arch.classes = parse_int<int>(e);
    } else if (e.key == "layer") {
      arch.layers.push_back(parse_layer(e));
    } else {
      unknown(e, "arch");
    }
  }
  if (!explicit_channels)
    arch.channels = arch.encoding == InputEncoding::bitsliced
                        ? arch.base_channels * static_cast<int>(arch.kept_slices().size())
                        : arch.base_channels;
  try {
    arch.validate();
  } catch (const Error& err) {
    throw ConfigError(std::string("invalid architecture: ") + err.what());
  }
  return arch;
}

void apply_data(DataConfig& d, const std::vector<Entry>& entries) {
  check_unique(entries);
  for (const auto& e : entries) {
    if (e.key == "source") {
      if (e.value != "synth" && e.value != "cifar10" && e.value != "records")
        throw ConfigError(where(e.line) + "source must be synth, cifar10 or records");
      d.source = e.value;
    } else if (e.key == "path") {
      d.path = e.value;
    } else if (e.key == "train_path") {
      d.train_path = e.value;
    } else if (e.key == "test_path") {
      d.test_path = e.value;
    } else if (e.key == "train_limit") {
      d.train_limit = parse_int<std::size_t>(e);
    } else if (e.key == "test_limit") {
      d.test_limit = parse_int<std::size_t>(e);
    } else if (e.key == "record_width") {
      d.layout.width = parse_int<int>(e);
    } else if (e.key == "record_height") {
      d.layout.height = parse_int<int>(e);
    } else if (e.key == "record_channels") {
      d.layout.channels = parse_int<int>(e);
    } else if (e.key == "record_classes") {
      d.layout.class_count = parse_int<int>(e);
    } else if (e.key == "samples") {
      d.synth.samples = parse_int<std::size_t>(e);
    } else if (e.key == "test_samples") {
      d.test_samples = parse_int<std::size_t>(e);
    } else if (e.key == "width") {
      d.synth.width = parse_int<int>(e);
    } else if (e.key == "height") {
      d.synth.height = parse_int<int>(e);
    } else if (e.key == "channels") {
      d.synth.channels = parse_int<int>(e);
    } else if (e.key == "bits") {
      d.synth.bits = parse_int<int>(e);
    } else if (e.key == "significant_slices") {
      d.synth.significant_slices = parse_int_list(e);
    } else if (e.key == "classes") {
      d.synth.classes = parse_int<int>(e);
    } else if (e.key == "block") {
      d.synth.block = parse_int<int>(e);
    } else if (e.key == "seed") {
      d.synth.seed = parse_int<std::uint64_t>(e);
    } else if (e.key == "stream") {
      d.synth.stream = parse_int<std::uint64_t>(e);
    } else if (e.key == "margin") {
      d.synth.margin = parse_double(e);
    } else {
      unknown(e, "data");
    }
  }
}

void apply_train(TrainConfig& t, const std::vector<Entry>& entries) {
  check_unique(entries);
  for (const auto& e : entries) {
    if (e.key == "lambda")
      t.lambda = parse_double(e);
    else if (e.key == "learning_rate")
      t.learning_rate = parse_double(e);
    else if (e.key == "lr_decay")
      t.lr_decay = parse_double(e);
    else if (e.key == "epochs")
      t.epochs = parse_int<int>(e);
    else if (e.key == "batch_size")
      t.batch_size = parse_int<int>(e);
    else if (e.key == "seed")
      t.seed = parse_int<std::uint64_t>(e);
    else if (e.key == "beta1")
      t.beta1 = parse_double(e);
    else if (e.key == "beta2")
      t.beta2 = parse_double(e);
    else if (e.key == "adam_epsilon")
      t.adam_epsilon = parse_double(e);
    else if (e.key == "bn_momentum")
      t.bn_momentum = parse_double(e);
    else
      unknown(e, "train");
  }
  t.validate();
}

void apply_sensitivity(SensitivityConfig& s, const std::vector<Entry>& entries) {
  check_unique(entries);
  for (const auto& e : entries) {
    if (e.key == "trials") {
      s.trials = parse_int<int>(e);
    } else if (e.key == "err_threshold") {
      s.err_threshold = parse_double(e);
    } else if (e.key == "seed") {
      s.seed = parse_int<std::uint64_t>(e);
    } else if (e.key == "mode") {
      if (e.value == "single")
        s.mode = SensitivityMode::single;
      else if (e.value == "stack")
        s.mode = SensitivityMode::stack;
      else
        throw ConfigError(where(e.line) + "mode must be single or stack");
    } else if (e.key == "err_ref") {
      if (e.value == "auto")
        s.err_ref.reset();
      else
        s.err_ref = parse_double(e);
    } else if (e.key == "include_empty_row") {
      s.include_empty_row = parse_bool(e);
    } else {
      unknown(e, "sensitivity");
    }
  }
  s.validate();
}

void apply_rebuild(RebuildConfig& r, const std::vector<Entry>& entries) {
  check_unique(entries);
  for (const auto& e : entries) {
    if (e.key == "p") {
      if (e.value == "auto")
        r.p.reset();
      else
        r.p = parse_int<int>(e);
    } else if (e.key == "strict") {
      r.strict = parse_bool(e);
    } else {
      unknown(e, "rebuild");
    }
  }
}

}  // namespace

ArchitectureSpec parse_arch(const std::string& text) {
  auto sections = split_sections(text, false);
  return arch_from(sections["arch"]);
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  auto sections = split_sections(text, true);
  if (auto it = sections.find("arch"); it != sections.end()) c.arch = arch_from(it->second);
  if (auto it = sections.find("data"); it != sections.end()) apply_data(c.data, it->second);
  if (auto it = sections.find("train"); it != sections.end()) apply_train(c.train, it->second);
  if (auto it = sections.find("sensitivity"); it != sections.end())
    apply_sensitivity(c.sensitivity, it->second);
  if (auto it = sections.find("rebuild"); it != sections.end()) apply_rebuild(c.rebuild, it->second);
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string arch_text(const ArchitectureSpec& a) {
  std::ostringstream out;
  out << "name = " << a.name << '\n'
      << "width = " << a.width << '\n'
      << "height = " << a.height << '\n'
      << "channels = " << a.channels << '\n'
      << "encoding = " << to_string(a.encoding) << '\n'
      << "base_channels = " << a.base_channels << '\n'
      << "bits = " << a.bits << '\n'
      << "magnitude_bound = " << a.magnitude_bound << '\n'
      << "pruned_slices = " << join(a.pruned_slices) << '\n'
      << "classes = " << a.classes << '\n';
  for (const auto& l : a.layers) {
    out << "layer = ";
    switch (l.kind) {
      case LayerKind::conv:
        out << "conv in=" << l.in_channels << " out=" << l.out_channels << " kernel=" << l.kernel
            << " precision=" << to_string(l.precision);
        break;
      case LayerKind::dense:
        out << "dense in=" << l.in_channels << " out=" << l.out_channels
            << " precision=" << to_string(l.precision);
        break;
      case LayerKind::maxpool:
        out << "maxpool pool=" << l.pool;
        break;
      case LayerKind::batchnorm:
        out << "batchnorm channels=" << l.out_channels;
        break;
      case LayerKind::sign_activation:
        out << "sign";
        break;
    }
    out << '\n';
  }
  return out.str();
}

std::string config_text(const RunConfig& c) {
  std::ostringstream out;
  if (c.arch) out << "[arch]\n" << arch_text(*c.arch) << '\n';
  const auto& d = c.data;
  out << "[data]\n"
      << "source = " << d.source << '\n';
  if (!d.path.empty()) out << "path = " << d.path << '\n';
  if (!d.train_path.empty()) out << "train_path = " << d.train_path << '\n';
  if (!d.test_path.empty()) out << "test_path = " << d.test_path << '\n';
  out << "train_limit = " << d.train_limit << '\n'
      << "test_limit = " << d.test_limit << '\n'
      << "record_width = " << d.layout.width << '\n'
      << "record_height = " << d.layout.height << '\n'
      << "record_channels = " << d.layout.channels << '\n'
      << "record_classes = " << d.layout.class_count << '\n'
      << "samples = " << d.synth.samples << '\n'
      << "test_samples = " << d.test_samples << '\n'
      << "width = " << d.synth.width << '\n'
      << "height = " << d.synth.height << '\n'
      << "channels = " << d.synth.channels << '\n'
      << "bits = " << d.synth.bits << '\n'
      << "significant_slices = " << join(d.synth.significant_slices) << '\n'
      << "classes = " << d.synth.classes << '\n'
      << "block = " << d.synth.block << '\n'
      << "seed = " << d.synth.seed << '\n'
      << "stream = " << d.synth.stream << '\n'
      << "margin = " << num(d.synth.margin) << "\n\n";
  const auto& t = c.train;
  out << "[train]\n"
      << "lambda = " << num(t.lambda) << '\n'
      << "learning_rate = " << num(t.learning_rate) << '\n'
      << "lr_decay = " << num(t.lr_decay) << '\n'
      << "epochs = " << t.epochs << '\n'
      << "batch_size = " << t.batch_size << '\n'
      << "seed = " << t.seed << '\n'
      << "beta1 = " << num(t.beta1) << '\n'
      << "beta2 = " << num(t.beta2) << '\n'
      << "adam_epsilon = " << num(t.adam_epsilon) << '\n'
      << "bn_momentum = " << num(t.bn_momentum) << "\n\n";
  const auto& s = c.sensitivity;
  out << "[sensitivity]\n"
      << "trials = " << s.trials << '\n'
      << "err_threshold = " << num(s.err_threshold) << '\n'
      << "seed = " << s.seed << '\n'
      << "mode = " << to_string(s.mode) << '\n'
      << "err_ref = " << (s.err_ref ? num(*s.err_ref) : std::string("auto")) << '\n'
      << "include_empty_row = " << (s.include_empty_row ? "true" : "false") << "\n\n";
  out << "[rebuild]\n"
      << "p = " << (c.rebuild.p ? std::to_string(*c.rebuild.p) : std::string("auto")) << '\n'
      << "strict = " << (c.rebuild.strict ? "true" : "false") << '\n';
  return out.str();
}

std::pair<LabeledDataset, LabeledDataset> load_datasets(const DataConfig& d) {
  if (d.source == "cifar10") {
    if (d.path.empty()) throw ConfigError("data source cifar10 needs path");
    return load_cifar10(d.path, d.train_limit, d.test_limit);
  }
  if (d.source == "records") {
    if (d.train_path.empty() || d.test_path.empty())
      throw ConfigError("data source records needs train_path and test_path");
    return {load_records(d.train_path, d.layout, Split::train, d.train_limit),
            load_records(d.test_path, d.layout, Split::test, d.test_limit)};
  }
  SynthTaskConfig train_cfg = d.synth;
  SynthTaskConfig test_cfg = d.synth;
  test_cfg.samples = d.test_samples;
  test_cfg.stream = d.synth.stream + 1;
  auto train = synth_bit_task(train_cfg);
  auto test = synth_bit_task(test_cfg);
  test.split = Split::test;
  return {std::move(train), std::move(test)};
}

}  // namespace cbnn
