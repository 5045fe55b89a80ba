#include "cbnn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "binary_io.hpp"
#include "cbnn/config.hpp"
#include "cbnn/error.hpp"

namespace cbnn {

namespace {

void put_floats(std::ostream& out, const std::vector<float>& v) {
  for (float f : v) io::put<float>(out, f);
}

std::vector<float> get_floats(std::istream& in, std::size_t n, const char* what) {
  std::vector<float> v(n);
  for (auto& f : v) f = io::get<float>(in, what);
  return v;
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  ckpt.arch.validate();
  check_params(ckpt.arch, ckpt.params);
  out.write("CBNN", 4);
  io::put<std::uint32_t>(out, kCheckpointVersion);
  io::put_string(out, arch_text(ckpt.arch));
  io::put<std::uint64_t>(out, ckpt.meta.seed);
  io::put<std::uint32_t>(out, ckpt.meta.epochs);
  io::put<double>(out, ckpt.meta.final_err);
  for (std::size_t i = 0; i < ckpt.arch.layers.size(); ++i) {
    const LayerSpec& l = ckpt.arch.layers[i];
    const LayerParams& p = ckpt.params.layers[i];
    if (l.weighted()) {
      if (l.precision == Precision::binary) {
        std::vector<std::uint64_t> words((p.weights.size() + 63) / 64, 0);
        for (std::size_t k = 0; k < p.weights.size(); ++k)
          if (p.weights[k] >= 0.0f) words[k / 64] |= 1ULL << (k % 64);
        for (auto w : words) io::put<std::uint64_t>(out, w);
      } else {
        put_floats(out, p.weights);
      }
    } else if (l.kind == LayerKind::batchnorm) {
      put_floats(out, p.scale);
      put_floats(out, p.shift);
      put_floats(out, p.mean);
      put_floats(out, p.variance);
    }
  }
  if (!out) throw FormatError("checkpoint write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4] = {};
  if (!in.read(magic, 4) || std::memcmp(magic, "CBNN", 4) != 0)
    throw FormatError("not a checkpoint: bad magic at byte offset 0");
  const auto version = io::get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  try {
    ckpt.arch = parse_arch(io::get_string(in, "architecture"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint architecture: ") + e.what());
  }
  ckpt.meta.seed = io::get<std::uint64_t>(in, "seed");
  ckpt.meta.epochs = io::get<std::uint32_t>(in, "epochs");
  ckpt.meta.final_err = io::get<double>(in, "final_err");
  ckpt.params.layers.resize(ckpt.arch.layers.size());
  for (std::size_t i = 0; i < ckpt.arch.layers.size(); ++i) {
    const LayerSpec& l = ckpt.arch.layers[i];
    LayerParams& p = ckpt.params.layers[i];
    if (l.weighted()) {
      const std::size_t n = l.weight_count();
      if (l.precision == Precision::binary) {
        p.weights.resize(n);
        std::uint64_t word = 0;
        for (std::size_t k = 0; k < n; ++k) {
          if (k % 64 == 0) word = io::get<std::uint64_t>(in, "binary weights");
          p.weights[k] = (word >> (k % 64)) & 1ULL ? 1.0f : -1.0f;
        }
      } else {
        p.weights = get_floats(in, n, "weights");
      }
    } else if (l.kind == LayerKind::batchnorm) {
      const auto n = static_cast<std::size_t>(l.out_channels);
      p.scale = get_floats(in, n, "batchnorm scale");
      p.shift = get_floats(in, n, "batchnorm shift");
      p.mean = get_floats(in, n, "batchnorm mean");
      p.variance = get_floats(in, n, "batchnorm variance");
    }
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError("trailing bytes after checkpoint at byte offset " +
                      std::to_string(static_cast<long long>(in.tellg())));
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  return read_checkpoint(in);
}

ParameterStore checkpoint_params(const ArchitectureSpec& arch, const ParameterStore& params) {
  check_params(arch, params);
  ParameterStore out = params;
  for (std::size_t i = 0; i < arch.layers.size(); ++i)
    if (arch.layers[i].weighted() && arch.layers[i].precision == Precision::binary)
      for (auto& w : out.layers[i].weights) w = w >= 0.0f ? 1.0f : -1.0f;
  return out;
}

}  // namespace cbnn
