// cbnn: pipeline driver.
//
//   cbnn convert     --input batch.bin --out sliced.bin [--bits N] [--prune P]
//   cbnn synth       --config run.ini --out dir
//   cbnn train       --config run.ini --out dir
//   cbnn eval        --config run.ini --checkpoint model.cbnn
//   cbnn sensitivity --config run.ini --checkpoint model.cbnn --out dir
//   cbnn rebuild     --config run.ini --checkpoint model.cbnn --out dir
//   cbnn cost        (--config run.ini | --preset cifar10 [--bits N --prune P])
//   cbnn bench       [--m --n --k --reps] [--network]
//
// Failures print one line to stderr, "error kind=<usage|data|numeric> msg=...",
// and exit with 1, 2 or 3 respectively.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "cbnn/bench.hpp"
#include "cbnn/bitslice.hpp"
#include "cbnn/checkpoint.hpp"
#include "cbnn/config.hpp"
#include "cbnn/error.hpp"
#include "cbnn/parallel.hpp"
#include "cbnn/rebuild.hpp"
#include "cbnn/sensitivity.hpp"
#include "cbnn/training.hpp"

namespace fs = std::filesystem;
using namespace cbnn;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string out;
  std::string checkpoint;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write " + path.string());
  f << text;
  if (!f) throw FormatError("write failed for " + path.string());
}

fs::path out_dir(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
  fs::create_directories(c.out);
  return c.out;
}

RunConfig resolve(const Common& c) {
  if (c.config.empty()) throw ConfigError("--config is required");
  RunConfig rc = load_config(c.config);
  if (c.seed) {
    rc.train.seed = *c.seed;
    rc.sensitivity.seed = *c.seed;
  }
  // Echo the resolved configuration so a run can be reproduced from its log.
  std::cerr << "# resolved configuration\n" << config_text(rc) << "# end configuration\n";
  return rc;
}

const ArchitectureSpec& need_arch(const RunConfig& rc) {
  if (!rc.arch) throw ConfigError("config has no [arch] section");
  return *rc.arch;
}

Checkpoint need_checkpoint(const Common& c) {
  if (c.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  return load_checkpoint(c.checkpoint);
}

void log_epoch(const EpochRecord& r) {
  std::fprintf(stderr, "epoch %d loss %.6f val_err %.4f\n", r.epoch, r.train_loss, r.val_err);
}

int cmd_convert(const std::string& input, const std::string& output, int bits, int prune,
                std::size_t limit) {
  const auto ds = load_records(input, RecordLayout{}, Split::train, limit);
  std::ofstream out(output, std::ios::binary);
  if (!out) throw FormatError("cannot write " + output);
  const auto pruned = slice_prefix(prune);
  int channels = 0;
  for (const auto& img : ds.images) {
    BitSlicedTensor t = int2b(img, bits);
    if (prune > 0) t = prune_slices(t, pruned);
    write_bitsliced(out, t);
    channels = t.channels();
  }
  if (!out) throw FormatError("write failed for " + output);
  std::printf("records=%zu channels=%d\n", ds.size(), channels);
  return 0;
}

int cmd_synth(const Common& c) {
  const RunConfig rc = resolve(c);
  const fs::path dir = out_dir(c);
  DataConfig d = rc.data;
  d.source = "synth";
  auto [train, test] = load_datasets(d);
  write_records((dir / "train.bin").string(), train);
  write_records((dir / "test.bin").string(), test);
  std::printf("train=%zu test=%zu\n", train.size(), test.size());
  return 0;
}

int cmd_train(const Common& c) {
  const RunConfig rc = resolve(c);
  const ArchitectureSpec& arch = need_arch(rc);
  const fs::path dir = out_dir(c);
  auto [train_set, test_set] = load_datasets(rc.data);
  write_text(dir / "config.resolved", config_text(rc));
  TrainResult res = train(arch, rc.train, train_set, test_set, {}, log_epoch);
  Checkpoint ckpt{arch, res.state.params, {rc.train.seed, static_cast<std::uint32_t>(rc.train.epochs), 0.0}};
  ckpt.meta.final_err = res.history.empty() ? evaluate(arch, res.state.params, test_set)
                                            : res.history.back().val_err;
  save_checkpoint((dir / "model.cbnn").string(), ckpt);
  write_text(dir / "history.csv", history_csv(res.history));
  std::printf("err=%.4f\n", ckpt.meta.final_err);
  return 0;
}

int cmd_eval(const Common& c) {
  const RunConfig rc = resolve(c);
  const Checkpoint ckpt = need_checkpoint(c);
  auto [train_set, test_set] = load_datasets(rc.data);
  const double err = evaluate(ckpt.arch, ckpt.params, test_set);
  std::printf("err=%.4f samples=%zu\n", err, test_set.size());
  return 0;
}

int cmd_sensitivity(const Common& c) {
  const RunConfig rc = resolve(c);
  const Checkpoint ckpt = need_checkpoint(c);
  const fs::path dir = out_dir(c);
  auto [train_set, test_set] = load_datasets(rc.data);
  const InferenceModel model(ckpt.arch, ckpt.params);
  const auto report = analyze(model, test_set, rc.sensitivity);
  write_text(dir / "sensitivity.csv", sensitivity_csv(report));
  write_text(dir / "sensitivity_plot.csv", sensitivity_plot_data(report));
  std::printf("%s", sensitivity_csv(report).c_str());
  return 0;
}

int cmd_rebuild(const Common& c) {
  const RunConfig rc = resolve(c);
  const Checkpoint ckpt = need_checkpoint(c);
  const fs::path dir = out_dir(c);
  auto [train_set, test_set] = load_datasets(rc.data);
  const InferenceModel model(ckpt.arch, ckpt.params);

  std::vector<int> prunable;
  if (rc.rebuild.p) {
    prunable = slice_prefix(*rc.rebuild.p);
  } else {
    SensitivityConfig sc = rc.sensitivity;
    sc.mode = SensitivityMode::stack;
    const auto report = analyze(model, test_set, sc);
    write_text(dir / "sensitivity.csv", sensitivity_csv(report));
    write_text(dir / "sensitivity_plot.csv", sensitivity_plot_data(report));
    prunable = report.prunable;
  }
  std::fprintf(stderr, "pruning slices %s\n", slice_spec(prunable).c_str());
  const auto res = rebuild_and_retrain(model, prunable, train_set, test_set, rc.train,
                                       rc.rebuild.strict, log_epoch);
  Checkpoint compact{res.compact_arch, res.training.state.params,
                     {rebuild_seed(rc.train.seed), static_cast<std::uint32_t>(rc.train.epochs),
                      res.report.compact_err}};
  save_checkpoint((dir / "compact.cbnn").string(), compact);
  write_text(dir / "history.csv", history_csv(res.training.history));
  write_text(dir / "compression.csv", compression_csv(res.report));
  std::printf("%s", compression_csv(res.report).c_str());
  return 0;
}

int cmd_cost(const Common& c, const std::string& preset, int bits, int prune) {
  ArchitectureSpec arch;
  if (!preset.empty()) {
    std::string text = "preset = " + preset + "\n";
    if (bits > 0) text += "reconstruct_bits = " + std::to_string(bits) + "\n";
    if (prune > 0) text += "prune = " + std::to_string(prune) + "\n";
    arch = parse_arch(text);
  } else {
    const RunConfig rc = resolve(c);
    arch = need_arch(rc);
  }
  const CostReport r = cost_model(arch);
  std::printf("size_mb=%.2f gops=%.2f\n", r.size_mb, r.gops);
  if (!c.out.empty()) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "arch,weights,size_bits,size_mb,macs,gops\n%s,%llu,%llu,%.6f,%llu,%.6f\n",
                  arch.name.c_str(), static_cast<unsigned long long>(r.weights),
                  static_cast<unsigned long long>(r.size_bits), r.size_mb,
                  static_cast<unsigned long long>(r.macs), r.gops);
    write_text(out_dir(c) / "cost.csv", buf);
  }
  return 0;
}

int cmd_bench(const Common& c, int m, int n, int k, int reps, bool network, int prune) {
  std::vector<BenchReport> reports;
  const std::uint64_t seed = c.seed.value_or(1);
  reports.push_back(bench_self(m, n, k, reps, seed));
  reports.push_back(bench_gemm(m, n, k, reps, seed));
  if (network) {
    // Baseline BNN first, then the reconstructed net the compact one is shrunk from.
    const ArchitectureSpec rec = reconstruct_arch(baseline_cifar_arch(), 8);
    const ArchitectureSpec compact = shrink_arch(rec, 8, prune);
    for (const auto& base : {baseline_cifar_arch(), rec}) {
      auto r = bench_networks(base, compact, 2, reps, seed);
      reports.push_back(r);
      const double gops_ratio = cost_model(base).gops / cost_model(compact).gops;
      std::fprintf(stderr, "network %s: speedup %.3f vs gops ratio %.3f\n", base.name.c_str(), r.speedup,
                   gops_ratio);
    }
  }
  const std::string csv = bench_csv(reports);
  std::printf("%s", csv.c_str());
  if (!c.out.empty()) write_text(out_dir(c) / "bench.csv", csv);
  return 0;
}

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::data: return "data";
    case ErrorKind::numeric: return "numeric";
  }
  return "data";
}

int fail(ErrorKind kind, std::string msg) {
  for (auto& ch : msg)
    if (ch == '\n') ch = ' ';
  std::fprintf(stderr, "error kind=%s msg=%s\n", kind_name(kind), msg.c_str());
  return static_cast<int>(kind);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compact binarized network pipeline"};
  app.require_subcommand(1);
  Common common;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Override training and sensitivity seeds");
  app.add_option("--config", common.config, "Run configuration file");
  app.add_option("--threads", common.threads, "Worker thread cap")->check(CLI::Range(1, 1024));
  app.add_option("--out", common.out, "Output directory (or file for convert)");
  app.add_option("--checkpoint", common.checkpoint, "Checkpoint to load");
  seed_opt->expected(1);

  std::string input;
  int bits = 0, prune = 0;
  std::size_t limit = 0;
  auto* convert = app.add_subcommand("convert", "Bit-slice a record file");
  convert->add_option("--input", input, "Record file (CIFAR-10 layout)")->required();
  convert->add_option("--bits", bits, "Slices per channel (0: from the bound)");
  convert->add_option("--prune", prune, "Drop slices 1..P");
  convert->add_option("--limit", limit, "Read at most this many records");

  auto* synth = app.add_subcommand("synth", "Write the synthetic task as record files");
  auto* train_cmd = app.add_subcommand("train", "Train and write a checkpoint");
  auto* eval = app.add_subcommand("eval", "Test error of a checkpoint");
  auto* sens = app.add_subcommand("sensitivity", "Slice sensitivity report");
  auto* rebuild = app.add_subcommand("rebuild", "Sensitivity, shrink and retrain");

  std::string preset;
  auto* cost = app.add_subcommand("cost", "Model size and GOPs");
  cost->add_option("--preset", preset, "cifar10 | svhn | gtsrb");
  cost->add_option("--bits", bits, "Reconstruct with N slices");
  cost->add_option("--prune", prune, "Shrink for P pruned slices");

  int m = 512, n = 512, k = 512, reps = 10, bench_prune = 4;
  bool network = false;
  auto* bench = app.add_subcommand("bench", "Kernel and network timing");
  bench->add_option("--m", m);
  bench->add_option("--n", n);
  bench->add_option("--k", k);
  bench->add_option("--reps", reps, "Timed repetitions (median)");
  bench->add_flag("--network", network, "Also time baseline vs compact inference");
  bench->add_option("--prune", bench_prune, "P for the compact network");

  // Global flags are accepted after the subcommand too.
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(ErrorKind::usage, e.what());
  }
  if (*seed_opt) common.seed = seed;

  try {
    set_thread_count(common.threads);
    if (*convert) {
      if (common.out.empty()) throw ConfigError("--out is required");
      return cmd_convert(input, common.out, bits, prune, limit);
    }
    if (*synth) return cmd_synth(common);
    if (*train_cmd) return cmd_train(common);
    if (*eval) return cmd_eval(common);
    if (*sens) return cmd_sensitivity(common);
    if (*rebuild) return cmd_rebuild(common);
    if (*cost) return cmd_cost(common, preset, bits, prune);
    if (*bench) return cmd_bench(common, m, n, k, reps, network, bench_prune);
  } catch (const Error& e) {
    return fail(e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(ErrorKind::data, e.what());
  } catch (const std::bad_alloc&) {
    return fail(ErrorKind::numeric, "out of memory");
  } catch (const std::exception& e) {
    return fail(ErrorKind::data, e.what());
  }
  return fail(ErrorKind::usage, "no subcommand");
}
