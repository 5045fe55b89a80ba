// Acceptance runner: one PASS/FAIL line per criterion, detail lines indented.
//
//   acceptance            run every criterion
//   acceptance --only N   run criterion N (1..8)
//
// Exit status is nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "cbnn/bench.hpp"
#include "cbnn/bitslice.hpp"
#include "cbnn/data.hpp"
#include "cbnn/network.hpp"
#include "cbnn/rebuild.hpp"
#include "cbnn/rng.hpp"
#include "cbnn/sensitivity.hpp"
#include "cbnn/tensor.hpp"
#include "cbnn/training.hpp"
#include "oracles.hpp"

using namespace cbnn;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, const std::string& what) {
    details.push_back(std::string(ok ? "ok   " : "MISS ") + what);
    pass = pass && ok;
  }
  void note(const std::string& what) { details.push_back("     " + what); }
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Outcome o;
  const auto t0 = Clock::now();
  struct Row {
    const char* name;
    ArchitectureSpec arch;
    double size_mb, gops;
  };
  const auto rec = reconstruct_arch(baseline_cifar_arch(), 8);
  const std::vector<Row> rows{{"baseline CIFAR-10", baseline_cifar_arch(), 1.75, 1.23},
                              {"CBNN P=4", shrink_arch(rec, 8, 4), 0.45, 0.32},
                              {"SVHN baseline", svhn_baseline_arch(), 0.44, 0.31},
                              {"GTSRB baseline", gtsrb_baseline_arch(), 1.81, 3.89}};
  for (const auto& r : rows) {
    const auto c = cost_model(r.arch);
    o.check(std::abs(c.size_mb - r.size_mb) <= 0.01 && std::abs(c.gops - r.gops) <= 0.01,
            fmt("%-18s size %.4f MB (target %.2f), %.4f GOPs (target %.2f)", r.name, c.size_mb,
                r.size_mb, c.gops, r.gops));
  }
  const double t = since(t0);
  o.check(t < 1.0, fmt("runtime %.3f s < 1 s", t));
  return o;
}

Outcome criterion2() {
  Outcome o;
  const auto t0 = Clock::now();
  const double size_t_[] = {1.3, 1.7, 2.5, 3.9, 7.0};
  const double gops_t[] = {1.3, 1.7, 2.5, 3.8, 6.8};
  // Ratios are against the pixel-input baseline; compact nets shrink the reconstructed one.
  const auto base = baseline_cifar_arch();
  const auto rec = reconstruct_arch(base, 8);
  const auto bc = cost_model(base);
  for (int p = 1; p <= 5; ++p) {
    const auto r = compression_report(base, shrink_arch(rec, 8, p), 0.0, 0.0);
    const double ps = printed_ratio(bc.size_mb, r.compact_cost.size_mb);
    const double pg = printed_ratio(bc.gops, r.compact_cost.gops);
    o.check(std::abs(ps - size_t_[p - 1]) <= 0.1 && std::abs(pg - gops_t[p - 1]) <= 0.1,
            fmt("P=%d size %.2f/%.2f = %.3fx (target %.1f, exact %.3f); GOPs %.2f/%.2f = %.3fx "
                "(target %.1f, exact %.3f)",
                p, bc.size_mb, r.compact_cost.size_mb, ps, size_t_[p - 1], r.size_ratio, bc.gops,
                r.compact_cost.gops, pg, gops_t[p - 1], r.gops_ratio));
  }
  const double t = since(t0);
  o.check(t < 1.0, fmt("runtime %.3f s < 1 s", t));
  return o;
}

Outcome criterion3() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(0xC3);
  int gemm_bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const int m = 1 + static_cast<int>(rng.below(256));
    const int n = 1 + static_cast<int>(rng.below(256));
    const int k = 1 + static_cast<int>(rng.below(256));
    std::vector<int> a(static_cast<std::size_t>(m) * k), b(static_cast<std::size_t>(n) * k);
    for (auto& v : a) v = (rng.next_u64() & 1) ? 1 : -1;
    for (auto& v : b) v = (rng.next_u64() & 1) ? 1 : -1;
    const auto ref = oracle::gemm_bt(a, b, m, n, k);
    const auto pa = sign_binarize(DenseTensor({m, k}, std::vector<float>(a.begin(), a.end())));
    const auto pb = sign_binarize(DenseTensor({n, k}, std::vector<float>(b.begin(), b.end())));
    std::vector<std::int32_t> got(ref.size());
    binary_gemm(pa, pb, got);
    for (std::size_t i = 0; i < ref.size(); ++i)
      if (got[i] != ref[i]) {
        ++gemm_bad;
        break;
      }
  }
  o.check(gemm_bad == 0, fmt("binary_gemm: %d of 1000 random instances differ from the +-1 oracle", gemm_bad));

  // Packed convolution: bit-sliced im2col + XNOR GEMM against a direct
  // convolution over the +-1 planes with -1 padding.
  int conv_bad = 0;
  for (int t = 0; t < 100; ++t) {
    const int w = 1 + static_cast<int>(rng.below(12)), h = 1 + static_cast<int>(rng.below(12));
    const int c = 1 + static_cast<int>(rng.below(3));
    const int out = 1 + static_cast<int>(rng.below(16));
    const int k = 1 + 2 * static_cast<int>(rng.below(3));
    const std::uint32_t bound = static_cast<std::uint32_t>(1 + rng.below(255));
    const ConvGeometry g{k, 1, k / 2};
    const auto img = oracle::random_image(w, h, c, bound, rng);
    const auto bs = int2b(img);
    const int ch = bs.channels();
    std::vector<int> x(static_cast<std::size_t>(ch) * h * w);
    for (int q = 0; q < ch; ++q)
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) x[(q * h + y) * w + xx] = bs.at(y, xx, q) ? 1 : -1;
    std::vector<int> wt(static_cast<std::size_t>(out) * ch * k * k);
    for (auto& v : wt) v = (rng.next_u64() & 1) ? 1 : -1;
    const auto ref = oracle::conv2d<int>(x, ch, h, w, wt, out, k, 1, k / 2, -1);
    const auto cols = im2col(bs, g);
    const auto pw = sign_binarize(DenseTensor({out, ch * k * k}, std::vector<float>(wt.begin(), wt.end())));
    std::vector<std::int32_t> got(static_cast<std::size_t>(cols.rows()) * out);
    binary_gemm(cols, pw, got);  // (positions x out)
    bool same = true;
    const int positions = cols.rows();
    for (int oc = 0; oc < out; ++oc)
      for (int p = 0; p < positions; ++p) same &= got[p * out + oc] == ref[oc * positions + p];
    conv_bad += !same;
  }
  o.check(conv_bad == 0, fmt("packed conv: %d of 100 random configs differ from direct convolution", conv_bad));
  const double t = since(t0);
  o.check(t < 30.0, fmt("runtime %.2f s < 30 s", t));
  return o;
}

Outcome criterion4() {
  Outcome o;
  const auto t0 = Clock::now();
  PixelTensor img(256, 1, 3, 255);
  for (int v = 0; v < 256; ++v)
    for (int c = 0; c < 3; ++c) img.at(0, v, c) = static_cast<std::uint16_t>((v + 101 * c) % 256);
  const auto bs = int2b(img);
  int plane_bad = 0;
  for (int v = 0; v < 256; ++v)
    for (int c = 0; c < 3; ++c)
      for (int n = 1; n <= 8; ++n)
        plane_bad += bs.at(0, v, c * 8 + n - 1) != ((img.at(0, v, c) >> (n - 1)) & 1);
  o.check(bs.channels() == 24 && plane_bad == 0 && b2int(bs) == img,
          fmt("256 values x 24 channel positions: %d plane mismatches, roundtrip %s", plane_bad,
              b2int(bs) == img ? "identical" : "differs"));

  PixelTensor zero(125, 100, 10, 255);  // 125*100*10*8 = 10^6 bits
  const auto zs = int2b(zero);
  const auto r = randomize_slices(zs, slice_prefix(8), 2024);
  std::size_t ones = 0;
  for (auto b : r.bits) ones += b;
  const double mean = static_cast<double>(ones) / static_cast<double>(r.bits.size());
  o.check(r.bits.size() == 1000000 && std::abs(mean - 0.5) <= 0.01,
          fmt("randomize_slices over %zu bits: mean %.5f", r.bits.size(), mean));
  const double t = since(t0);
  o.check(t < 10.0, fmt("runtime %.2f s < 10 s", t));
  return o;
}

Outcome criterion5() {
  Outcome o;
  const auto t0 = Clock::now();
  auto bn = [](int ch) { return LayerSpec{LayerKind::batchnorm, ch, ch, 0, Precision::full, 2}; };
  auto dense = [](int i, int n) { return LayerSpec{LayerKind::dense, i, n, 0, Precision::full, 2}; };
  const LayerSpec sign{LayerKind::sign_activation, 0, 0, 0, Precision::binary, 2};

  ArchitectureSpec toy;
  toy.name = "toy";
  toy.width = toy.height = 1;
  toy.channels = toy.base_channels = 6;
  toy.classes = 3;
  toy.layers = {dense(6, 5), bn(5), dense(5, 3), bn(3)};
  toy.validate();

  Rng rng(55);
  const int batch = 8;
  std::vector<double> x(batch * 6);
  for (auto& v : x) v = rng.uniform(-1, 1);
  std::vector<int> y(batch);
  for (auto& v : y) v = static_cast<int>(rng.below(3));
  TrainableNetwork<double> net(toy, oracle::random_params(toy, 3));
  const double lambda = 0.01;
  net.compute_gradients(x, y, lambda);
  auto params = net.parameters();
  double worst = 0.0;
  std::size_t count = 0;
  for (auto& p : params) {
    // First-layer weights and every batchnorm parameter.
    if (!(p.layer == 0 || p.role == ParamRole::bn_scale || p.role == ParamRole::bn_shift)) continue;
    const std::vector<double> analytic(p.grad.begin(), p.grad.end());
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double saved = p.value[i];
      p.value[i] = saved + 1e-6;
      const double up = net.compute_gradients(x, y, lambda);
      p.value[i] = saved - 1e-6;
      const double down = net.compute_gradients(x, y, lambda);
      p.value[i] = saved;
      const double numeric = (up - down) / 2e-6;
      const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-4});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
      ++count;
    }
  }
  o.check(worst <= 1e-3, fmt("finite differences on %zu first-layer/batchnorm scalars: worst relative error %.2e", count, worst));

  // STE: the mask recorded at a sign layer equals 1{|x| <= 1} of the values fed into it.
  ArchitectureSpec act = toy;
  act.layers = {dense(6, 5), bn(5), sign, dense(5, 3), bn(3)};
  act.validate();
  ArchitectureSpec head = toy;
  head.classes = 5;
  head.layers = {dense(6, 5), bn(5)};
  head.validate();
  auto pa = oracle::random_params(act, 4);
  for (auto& s : pa.layers[1].scale) s = 1.5f;
  TrainableNetwork<double> na(act, pa), nh(head, ParameterStore{{pa.layers[0], pa.layers[1]}});
  na.compute_gradients(x, y, 0.0);
  const auto pre = nh.forward(x, batch, true);
  const auto mask = na.ste_masks().at(0);
  std::size_t mismatch = 0, inside = 0;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    const double expect = std::abs(pre[i]) <= 1.0 ? 1.0 : 0.0;
    mismatch += mask[i] != expect;
    inside += expect == 1.0;
  }
  o.check(mismatch == 0 && inside > 0 && inside < pre.size(),
          fmt("STE mask: %zu of %zu entries differ from 1{|x|<=1} (%zu inside)", mismatch, pre.size(), inside));
  const double t = since(t0);
  o.check(t < 60.0, fmt("runtime %.2f s < 60 s", t));
  return o;
}

Outcome criterion6() {
  Outcome o;
  const auto t0 = Clock::now();
  SynthTaskConfig sc;
  sc.samples = 4000;
  sc.margin = 0.1;
  sc.significant_slices = {6, 7, 8};
  sc.bits = 8;
  const auto train_set = synth_bit_task(sc);
  sc.samples = 1000;
  sc.stream = 1;
  const auto test_set = synth_bit_task(sc);

  LadderConfig lc;
  lc.name = "synth_reconstructed";
  lc.width = lc.height = 8;
  lc.encoding = InputEncoding::bitsliced;
  lc.bits = 8;
  lc.conv_depths = {32, 32};
  lc.dense_depths = {64};
  lc.classes = 4;
  lc.first_layer = Precision::full;
  const auto arch = build_ladder(lc);
  TrainConfig tc;
  tc.epochs = 20;
  tc.batch_size = 64;
  tc.learning_rate = 3e-3;
  tc.lr_decay = 0.9;
  tc.seed = 1;
  const auto trained = train(arch, tc, train_set, test_set);
  const InferenceModel model(arch, trained.state.params);
  const double err = evaluate(model, test_set);
  o.check(err <= 5.0, fmt("reconstructed model test ERR %.2f%% <= 5%%", err));

  SensitivityConfig cfg;
  cfg.trials = 10;
  cfg.err_threshold = 1.0;
  const auto rep = analyze_stack(model, test_set, cfg);
  for (const auto& r : rep.rows)
    o.note(fmt("stack %-5s err %.2f%% delta %+.2f", slice_spec(r.slices).c_str(), r.err_inf, r.delta_err));
  bool low_ok = true;
  for (const auto& r : rep.rows)
    if (r.index >= 1 && r.index <= 5) low_ok = low_ok && r.delta_err <= 1.0;
  o.check(low_ok, "stacked slices 1..k, k <= 5: every delta ERR <= 1%");
  o.check(rep.rows.back().index == 8 && rep.rows.back().delta_err > 10.0,
          fmt("full stack 1-8: delta ERR %+.2f > 10%%", rep.rows.back().delta_err));
  o.note(fmt("selected prunable set %s, turning point %s", slice_spec(rep.prunable).c_str(),
             rep.turning_point ? std::to_string(*rep.turning_point).c_str() : "none"));

  const auto rb = rebuild_and_retrain(model, slice_prefix(5), train_set, test_set, tc);
  const double target = std::pow(8.0 / 3.0, 2);
  o.check(std::abs(rb.report.compact_err - err) <= 1.0,
          fmt("P=5 compact ERR %.2f%% vs reconstructed %.2f%% (|diff| <= 1)", rb.report.compact_err, err));
  o.check(std::abs(rb.report.size_ratio - target) <= 0.15 * target,
          fmt("P=5 size ratio %.3f within 15%% of (8/3)^2 = %.3f", rb.report.size_ratio, target));
  const double t = since(t0);
  o.check(t <= 600.0, fmt("runtime %.1f s <= 600 s", t));
  return o;
}

Outcome criterion7() {
  Outcome o;
  o.note("CIFAR-10 training floor runs as its own test (acceptance_cifar); full-scale error rates and GPU times are out of reach here");
  // The comparison is against the pixel-input baseline BNN, not the reconstructed net.
  const auto base = baseline_cifar_arch();
  const auto rec = reconstruct_arch(base, 8);
  const auto compact = shrink_arch(rec, 8, 4);
  const double gops_ratio = cost_model(base).gops / cost_model(compact).gops;
  const auto r = bench_networks(base, compact, 2, 5, 1);
  o.note(fmt("baseline BNN %.4f s/image, CBNN P=4 %.4f s/image", r.reference_seconds, r.measured_seconds));
  const auto rr = bench_networks(rec, compact, 2, 5, 1);
  o.note(fmt("for reference, against the reconstructed net: wall-clock %.3f vs GOPs %.3f", rr.speedup,
             cost_model(rec).gops / cost_model(compact).gops));
  o.check(std::abs(r.speedup - gops_ratio) <= 0.3 * gops_ratio,
          fmt("wall-clock ratio %.3f within 30%% of GOPs ratio %.3f", r.speedup, gops_ratio));
  return o;
}

// Runs the CLI pipeline into dir; returns false when a step fails.
bool run_pipeline(const fs::path& dir, const fs::path& config, int threads) {
  const std::string cli = CBNN_CLI_PATH;
  const std::string common = " --config " + config.string() + " --threads " + std::to_string(threads) +
                             " --seed 7";
  const std::string quiet = " > " + (dir / "log.txt").string() + " 2>&1";
  const std::vector<std::string> steps{
      cli + common + " --out " + (dir / "train").string() + " train",
      cli + common + " --out " + (dir / "sens").string() + " --checkpoint " +
          (dir / "train" / "model.cbnn").string() + " sensitivity",
      cli + common + " --out " + (dir / "rebuild").string() + " --checkpoint " +
          (dir / "train" / "model.cbnn").string() + " rebuild"};
  fs::create_directories(dir);
  for (const auto& s : steps)
    if (std::system((s + quiet).c_str()) != 0) return false;
  return true;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome criterion8() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "cbnn_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path config = root / "run.ini";
  std::ofstream(config) << "[arch]\n"
                           "name = det\nwidth = 8\nheight = 8\nchannels = 24\nencoding = bitsliced\n"
                           "base_channels = 3\nbits = 8\nmagnitude_bound = 255\nclasses = 4\n"
                           "layer = conv in=24 out=16 kernel=3 precision=full\n"
                           "layer = batchnorm channels=16\nlayer = sign\n"
                           "layer = conv in=16 out=16 kernel=3 precision=binary\n"
                           "layer = maxpool pool=2\nlayer = batchnorm channels=16\nlayer = sign\n"
                           "layer = dense in=256 out=32 precision=binary\n"
                           "layer = batchnorm channels=32\nlayer = sign\n"
                           "layer = dense in=32 out=4 precision=binary\nlayer = batchnorm channels=4\n"
                           "[data]\nsource = synth\nsamples = 600\ntest_samples = 200\nmargin = 0.1\n"
                           "[train]\nepochs = 3\nbatch_size = 32\nlearning_rate = 0.003\n"
                           "[sensitivity]\ntrials = 3\n"
                           "[rebuild]\np = 4\n";
  const std::vector<std::pair<std::string, int>> runs{{"a", 1}, {"b", 1}, {"c", 4}};
  for (const auto& [name, threads] : runs)
    if (!run_pipeline(root / name, config, threads)) {
      o.check(false, "pipeline run '" + name + "' failed; see " + (root / name / "log.txt").string());
      return o;
    }
  const std::vector<std::string> artifacts{"train/model.cbnn", "train/history.csv",
                                           "sens/sensitivity.csv", "sens/sensitivity_plot.csv",
                                           "rebuild/compact.cbnn", "rebuild/compression.csv",
                                           "rebuild/history.csv"};
  for (const auto& a : artifacts) {
    const auto ref = slurp(root / "a" / a);
    const bool same_serial = !ref.empty() && ref == slurp(root / "b" / a);
    const bool same_threads = ref == slurp(root / "c" / a);
    o.check(same_serial && same_threads,
            fmt("%-26s %zu bytes: two runs at --threads 1 %s; --threads 4 %s", a.c_str(), ref.size(),
                same_serial ? "identical" : "DIFFER", same_threads ? "identical" : "DIFFER"));
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"cost model reproduces the reference size/GOPs figures", criterion1},
      {"compression-ratio sweep P=1..5", criterion2},
      {"packed kernels equal their oracles", criterion3},
      {"int2b losslessness and fair slice randomization", criterion4},
      {"gradient correctness and STE mask", criterion5},
      {"end-to-end synthetic pipeline", criterion6},
      {"inference wall-clock tracks the GOPs ratio", criterion7},
      {"determinism across runs and thread counts", criterion8}};
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only && only != id) continue;
    const auto t0 = Clock::now();
    Outcome out;
    try {
      out = criteria[i].second();
    } catch (const std::exception& e) {
      out.check(false, std::string("exception: ") + e.what());
    }
    std::printf("%s criterion %d: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", id, criteria[i].first,
                since(t0));
    for (const auto& d : out.details) std::printf("    %s\n", d.c_str());
    std::fflush(stdout);
    all = all && out.pass;
  }
  return all ? 0 : 1;
}
