#include "cbnn/sensitivity.hpp"

#include <cstdio>
#include <sstream>

#include "cbnn/error.hpp"
#include "cbnn/rng.hpp"

namespace cbnn {

const char* to_string(SensitivityMode mode) {
  return mode == SensitivityMode::single ? "single" : "stack";
}

void SensitivityConfig::validate() const {
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (!(err_threshold > 0.0)) throw ConfigError("err_threshold must be positive");
}

namespace {

SensitivityReport run(const InferenceModel& model, const LabeledDataset& dataset,
                      const SensitivityConfig& config, SensitivityMode mode) {
  config.validate();
  const ArchitectureSpec& arch = model.arch();
  if (arch.encoding != InputEncoding::bitsliced)
    throw ShapeError("sensitivity analysis needs a model with bit-sliced input");
  if (!arch.pruned_slices.empty())
    throw ShapeError("sensitivity analysis needs a model that sees every slice");
  if (dataset.empty()) throw ShapeError("sensitivity analysis on an empty dataset");

  SensitivityReport report;
  report.mode = mode;
  const double clean = evaluate(model, dataset);
  report.err_ref = config.err_ref ? *config.err_ref : clean;

  const int n_slices = arch.bits;
  for (int n = config.include_empty_row ? 0 : 1; n <= n_slices; ++n) {
    SensitivityRow row;
    row.index = n;
    if (n > 0) {
      if (mode == SensitivityMode::single)
        row.slices = {n};
      else
        row.slices = slice_prefix(n);
    }
    double sum = 0.0;
    for (int t = 0; t < config.trials; ++t) {
      double err;
      if (row.slices.empty()) {
        err = clean;
      } else {
        // One stream per (mode, row, trial); each image then gets its own key.
        const std::uint64_t trial_key = derive_key(
            derive_key(derive_key(config.seed, static_cast<std::uint64_t>(mode)), n), t);
        err = evaluate(model, dataset, [&](std::size_t i, BitSlicedTensor& input) {
          input = randomize_slices(input, row.slices, derive_key(trial_key, i));
        });
      }
      row.trial_errs.push_back(err);
      sum += err;
    }
    row.err_inf = sum / config.trials;
    row.delta_err = row.err_inf - report.err_ref;
    report.rows.push_back(std::move(row));
  }
  const auto sel = select_prunable(report, config.err_threshold);
  report.prunable = sel.prunable;
  report.turning_point = sel.turning_point;
  return report;
}

}  // namespace

SensitivityReport analyze_single(const InferenceModel& model, const LabeledDataset& dataset,
                                 SensitivityConfig config) {
  return run(model, dataset, config, SensitivityMode::single);
}

SensitivityReport analyze_stack(const InferenceModel& model, const LabeledDataset& dataset,
                                SensitivityConfig config) {
  return run(model, dataset, config, SensitivityMode::stack);
}

SensitivityReport analyze(const InferenceModel& model, const LabeledDataset& dataset,
                          const SensitivityConfig& config) {
  return run(model, dataset, config, config.mode);
}

PrunableSelection select_prunable(const SensitivityReport& report, double err_threshold) {
  std::vector<const SensitivityRow*> rows;
  for (const auto& r : report.rows)
    if (r.index > 0) rows.push_back(&r);
  if (rows.empty()) throw ShapeError("select_prunable needs a non-empty report");

  PrunableSelection sel;
  for (const auto* r : rows) {
    if (r->delta_err > err_threshold) break;
    sel.prunable.push_back(r->index);
  }

  double prev = 0.0;
  int last_sign = 0;
  for (const auto* r : rows) {
    const double d = r->delta_err;
    const int sign = d > 0.0 ? 1 : (d < 0.0 ? -1 : 0);
    if ((sign != 0 && last_sign != 0 && sign != last_sign) || d - prev > err_threshold) {
      sel.turning_point = r->index;
      break;
    }
    if (sign != 0) last_sign = sign;
    prev = d;
  }
  return sel;
}

std::string slice_spec(const std::vector<int>& slices) {
  if (slices.empty()) return "none";
  bool contiguous = true;
  for (std::size_t i = 1; i < slices.size(); ++i)
    if (slices[i] != slices[i - 1] + 1) contiguous = false;
  if (slices.size() == 1) return std::to_string(slices[0]);
  if (contiguous) return std::to_string(slices.front()) + "-" + std::to_string(slices.back());
  std::string out;
  for (std::size_t i = 0; i < slices.size(); ++i) {
    if (i) out += '+';
    out += std::to_string(slices[i]);
  }
  return out;
}

namespace {
std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}
}  // namespace

std::string sensitivity_csv(const SensitivityReport& report) {
  std::ostringstream out;
  out << "slice_spec,mean_err,delta_err\n";
  for (const auto& r : report.rows)
    out << slice_spec(r.slices) << ',' << fixed(r.err_inf) << ',' << fixed(r.delta_err) << '\n';
  out << "# mode=" << to_string(report.mode) << " err_ref=" << fixed(report.err_ref)
      << " turning_point="
      << (report.turning_point ? std::to_string(*report.turning_point) : std::string("none"))
      << " prunable=" << slice_spec(report.prunable) << '\n';
  return out.str();
}

std::string sensitivity_plot_data(const SensitivityReport& report) {
  std::ostringstream out;
  out << "slice,delta_err\n";
  for (const auto& r : report.rows) out << r.index << ',' << fixed(r.delta_err) << '\n';
  return out.str();
}

}  // namespace cbnn
