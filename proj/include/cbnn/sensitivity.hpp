#pragma once

// Slice sensitivity: how much does the error rate move when input bit slices
// are replaced with fair random bits? The network itself is never modified.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cbnn/data.hpp"
#include "cbnn/network.hpp"

namespace cbnn {

enum class SensitivityMode { single, stack };

const char* to_string(SensitivityMode mode);

struct SensitivityConfig {
  int trials = 10;
  double err_threshold = 1.0;  // percent
  std::uint64_t seed = 1;
  SensitivityMode mode = SensitivityMode::stack;
  // Reference error in percent. Unset means the model's clean error on the
  // analyzed dataset; set it to a baseline network's error to compare
  // against that instead.
  std::optional<double> err_ref;
  bool include_empty_row = true;  // row 0: nothing randomized

  void validate() const;
};

struct SensitivityRow {
  int index = 0;            // n (single) or k (stack); 0 for the empty row
  std::vector<int> slices;  // randomized slices
  double err_inf = 0.0;     // mean over trials, percent
  double delta_err = 0.0;   // err_inf - err_ref
  std::vector<double> trial_errs;
};

struct SensitivityReport {
  SensitivityMode mode = SensitivityMode::stack;
  double err_ref = 0.0;
  std::vector<SensitivityRow> rows;
  std::optional<int> turning_point;
  std::vector<int> prunable;
};

struct PrunableSelection {
  std::vector<int> prunable;  // {1..k}
  std::optional<int> turning_point;
};

/// Row n randomizes slice n alone, n = 1..N.
SensitivityReport analyze_single(const InferenceModel& model, const LabeledDataset& dataset,
                                 SensitivityConfig config);

/// Row k randomizes slices 1..k jointly, k = 1..N.
SensitivityReport analyze_stack(const InferenceModel& model, const LabeledDataset& dataset,
                                SensitivityConfig config);

/// Dispatches on config.mode.
SensitivityReport analyze(const InferenceModel& model, const LabeledDataset& dataset,
                          const SensitivityConfig& config);

/// Prunable set: the longest prefix of rows 1..k whose delta_err are all
/// <= err_threshold. Turning point: the first row whose delta_err has the
/// opposite sign of the last nonzero value before it, or that rises more than
/// err_threshold above the previous row (row 1 is compared against 0).
PrunableSelection select_prunable(const SensitivityReport& report, double err_threshold);

/// "1-4", "3", or "none".
std::string slice_spec(const std::vector<int>& slices);

/// Rows as slice_spec,mean_err,delta_err followed by a "# turning_point=..
/// prunable=.." summary line.
std::string sensitivity_csv(const SensitivityReport& report);

/// slice,delta_err pairs for plotting.
std::string sensitivity_plot_data(const SensitivityReport& report);

}  // namespace cbnn
