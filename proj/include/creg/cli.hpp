#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "creg/metrics.hpp"
#include "creg/occlusion.hpp"
#include "creg/pipeline.hpp"
#include "creg/synth.hpp"

namespace creg::cli {

struct SynthConfig {
  std::size_t n = 200;
  synth::FieldFamily family = synth::FieldFamily::GaussianBlobAtB;
  bool cardinal = false;
  double noise = 0.0;
  double accuracy = 1.0;  // fraction of samples whose prediction matches the label
  bool with_tensors = true;
  bool with_baselines = false;  // attention, IG steps and GradCAM maps
  bool validate = false;        // run the analytic validation suite instead
};

struct RunConfig {
  std::string subcommand;
  std::filesystem::path manifest;
  std::vector<RelevanceSource> methods = {RelevanceSource::Creg};
  MethodOptions method;
  PolarConfig polar;
  BootstrapOptions bootstrap;
  std::filesystem::path out_dir = "out";
  int workers = 0;  // 0: CREG_WORKERS, else the OpenMP default
  bool exclude_degenerate = false;
  bool bounded_occlusion = true;
  std::optional<std::filesystem::path> responses;
  std::vector<std::filesystem::path> inputs;  // plot: compass records or directories
  SynthConfig synth;
};

/// Worker count from CREG_WORKERS; 0 when unset or unparsable.
int env_workers();

/// Every field with defaults expanded, as canonical JSON text.
std::string config_echo(const RunConfig& config);

struct RunSummary {
  std::size_t processed = 0;
  std::vector<std::string> skipped;  // "sample_id: reason"
  std::vector<std::string> notices;
  std::vector<std::filesystem::path> written;
};

/// Checks flags and that every sample carries what the chosen methods need.
/// Throws before any computation.
void validate_run(const RunConfig& config, const Manifest& manifest);

RunSummary cmd_attr(const RunConfig& config);
RunSummary cmd_eval(const RunConfig& config);
RunSummary cmd_baseline_sweep(const RunConfig& config);
RunSummary cmd_occlude(const RunConfig& config);
RunSummary cmd_cos(const RunConfig& config);
RunSummary cmd_synth(const RunConfig& config);
RunSummary cmd_plot(const RunConfig& config);

/// Dispatches on config.subcommand.
RunSummary run(const RunConfig& config);

/// One row of the method table.
struct MethodRow {
  std::string method;
  AggregateReport report;
};

std::string method_table_csv(const std::vector<MethodRow>& rows);

struct CompassRecord {
  std::string sample_id;
  std::string method;
  std::vector<double> probs;
  int peak_index = 0;
  double peak_angle = 0.0;
  double true_angle = 0.0;
  double dae = 0.0;
  bool degenerate = false;
};

CompassRecord read_compass_record(const std::filesystem::path& path);

/// Polar bar chart: bar k has length probs[k] / max(probs), plus true and
/// peak arrows and a DAE label.
std::string compass_svg(const CompassRecord& record);

/// Replaces characters unsafe in file names.
std::string file_stem(const std::string& sample_id);

}  // namespace creg::cli
