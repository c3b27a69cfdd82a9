#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "bpgrad/diagnostics.hpp"
#include "bpgrad/lipschitz.hpp"
#include "bpgrad/nn.hpp"
#include "bpgrad/pruning.hpp"
#include "bpgrad/solver.hpp"

namespace bpgrad {

/// Environment variable that replaces the configured output directory.
inline constexpr const char* kOutputDirEnv = "BPGRAD_OUTPUT_DIR";

enum class Command { demo1d, train, estimate_l, sweep, bounds_report };

std::string to_string(Command c);
/// "demo1d", "train", "estimate-l", "sweep", "bounds-report".
Command parse_command(std::string_view name);

/// Key-value run description. Every command has a fixed key set with
/// defaults; unknown keys are rejected. Text form: one `key = value` per
/// line, `#` starts a comment, lists are comma separated.
class ExperimentConfig {
 public:
  explicit ExperimentConfig(Command command);

  [[nodiscard]] Command command() const noexcept { return command_; }
  [[nodiscard]] const std::map<std::string, std::string>& values() const noexcept {
    return values_;
  }
  [[nodiscard]] bool has_key(const std::string& key) const;

  /// Throws ConfigError for keys the command does not know.
  void set(const std::string& key, const std::string& value);
  /// Applies every `key = value` line; duplicate keys in one text are rejected.
  void merge_text(const std::string& text);

  [[nodiscard]] const std::string& get(const std::string& key) const;
  [[nodiscard]] double get_double(const std::string& key) const;
  [[nodiscard]] std::size_t get_size(const std::string& key) const;
  [[nodiscard]] std::uint64_t get_u64(const std::string& key) const;
  [[nodiscard]] bool get_bool(const std::string& key) const;
  [[nodiscard]] std::vector<double> get_doubles(const std::string& key) const;
  [[nodiscard]] std::vector<std::string> get_strings(const std::string& key) const;

  /// Sorted `key = value` lines; loading this text reproduces the config.
  [[nodiscard]] std::string to_text() const;

 private:
  Command command_;
  std::map<std::string, std::string> values_;
};

/// Flag value, then the environment variable, then the config value.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg,
                                         const std::optional<std::string>& flag_value = std::nullopt);

struct Demo1dResult {
  std::string function;
  std::string algorithm;
  double minimizer = 0.0;  ///< best sample (exact) or final iterate (solvers)
  double value = 0.0;
  double best_visited = 0.0;
  double oracle_minimizer = 0.0;
  double oracle_value = 0.0;
  std::size_t evaluations = 0;
  std::string terminated_by;
  RunStatus status = RunStatus::completed;
  std::optional<double> thm2_bound;
  std::optional<ExactRunResult> exact;
  Trace trace;
  std::vector<double> trajectory;
};

struct TrainRun {
  std::string name;
  SolverKind kind = SolverKind::bpgrad;
  double mu = 0.0;
  RunResult result;
  double final_loss = 0.0;
  double final_accuracy = 0.0;
  std::optional<double> eq4_fraction;
};

struct TrainResult {
  double lipschitz_L = 0.0;
  std::size_t param_count = 0;
  std::vector<TrainRun> runs;
  /// ||x_a - x_b|| between the final weights of the first BPGrad run and the
  /// first baseline run (or the first two runs when only one kind is present).
  std::optional<double> weight_distance;
  [[nodiscard]] bool any_diverged() const;
};

struct EstimateResult {
  LipschitzReport report;
};

struct SweepResult {
  double base_L = 0.0;
  double threshold = 0.0;
  std::vector<SweepCell> cells;
  [[nodiscard]] std::size_t converged() const;
};

struct BoundsReportResult {
  BoundsTrace bounds;
  std::optional<double> thm2_bound;
};

/// Each command validates the whole config before computing, writes its
/// artifacts plus `config.txt` into `out_dir` (created if missing), and
/// throws ConfigError / InvalidInput for invalid settings.
Demo1dResult cmd_demo1d(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
TrainResult cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
EstimateResult cmd_estimate_l(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
SweepResult cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
BoundsReportResult cmd_bounds_report(const ExperimentConfig& cfg,
                                     const std::filesystem::path& out_dir);

/// Synthetic dataset and network described by the dataset/model keys.
Dataset dataset_from_config(const ExperimentConfig& cfg);
std::vector<std::size_t> layer_sizes_from_config(const ExperimentConfig& cfg);

/// L for the training objective: the configured number, or the selected
/// percentile of a fresh estimate when L = auto.
double resolve_lipschitz(const ExperimentConfig& cfg, const MlpObjective& obj);

}  // namespace bpgrad
