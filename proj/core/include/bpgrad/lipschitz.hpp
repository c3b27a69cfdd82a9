#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bpgrad/nn.hpp"
#include "bpgrad/objectives.hpp"
#include "bpgrad/solver.hpp"

namespace bpgrad {

struct LipschitzSample {
  std::size_t i = 0;
  std::size_t j = 0;
  double distance = 0.0;
  double delta_f = 0.0;
  double ratio = 0.0;  ///< |f_i - f_j| / ||x_i - x_j||
};

enum class Pairing { consecutive, all_pairs };

std::string to_string(Pairing p);
Pairing parse_pairing(std::string_view s);

/// all_pairs stops after this many pairs.
inline constexpr std::size_t kMaxPairs = 1000000;
/// Pairs closer than this are skipped and counted.
inline constexpr double kCoincidentDistance = 1e-12;

struct LipschitzEstimate {
  std::vector<LipschitzSample> samples;
  std::vector<double> values;  ///< f at each initialisation, in draw order
  std::size_t skipped_pairs = 0;
};

/// Ratios between `n_inits` points drawn uniformly from the domain.
LipschitzEstimate estimate_pairs(const Objective& obj, std::size_t n_inits, Pairing pairing,
                                 std::uint64_t seed);

/// Ratios between `n_inits` Gaussian initialisations of the network, each
/// evaluated on its own random mini-batch of `batch_size` samples.
/// Initialisation k uses derive_seed(seed, k).
LipschitzEstimate estimate_pairs(const MlpObjective& obj, std::size_t n_inits, Pairing pairing,
                                 std::uint64_t seed, double sigma = 0.05,
                                 std::size_t batch_size = 200);

/// Percentile `p` in (0, 100] of the ratios: sort ascending, h = (p / 100)(n - 1),
/// then interpolate linearly between order statistics floor(h) and ceil(h).
double select_L(const std::vector<LipschitzSample>& samples, double percentile);
double percentile_of(std::vector<double> values, double percentile);

struct LipschitzReport {
  std::vector<LipschitzSample> samples;
  std::map<double, double> percentiles;
  double selected_L = 0.0;
  double selection_percentile = 99.0;
  std::size_t skipped_pairs = 0;

  /// median(ratio) / max(ratio); 0 when every ratio is 0.
  [[nodiscard]] double median_over_max() const;
};

/// Summarises an estimate at percentiles {1, 5, 25, 50, 75, 95, 99, 100}
/// plus the selection percentile.
LipschitzReport make_report(const LipschitzEstimate& estimate, double selection_percentile = 99.0);

/// Columns: pair_i, pair_j, distance, delta_f, ratio.
void write_report_csv(const LipschitzReport& report, const std::filesystem::path& path);
/// {"percentiles": {...}, "selected_L", "selection_percentile", "skipped_pairs",
///  "pairs", "median_over_max"}
std::string report_json(const LipschitzReport& report);

struct SweepCell {
  std::size_t cell = 0;
  double L = 0.0;
  double rho = 0.0;
  double mu = 0.0;
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  RunStatus status = RunStatus::completed;
  std::string detail;
  double first_epoch_objective = 0.0;  ///< mean mini-batch objective over epoch 1
  double final_objective = 0.0;        ///< full objective at the final point
};

struct SweepGrid {
  std::vector<double> L_values;
  std::vector<double> rho_values;
  std::vector<double> mu_values;
  std::size_t repeats = 1;
};

/// Start point for a cell, given the cell's derived seed.
using StartFactory = std::function<ParamVector(std::uint64_t seed)>;

/// Runs BPGrad over the cartesian product L x rho x mu x repeat, in that
/// nesting order. Cell k uses seed derive_seed(tmpl.cfg.seed, k). Cells run
/// on up to `threads` workers (0 = hardware concurrency); results are in
/// cell order regardless. Empty grids throw ConfigError. A cell that throws
/// is recorded as diverged with the message and the sweep continues.
std::vector<SweepCell> run_sweep(const StochasticObjective& obj, const StartFactory& start,
                                 const SweepGrid& grid, const RunSpec& tmpl,
                                 std::size_t threads = 0);

/// L-only sweep; rho and mu come from the template.
std::vector<SweepCell> sweep_L(const StochasticObjective& obj, const StartFactory& start,
                               const std::vector<double>& L_values, std::size_t runs_per_L,
                               const RunSpec& tmpl, std::size_t threads = 0);
/// rho-only sweep; L and mu come from the template.
std::vector<SweepCell> sweep_rho(const StochasticObjective& obj, const StartFactory& start,
                                 const std::vector<double>& rho_values, std::size_t runs_per_rho,
                                 const RunSpec& tmpl, std::size_t threads = 0);

/// Columns: cell, L, rho, mu, repeat, seed, status, first_epoch_objective,
/// final_objective, detail.
void write_sweep_csv(const std::vector<SweepCell>& cells, const std::filesystem::path& path);

}  // namespace bpgrad
