#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bpgrad/objectives.hpp"
#include "bpgrad/pruning.hpp"
#include "bpgrad/trace.hpp"
#include "bpgrad/types.hpp"

namespace bpgrad {

enum class SolverKind { bpgrad, sgd, sgd_momentum, adagrad, adadelta, rmsprop, adam };

std::string to_string(SolverKind kind);
/// Accepts the names produced by to_string; throws ConfigError otherwise.
SolverKind parse_solver_kind(std::string_view name);

/// Hyperparameters for the baseline solvers. `decay` is the moving-average
/// factor named rho in Adagrad/Adadelta/RMSProp (1.0 gives classic Adagrad).
struct BaselineHyper {
  double learning_rate = 0.01;
  double momentum = 0.0;
  double decay = 0.9;
  double epsilon = 1e-8;
  double beta1 = 0.9;
  double beta2 = 0.999;
};

struct SolverState {
  ParamVector position;
  ParamVector velocity;
  double history_min = 0.0;
  bool has_history = false;
  std::size_t step_count = 0;
  double last_eta = 0.0;
  ParamVector accum_sq;   ///< Adagrad/Adadelta/RMSProp E[g^2]; Adam second moment
  ParamVector accum_dx;   ///< Adadelta E[dx^2]
  ParamVector moment1;    ///< Adam first moment

  /// Zero velocity and accumulators at `x0`.
  static SolverState start(const ParamVector& x0);
};

/// (f - rho * min) / L clamped at 0. Throws ConfigError when L <= 0.
double bpgrad_eta(double f_current, double history_min, double rho, double L);

/// v <- mu v - eta g~, x <- x + v. The running minimum includes f_t before
/// eta is computed. Zero gradients use a random unit direction from `rng`.
SolverState bpgrad_step(SolverState state, double f_t, const ParamVector& grad,
                        const SolverConfig& cfg, Rng& rng);

/// Textbook update for one of the non-BPGrad kinds.
SolverState baseline_step(SolverKind kind, SolverState state, const ParamVector& grad,
                          const BaselineHyper& hyper);

/// Sampling-rule check of `x_next` against a window of recent records.
SamplingRuleCheck monitor_eq4(std::span<const EvalRecord> window, const ParamVector& x_next,
                              double rho, double L);

/// Fraction of records i with <x_i - x_t, g~> >= (f_i - f_t) / L, where
/// x_t, f_t is the last record of `window`.
double monitor_thm3(std::span<const EvalRecord> window, const ParamVector& grad_unit, double L);

/// Fraction of earlier records with <x_i - x_j, g~_j> >= 0, x_j being the last
/// record. nullopt when the values in `window` are not strictly decreasing.
std::optional<double> monitor_cor1(std::span<const EvalRecord> window,
                                   const ParamVector& grad_unit);

struct RunSpec {
  SolverKind kind = SolverKind::bpgrad;
  SolverConfig cfg;
  BaselineHyper hyper;
  std::size_t epochs = 1;
  std::size_t batch_size = 1;
  bool monitor = false;
  std::size_t monitor_window = 512;
  bool record_trajectory = false;
};

enum class RunStatus { completed, diverged };

std::string to_string(RunStatus s);

struct RunResult {
  Trace trace;
  ParamVector final_point;
  RunStatus status = RunStatus::completed;
  std::string status_detail;
  /// Objective over all samples at the final point (NaN when diverged).
  double final_objective = 0.0;
  std::vector<ParamVector> trajectory;
};

/// Runs `spec.kind` for `spec.epochs` passes over the objective's samples in
/// seeded shuffled mini-batches (seed = spec.cfg.seed). Non-finite
/// objectives or iterates leaving the domain abort the run as diverged.
RunResult run_solver(const StochasticObjective& obj, const ParamVector& x0, const RunSpec& spec);

/// Tuned settings from the supplementary hyperparameter tables. Presets:
/// "f1", "f2", "f3" (1D demos), "mnist", "cifar10". Throws ConfigError.
BaselineHyper supplement_hyper(SolverKind kind, std::string_view preset);
SolverConfig supplement_bpgrad(std::string_view preset, double momentum);

}  // namespace bpgrad
