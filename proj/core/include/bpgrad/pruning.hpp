#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bpgrad/objectives.hpp"
#include "bpgrad/trace.hpp"
#include "bpgrad/types.hpp"

namespace bpgrad {

/// Ball B(x_j, r_j) around a previous sample; the radius depends on the
/// current running minimum so it is recomputed on every query.
struct PruningBall {
  ParamVector center;
  double stored_value = 0.0;

  [[nodiscard]] double radius(double current_min, double rho, double L) const {
    return (stored_value - rho * current_min) / L;
  }
};

/// Union of open pruning balls over a history. Holds a reference; the
/// history must outlive the view.
class RemovableSpace {
 public:
  /// Throws ConfigError when L <= 0.
  RemovableSpace(const History& history, double rho, double L);

  [[nodiscard]] bool contains(const ParamVector& x) const;
  [[nodiscard]] std::vector<PruningBall> balls() const;
  [[nodiscard]] double radius_of(std::size_t j) const;

 private:
  const History* history_;
  double rho_;
  double L_;
};

bool rps_contains(const RemovableSpace& space, const ParamVector& x);

struct SamplingRuleCheck {
  double lhs = 0.0;  ///< max_i f(x_i) - L ||x_i - x||
  double rhs = 0.0;  ///< rho * min_i f(x_i)
  bool holds = false;
};

/// Evaluates the sampling rule against `records` only (used by the windowed
/// monitors as well as the exact algorithm).
SamplingRuleCheck sampling_rule_terms(std::span<const EvalRecord> records,
                                      const ParamVector& candidate, double rho, double L);

bool satisfies_sampling_rule(const History& history, const ParamVector& candidate, double rho,
                             double L);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Sorted, disjoint closed intervals making up [a, b] minus the pruning balls.
struct FeasibleIntervals1D {
  std::vector<Interval> intervals;
  [[nodiscard]] bool empty() const noexcept { return intervals.empty(); }
};

/// Exact complement of the open pruning intervals in a 1D domain. Endpoints
/// are nudged inward by at most a few ulps so every endpoint passes the
/// point-wise feasibility test; intervals that vanish in doing so are dropped.
FeasibleIntervals1D feasible_intervals_1d(const History& history, const BoxDomain& domain,
                                          double rho, double L);

/// X_R(t) covers the whole 1D domain.
bool coverage_complete_1d(const History& history, const BoxDomain& domain, double rho, double L);

/// Point-wise feasibility used for every accepted sample: inside the domain,
/// outside every open ball, and satisfying the sampling rule.
bool is_feasible_sample(const History& history, const BoxDomain& domain, const ParamVector& x,
                        double rho, double L);

/// One branch step: a feasible x_{t+1} approximately minimising
/// ||x - (x_t - eta g~)||^2 + gamma eta^2, or nullopt when nothing feasible
/// is found. Uses cfg.rho / cfg.lipschitz_L / cfg.gamma as the current values.
/// Throws ContractError if the last record carries no gradient.
std::optional<ParamVector> branch_step(const Objective& obj, const History& history,
                                       const SolverConfig& cfg, Rng& rng);

/// Number of doublings and random directions tried per branch step in d >= 2.
inline constexpr std::size_t kLineSearchDoublings = 20;
inline constexpr std::size_t kRandomDirections = 64;

enum class Termination { precision, coverage, budget };

std::string to_string(Termination t);

struct ExactRunResult {
  EvalRecord best;
  History history;
  Trace trace;
  Termination terminated_by = Termination::budget;
  /// rho in effect when each sample was accepted (parallel to history).
  std::vector<double> sample_rho;
  double final_rho = 0.0;
  std::size_t outer_iterations = 0;

  [[nodiscard]] std::size_t evaluations() const noexcept { return history.size(); }
  [[nodiscard]] double max_rho() const;
};

/// General branch-and-prune loop. Starts at `start` or at a uniform draw
/// from the domain, raises rho by cfg.rho_increment (capped at cfg.rho_cap)
/// whenever the inner loop ends, and stops once min f < eps / (1 - rho), once
/// the space is covered with no escalation left, or when budgets run out.
ExactRunResult run_exact_bpgrad(const Objective& obj, const SolverConfig& cfg,
                                std::optional<ParamVector> start = std::nullopt);

}  // namespace bpgrad
