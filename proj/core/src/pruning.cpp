#include "bpgrad/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bpgrad/errors.hpp"

namespace bpgrad {

namespace {

constexpr int kSnapUlps = 16;

void require_positive_L(double L) {
  if (!(L > 0.0)) throw ConfigError("Lipschitz constant must be > 0 for pruning");
}

TraceRow make_row(const History& h, double rho, double L, std::optional<double> eta) {
  const EvalRecord& r = h.back();
  TraceRow row;
  row.iteration = r.index;
  row.objective = r.value;
  row.eta = eta;
  row.grad_norm = r.gradient ? norm2(*r.gradient) : 0.0;
  row.upper = h.running_min();
  row.lower = rho * row.upper;
  row.rho = rho;
  row.lipschitz_L = L;
  return row;
}

}  // namespace

RemovableSpace::RemovableSpace(const History& history, double rho, double L)
    : history_(&history), rho_(rho), L_(L) {
  require_positive_L(L);
}

double RemovableSpace::radius_of(std::size_t j) const {
  return ((*history_)[j].value - rho_ * history_->running_min()) / L_;
}

bool RemovableSpace::contains(const ParamVector& x) const {
  if (history_->empty()) return false;
  const double m = history_->running_min();
  for (const EvalRecord& r : history_->records()) {
    const double radius = (r.value - rho_ * m) / L_;
    if (distance(x, r.point) < radius) return true;
  }
  return false;
}

std::vector<PruningBall> RemovableSpace::balls() const {
  std::vector<PruningBall> out;
  out.reserve(history_->size());
  for (const EvalRecord& r : history_->records()) out.push_back({r.point, r.value});
  return out;
}

bool rps_contains(const RemovableSpace& space, const ParamVector& x) { return space.contains(x); }

SamplingRuleCheck sampling_rule_terms(std::span<const EvalRecord> records,
                                      const ParamVector& candidate, double rho, double L) {
  if (records.empty()) throw ContractError("sampling rule needs at least one record");
  double lhs = -std::numeric_limits<double>::infinity();
  double min_f = std::numeric_limits<double>::infinity();
  for (const EvalRecord& r : records) {
    lhs = std::max(lhs, r.value - L * distance(r.point, candidate));
    min_f = std::min(min_f, r.value);
  }
  const double rhs = rho * min_f;
  return {lhs, rhs, lhs <= rhs};
}

bool satisfies_sampling_rule(const History& history, const ParamVector& candidate, double rho,
                             double L) {
  return sampling_rule_terms(history.records(), candidate, rho, L).holds;
}

bool is_feasible_sample(const History& history, const BoxDomain& domain, const ParamVector& x,
                        double rho, double L) {
  if (!domain.contains(x)) return false;
  if (RemovableSpace(history, rho, L).contains(x)) return false;
  return satisfies_sampling_rule(history, x, rho, L);
}

FeasibleIntervals1D feasible_intervals_1d(const History& history, const BoxDomain& domain,
                                          double rho, double L) {
  require_positive_L(L);
  if (domain.dimension() != 1 || history.dimension() != 1) {
    throw InvalidInput("feasible_intervals_1d requires a 1D domain and history");
  }
  const double a = domain.lower()[0];
  const double b = domain.upper()[0];
  const double m = history.running_min();

  std::vector<Interval> balls;
  balls.reserve(history.size());
  for (const EvalRecord& r : history.records()) {
    const double radius = (r.value - rho * m) / L;
    if (radius > 0.0) balls.push_back({r.point[0] - radius, r.point[0] + radius});
  }
  std::sort(balls.begin(), balls.end(),
            [](const Interval& x, const Interval& y) { return x.lo < y.lo; });

  // `cur` is always an uncovered point: either a or the open right end of a ball.
  std::vector<Interval> raw;
  double cur = a;
  bool done = false;
  for (const Interval& ball : balls) {
    if (ball.hi <= cur) continue;
    if (ball.lo >= cur) raw.push_back({cur, std::min(ball.lo, b)});
    cur = std::max(cur, ball.hi);
    if (cur > b) {
      done = true;
      break;
    }
  }
  if (!done) raw.push_back({cur, b});

  FeasibleIntervals1D out;
  auto ok = [&](double x) { return is_feasible_sample(history, domain, ParamVector{x}, rho, L); };
  const double inf = std::numeric_limits<double>::infinity();
  for (Interval iv : raw) {
    if (iv.lo > iv.hi) continue;
    for (int i = 0; i < kSnapUlps && iv.lo <= iv.hi && !ok(iv.lo); ++i) {
      iv.lo = std::nextafter(iv.lo, inf);
    }
    for (int i = 0; i < kSnapUlps && iv.lo <= iv.hi && !ok(iv.hi); ++i) {
      iv.hi = std::nextafter(iv.hi, -inf);
    }
    if (iv.lo <= iv.hi && ok(iv.lo) && ok(iv.hi)) out.intervals.push_back(iv);
  }
  return out;
}

bool coverage_complete_1d(const History& history, const BoxDomain& domain, double rho, double L) {
  return feasible_intervals_1d(history, domain, rho, L).empty();
}

std::optional<ParamVector> branch_step(const Objective& obj, const History& history,
                                       const SolverConfig& cfg, Rng& rng) {
  if (history.empty()) throw ContractError("branch_step: empty history");
  const EvalRecord& last = history.back();
  if (!last.gradient) throw ContractError("branch_step: last record has no gradient");
  const double rho = cfg.rho;
  const double L = cfg.lipschitz_L;
  require_positive_L(L);

  const ParamVector dir = normalized_gradient(*last.gradient, rng);
  const double eta0 = std::max(0.0, (last.value - rho * history.running_min()) / L);
  const BoxDomain& domain = obj.domain();

  if (obj.dimension() == 1) {
    const FeasibleIntervals1D feasible = feasible_intervals_1d(history, domain, rho, L);
    if (feasible.empty()) return std::nullopt;

    const double xt = last.point[0];
    const double descent = -dir[0];
    std::vector<double> candidates;
    candidates.reserve(2 * feasible.intervals.size() + 1);
    for (const Interval& iv : feasible.intervals) {
      candidates.push_back(iv.lo);
      if (iv.hi != iv.lo) candidates.push_back(iv.hi);
    }
    const double anchor = xt + descent * eta0;
    if (is_feasible_sample(history, domain, ParamVector{anchor}, rho, L)) {
      candidates.push_back(anchor);
    }

    auto score = [&](double c) {
      const double eta = std::abs(c - xt);
      const double off = c - (xt + descent * eta);
      return off * off + cfg.gamma * eta * eta;
    };
    double best = candidates.front();
    double best_score = score(best);
    for (std::size_t i = 1; i < candidates.size(); ++i) {
      const double c = candidates[i];
      const double s = score(c);
      const bool descent_side = (c - xt) * descent > 0.0;
      if (s < best_score || (s == best_score && descent_side && (best - xt) * descent <= 0.0)) {
        best = c;
        best_score = s;
      }
    }
    return ParamVector{best};
  }

  if (!(eta0 > 0.0)) return std::nullopt;
  double eta = eta0;
  for (std::size_t k = 0; k <= kLineSearchDoublings; ++k, eta *= 2.0) {
    ParamVector c = last.point;
    c.axpy(-eta, dir);
    if (is_feasible_sample(history, domain, c, rho, L)) return c;
  }
  for (std::size_t i = 0; i < kRandomDirections; ++i) {
    ParamVector c = last.point;
    c.axpy(eta0, random_unit_vector(c.size(), rng));
    if (is_feasible_sample(history, domain, c, rho, L)) return c;
  }
  return std::nullopt;
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::precision: return "precision";
    case Termination::coverage: return "coverage";
    case Termination::budget: return "budget";
  }
  return "unknown";
}

double ExactRunResult::max_rho() const {
  return sample_rho.empty() ? final_rho : *std::max_element(sample_rho.begin(), sample_rho.end());
}

ExactRunResult run_exact_bpgrad(const Objective& obj, const SolverConfig& cfg,
                                std::optional<ParamVector> start) {
  cfg.validate();
  require_positive_L(cfg.lipschitz_L);
  Rng rng(cfg.seed);
  const BoxDomain& domain = obj.domain();

  ParamVector x1;
  if (start) {
    x1 = *start;
  } else {
    x1 = ParamVector::zeros(obj.dimension());
    for (std::size_t k = 0; k < x1.size(); ++k) {
      x1[k] = rng.uniform(domain.lower()[k], domain.upper()[k]);
    }
  }

  ExactRunResult result;
  SolverConfig current = cfg;
  const double L = cfg.lipschitz_L;
  auto evaluate = [&](ParamVector x, std::optional<double> step) {
    const double f = obj.value(x);
    ParamVector g = obj.gradient(x);
    result.history.append({std::move(x), f, std::move(g), result.history.size() + 1});
    result.sample_rho.push_back(current.rho);
    result.trace.rows.push_back(make_row(result.history, current.rho, L, step));
  };
  evaluate(std::move(x1), std::nullopt);

  for (;;) {
    if (result.history.running_min() < cfg.epsilon / (1.0 - current.rho)) {
      result.terminated_by = Termination::precision;
      break;
    }
    bool exhausted = false;
    for (std::size_t inner = 0; inner < cfg.max_inner_iters; ++inner) {
      std::optional<ParamVector> next = branch_step(obj, result.history, current, rng);
      if (!next) {
        exhausted = true;
        break;
      }
      if (!satisfies_sampling_rule(result.history, *next, current.rho, L)) {
        throw std::logic_error("branch_step produced a sample violating the sampling rule");
      }
      const double step = distance(*next, result.history.back().point);
      evaluate(std::move(*next), step);
    }
    ++result.outer_iterations;
    if (result.history.running_min() < cfg.epsilon / (1.0 - current.rho)) {
      result.terminated_by = Termination::precision;
      break;
    }
    if (result.outer_iterations >= cfg.max_outer_iters || current.rho >= cfg.rho_cap) {
      result.terminated_by = exhausted ? Termination::coverage : Termination::budget;
      break;
    }
    current.rho = std::min(current.rho + cfg.rho_increment, cfg.rho_cap);
  }

  result.final_rho = current.rho;
  result.best = result.history.best();
  return result;
}

}  // namespace bpgrad
