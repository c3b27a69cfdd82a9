#include "bpgrad/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "bpgrad/errors.hpp"

namespace bpgrad {

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::bpgrad: return "bpgrad";
    case SolverKind::sgd: return "sgd";
    case SolverKind::sgd_momentum: return "sgd_momentum";
    case SolverKind::adagrad: return "adagrad";
    case SolverKind::adadelta: return "adadelta";
    case SolverKind::rmsprop: return "rmsprop";
    case SolverKind::adam: return "adam";
  }
  return "unknown";
}

SolverKind parse_solver_kind(std::string_view name) {
  for (SolverKind k : {SolverKind::bpgrad, SolverKind::sgd, SolverKind::sgd_momentum,
                       SolverKind::adagrad, SolverKind::adadelta, SolverKind::rmsprop,
                       SolverKind::adam}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown solver kind '" + std::string(name) + "'");
}

std::string to_string(RunStatus s) { return s == RunStatus::completed ? "completed" : "diverged"; }

SolverState SolverState::start(const ParamVector& x0) {
  SolverState s;
  s.position = x0;
  s.velocity = ParamVector::zeros(x0.size());
  s.accum_sq = ParamVector::zeros(x0.size());
  s.accum_dx = ParamVector::zeros(x0.size());
  s.moment1 = ParamVector::zeros(x0.size());
  return s;
}

double bpgrad_eta(double f_current, double history_min, double rho, double L) {
  if (!(L > 0.0)) throw ConfigError("bpgrad_eta: L must be > 0");
  return std::max(0.0, (f_current - rho * history_min) / L);
}

SolverState bpgrad_step(SolverState state, double f_t, const ParamVector& grad,
                        const SolverConfig& cfg, Rng& rng) {
  if (grad.size() != state.position.size()) throw InvalidInput("bpgrad_step: dimension mismatch");
  state.history_min = state.has_history ? std::min(state.history_min, f_t) : f_t;
  state.has_history = true;
  const double eta = bpgrad_eta(f_t, state.history_min, cfg.rho, cfg.lipschitz_L);
  const ParamVector unit = normalized_gradient(grad, rng);
  state.velocity *= cfg.momentum_mu;
  state.velocity.axpy(-eta, unit);
  state.position += state.velocity;
  state.last_eta = eta;
  ++state.step_count;
  return state;
}

SolverState baseline_step(SolverKind kind, SolverState state, const ParamVector& grad,
                          const BaselineHyper& h) {
  const std::size_t n = grad.size();
  if (n != state.position.size()) throw InvalidInput("baseline_step: dimension mismatch");
  ++state.step_count;
  ParamVector& x = state.position;
  switch (kind) {
    case SolverKind::sgd:
    case SolverKind::sgd_momentum: {
      const double mu = kind == SolverKind::sgd ? 0.0 : h.momentum;
      state.velocity *= mu;
      state.velocity.axpy(-h.learning_rate, grad);
      x += state.velocity;
      break;
    }
    case SolverKind::adagrad:
      for (std::size_t i = 0; i < n; ++i) {
        state.accum_sq[i] = h.decay * state.accum_sq[i] + grad[i] * grad[i];
        x[i] -= h.learning_rate * grad[i] / (std::sqrt(state.accum_sq[i]) + h.epsilon);
      }
      break;
    case SolverKind::adadelta:
      for (std::size_t i = 0; i < n; ++i) {
        state.accum_sq[i] = h.decay * state.accum_sq[i] + (1.0 - h.decay) * grad[i] * grad[i];
        const double dx = std::sqrt((state.accum_dx[i] + h.epsilon) /
                                    (state.accum_sq[i] + h.epsilon)) * grad[i];
        state.accum_dx[i] = h.decay * state.accum_dx[i] + (1.0 - h.decay) * dx * dx;
        x[i] -= h.learning_rate * dx;
      }
      break;
    case SolverKind::rmsprop:
      for (std::size_t i = 0; i < n; ++i) {
        state.accum_sq[i] = h.decay * state.accum_sq[i] + (1.0 - h.decay) * grad[i] * grad[i];
        x[i] -= h.learning_rate * grad[i] / (std::sqrt(state.accum_sq[i]) + h.epsilon);
      }
      break;
    case SolverKind::adam: {
      const double t = static_cast<double>(state.step_count);
      const double c1 = 1.0 - std::pow(h.beta1, t);
      const double c2 = 1.0 - std::pow(h.beta2, t);
      for (std::size_t i = 0; i < n; ++i) {
        state.moment1[i] = h.beta1 * state.moment1[i] + (1.0 - h.beta1) * grad[i];
        state.accum_sq[i] = h.beta2 * state.accum_sq[i] + (1.0 - h.beta2) * grad[i] * grad[i];
        const double m_hat = state.moment1[i] / c1;
        const double v_hat = state.accum_sq[i] / c2;
        x[i] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
      }
      break;
    }
    case SolverKind::bpgrad:
      throw ConfigError("baseline_step: bpgrad is not a baseline solver");
  }
  return state;
}

SamplingRuleCheck monitor_eq4(std::span<const EvalRecord> window, const ParamVector& x_next,
                              double rho, double L) {
  return sampling_rule_terms(window, x_next, rho, L);
}

double monitor_thm3(std::span<const EvalRecord> window, const ParamVector& grad_unit, double L) {
  if (window.empty()) throw ContractError("monitor_thm3: empty window");
  if (!(L > 0.0)) throw ConfigError("monitor_thm3: L must be > 0");
  const EvalRecord& current = window.back();
  std::size_t ok = 0;
  for (const EvalRecord& r : window) {
    const double lhs = dot(r.point - current.point, grad_unit);
    if (lhs >= (r.value - current.value) / L) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(window.size());
}

std::optional<double> monitor_cor1(std::span<const EvalRecord> window,
                                   const ParamVector& grad_unit) {
  if (window.empty()) throw ContractError("monitor_cor1: empty window");
  for (std::size_t i = 1; i < window.size(); ++i) {
    if (!(window[i].value < window[i - 1].value)) return std::nullopt;
  }
  if (window.size() == 1) return 1.0;
  const EvalRecord& current = window.back();
  std::size_t ok = 0;
  for (std::size_t i = 0; i + 1 < window.size(); ++i) {
    if (dot(window[i].point - current.point, grad_unit) >= 0.0) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(window.size() - 1);
}

RunResult run_solver(const StochasticObjective& obj, const ParamVector& x0, const RunSpec& spec) {
  spec.cfg.validate();
  const std::size_t n = obj.sample_count();
  if (n == 0) throw InvalidInput("run_solver: objective has no samples");
  if (spec.batch_size == 0 || spec.batch_size > n) {
    throw ConfigError("run_solver: batch size must lie in [1, sample count]");
  }
  if (x0.size() != obj.dimension()) throw InvalidInput("run_solver: start dimension mismatch");
  if (spec.kind == SolverKind::bpgrad && !(spec.cfg.lipschitz_L > 0.0)) {
    throw ConfigError("run_solver: BPGrad needs L > 0");
  }

  Rng order_rng(spec.cfg.seed);
  Rng direction_rng(derive_seed(spec.cfg.seed, 1));
  RunResult result;
  SolverState state = SolverState::start(x0);
  std::vector<EvalRecord> window;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  ParamVector grad;
  double running_min = std::numeric_limits<double>::infinity();
  std::size_t t = 0;
  if (spec.record_trajectory) result.trajectory.push_back(x0);

  auto diverge = [&](std::string why) {
    result.status = RunStatus::diverged;
    result.status_detail = std::move(why);
  };

  for (std::size_t epoch = 0; epoch < spec.epochs && result.status == RunStatus::completed;
       ++epoch) {
    if (n > 1) order_rng.shuffle(perm);
    for (std::size_t start = 0; start < n; start += spec.batch_size) {
      ++t;
      const std::size_t stop = std::min(n, start + spec.batch_size);
      const std::span<const std::size_t> batch(perm.data() + start, stop - start);

      double f = 0.0;
      try {
        f = obj.loss_and_grad(state.position, batch, grad);
      } catch (const DomainError& e) {
        diverge(std::string("left the domain: ") + e.what());
        break;
      }
      if (!std::isfinite(f) || !grad.all_finite()) {
        diverge("non-finite objective at step " + std::to_string(t));
        break;
      }
      running_min = std::min(running_min, f);

      SolverConfig step_cfg = spec.cfg;
      if (spec.cfg.lipschitz_growth_every > 0) {
        const auto periods = static_cast<double>((t - 1) / spec.cfg.lipschitz_growth_every);
        step_cfg.lipschitz_L = spec.cfg.lipschitz_L * std::pow(spec.cfg.lipschitz_growth, periods);
      }

      TraceRow row;
      row.iteration = t;
      row.objective = f;
      row.grad_norm = norm2(grad);
      row.upper = running_min;
      row.lower = step_cfg.rho * running_min;
      row.rho = step_cfg.rho;
      row.lipschitz_L = step_cfg.lipschitz_L;

      const ParamVector x_t = state.position;
      if (spec.kind == SolverKind::bpgrad) {
        state = bpgrad_step(std::move(state), f, grad, step_cfg, direction_rng);
        row.eta = state.last_eta;
      } else {
        state = baseline_step(spec.kind, std::move(state), grad, spec.hyper);
      }

      if (spec.monitor && step_cfg.lipschitz_L > 0.0) {
        window.push_back({x_t, f, std::nullopt, t});
        if (window.size() > spec.monitor_window) window.erase(window.begin());
        const SamplingRuleCheck eq4 =
            monitor_eq4(window, state.position, step_cfg.rho, step_cfg.lipschitz_L);
        row.eq4_lhs = eq4.lhs;
        row.eq4_rhs = eq4.rhs;
        row.eq4_holds = eq4.holds;
        const double gn = row.grad_norm;
        if (gn > 0.0) {
          const ParamVector unit = grad * (1.0 / gn);
          row.thm3_fraction = monitor_thm3(window, unit, step_cfg.lipschitz_L);
          row.cor1_fraction = monitor_cor1(window, unit);
        }
      }
      result.trace.rows.push_back(row);

      if (!state.position.all_finite()) {
        diverge("non-finite iterate at step " + std::to_string(t));
        break;
      }
      if (spec.record_trajectory) result.trajectory.push_back(state.position);
    }
  }

  result.final_point = state.position;
  result.final_objective = std::numeric_limits<double>::quiet_NaN();
  if (result.status == RunStatus::completed) {
    try {
      result.final_objective = obj.full_value(state.position);
    } catch (const DomainError& e) {
      diverge(std::string("left the domain: ") + e.what());
    }
    if (result.status == RunStatus::completed && !std::isfinite(result.final_objective)) {
      diverge("non-finite final objective");
    }
  }
  return result;
}

BaselineHyper supplement_hyper(SolverKind kind, std::string_view preset) {
  BaselineHyper h;
  const bool one_d = preset == "f1" || preset == "f2" || preset == "f3";
  if (one_d) {
    switch (kind) {
      case SolverKind::adagrad: h = {0.5, 0.0, 0.9, 1e-10, 0.9, 0.999}; break;
      case SolverKind::adadelta: h = {1.0, 0.0, 0.99, 1e-6, 0.9, 0.999}; break;
      case SolverKind::rmsprop: h = {0.05, 0.0, 0.99, 1e-6, 0.9, 0.999}; break;
      case SolverKind::adam: h = {0.1, 0.0, 0.9, 1e-6, 0.9, 0.99}; break;
      case SolverKind::sgd: h = {0.1, 0.0, 0.9, 1e-8, 0.9, 0.999}; break;
      case SolverKind::sgd_momentum:
        h = {preset == "f1" ? 0.008 : 0.1, 0.9, 0.9, 1e-8, 0.9, 0.999};
        break;
      case SolverKind::bpgrad: throw ConfigError("supplement_hyper: bpgrad has no baseline settings");
    }
    return h;
  }
  // Large-scale tables give no global learning rate for the adaptive solvers;
  // 0.001 is the toolbox default they were run with.
  if (preset == "mnist") {
    switch (kind) {
      case SolverKind::adagrad: h = {0.001, 0.0, 1.0, 1e-10, 0.9, 0.999}; break;
      case SolverKind::adadelta: h = {1.0, 0.0, 0.5, 1e-6, 0.9, 0.999}; break;
      case SolverKind::rmsprop: h = {0.001, 0.0, 0.7, 1e-8, 0.9, 0.999}; break;
      case SolverKind::adam: h = {0.001, 0.0, 0.9, 1e-8, 0.9, 0.999}; break;
      case SolverKind::sgd: h = {0.001, 0.0, 0.9, 1e-8, 0.9, 0.999}; break;
      case SolverKind::sgd_momentum: h = {0.001, 0.9, 0.9, 1e-8, 0.9, 0.999}; break;
      case SolverKind::bpgrad: throw ConfigError("supplement_hyper: bpgrad has no baseline settings");
    }
    return h;
  }
  if (preset == "cifar10") {
    switch (kind) {
      case SolverKind::adagrad: h = {0.001, 0.0, 0.9, 1e-10, 0.9, 0.999}; break;
      case SolverKind::adadelta: h = {1.0, 0.0, 0.9, 1e-6, 0.9, 0.999}; break;
      case SolverKind::rmsprop: h = {0.001, 0.0, 0.99, 1e-8, 0.9, 0.999}; break;
      case SolverKind::adam: h = {0.001, 0.0, 0.9, 1e-8, 0.9, 0.999}; break;
      case SolverKind::sgd: h = {0.05, 0.0, 0.9, 1e-8, 0.9, 0.999}; break;
      case SolverKind::sgd_momentum: h = {0.05, 0.9, 0.9, 1e-8, 0.9, 0.999}; break;
      case SolverKind::bpgrad: throw ConfigError("supplement_hyper: bpgrad has no baseline settings");
    }
    return h;
  }
  throw ConfigError("unknown hyperparameter preset '" + std::string(preset) + "'");
}

SolverConfig supplement_bpgrad(std::string_view preset, double momentum) {
  SolverConfig c;
  c.rho = 0.1;
  c.momentum_mu = momentum;
  if (preset == "f1") {
    c.lipschitz_L = 4.0 * std::numbers::pi;
  } else if (preset == "f2" || preset == "f3") {
    c.lipschitz_L = 4.0 * std::numbers::pi;
    c.lipschitz_growth = 2.0;
    c.lipschitz_growth_every = 10;
  } else if (preset == "mnist") {
    c.lipschitz_L = 15.0;
  } else if (preset == "cifar10") {
    c.lipschitz_L = 50.0;
  } else {
    throw ConfigError("unknown hyperparameter preset '" + std::string(preset) + "'");
  }
  return c;
}

}  // namespace bpgrad
