#include <doctest.h>

#include <cmath>

#include "bpgrad/errors.hpp"
#include "bpgrad/solver.hpp"

using namespace bpgrad;

namespace {

SolverConfig bp_config(double L, double rho, double mu) {
  SolverConfig c;
  c.lipschitz_L = L;
  c.rho = rho;
  c.momentum_mu = mu;
  return c;
}

RunSpec spec_for(SolverKind kind, std::size_t steps) {
  RunSpec s;
  s.kind = kind;
  s.epochs = steps;
  s.batch_size = 1;
  return s;
}

}  // namespace

TEST_CASE("bpgrad_eta examples") {
  CHECK(bpgrad_eta(10.0, 10.0, 0.0, 5.0) == 2.0);
  CHECK(bpgrad_eta(10.0, 8.0, 0.5, 4.0) == 1.5);
  CHECK(bpgrad_eta(3.0, 4.0, 1.0 - 1e-12, 1.0) == 0.0);
  CHECK_THROWS_AS(bpgrad_eta(1.0, 1.0, 0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(bpgrad_eta(1.0, 1.0, 0.0, -1.0), ConfigError);
}

TEST_CASE("bpgrad_step without momentum") {
  Rng rng(0);
  auto s = SolverState::start(ParamVector{0.0, 0.0});
  s = bpgrad_step(s, 6.0, ParamVector{0.0, 3.0}, bp_config(2.0, 0.0, 0.0), rng);
  CHECK(s.last_eta == 3.0);
  CHECK(s.position == ParamVector{0.0, -3.0});
  CHECK(s.history_min == 6.0);
}

TEST_CASE("bpgrad_step with a zero gradient uses the seeded direction") {
  Rng rng(42), oracle_rng(42);
  auto s = SolverState::start(ParamVector{0.0, 0.0});
  s.velocity = ParamVector{0.5, -0.25};
  const auto cfg = bp_config(2.0, 0.0, 1.0);
  s = bpgrad_step(s, 4.0, ParamVector{0.0, 0.0}, cfg, rng);
  const ParamVector u = random_unit_vector(2, oracle_rng);
  const double eta = 2.0;
  CHECK(s.velocity[0] == doctest::Approx(0.5 - eta * u[0]).epsilon(1e-15));
  CHECK(s.velocity[1] == doctest::Approx(-0.25 - eta * u[1]).epsilon(1e-15));
}

TEST_CASE("two bpgrad steps by hand") {
  Rng rng(0);
  const auto cfg = bp_config(4.0, 0.5, 0.9);
  auto s = SolverState::start(ParamVector{1.0});
  s = bpgrad_step(s, 8.0, ParamVector{2.0}, cfg, rng);
  // min 8, eta = (8 - 4) / 4 = 1, v = -1, x = 0
  CHECK(s.velocity[0] == -1.0);
  CHECK(s.position[0] == 0.0);
  s = bpgrad_step(s, 6.0, ParamVector{-5.0}, cfg, rng);
  // min 6, eta = (6 - 3) / 4 = 0.75, v = -0.9 + 0.75 = -0.15, x = -0.15
  CHECK(s.last_eta == 0.75);
  CHECK(s.velocity[0] == doctest::Approx(-0.15).epsilon(1e-15));
  CHECK(s.position[0] == doctest::Approx(-0.15).epsilon(1e-15));
  // the running minimum never grows
  s = bpgrad_step(s, 7.0, ParamVector{1.0}, cfg, rng);
  CHECK(s.history_min == 6.0);
}

TEST_CASE("baseline first steps") {
  BaselineHyper h;
  h.learning_rate = 0.1;
  auto s = baseline_step(SolverKind::sgd, SolverState::start(ParamVector{0.0, 0.0}),
                         ParamVector{1.0, -2.0}, h);
  CHECK(s.position[0] == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(s.position[1] == doctest::Approx(0.2).epsilon(1e-15));

  h = BaselineHyper{};
  h.learning_rate = 1.0;
  h.epsilon = 1e-10;
  s = baseline_step(SolverKind::adagrad, SolverState::start(ParamVector{0.0}), ParamVector{3.0}, h);
  CHECK(s.position[0] == doctest::Approx(-1.0).epsilon(1e-9));

  for (double scale : {1e-3, 1.0, 1e3}) {
    h = BaselineHyper{};
    h.learning_rate = 0.01;
    h.beta1 = 0.9;
    h.beta2 = 0.999;
    s = baseline_step(SolverKind::adam, SolverState::start(ParamVector{0.0}),
                      ParamVector{scale}, h);
    CHECK(std::abs(std::abs(s.position[0]) - 0.01) < 1e-6);
  }
  CHECK_THROWS_AS(baseline_step(SolverKind::bpgrad, SolverState::start(ParamVector{0.0}),
                                ParamVector{1.0}, h),
                  ConfigError);
}

TEST_CASE("sgd momentum accumulates velocity") {
  BaselineHyper h;
  h.learning_rate = 0.1;
  h.momentum = 0.9;
  auto s = SolverState::start(ParamVector{0.0});
  s = baseline_step(SolverKind::sgd_momentum, s, ParamVector{1.0}, h);
  s = baseline_step(SolverKind::sgd_momentum, s, ParamVector{1.0}, h);
  CHECK(s.position[0] == doctest::Approx(-0.1 - 0.19).epsilon(1e-14));
}

TEST_CASE("solver kind names round-trip") {
  for (SolverKind k : {SolverKind::bpgrad, SolverKind::sgd, SolverKind::sgd_momentum,
                       SolverKind::adagrad, SolverKind::adadelta, SolverKind::rmsprop,
                       SolverKind::adam}) {
    CHECK(parse_solver_kind(to_string(k)) == k);
  }
  CHECK_THROWS_AS(parse_solver_kind("lbfgs"), ConfigError);
}

TEST_CASE("monitor_eq4 examples") {
  const std::vector<EvalRecord> one{{ParamVector{0.0}, 10.0, std::nullopt, 1}};
  const double rho = 0.2, L = 4.0;
  const double radius = 10.0 * (1.0 - rho) / L;
  CHECK(monitor_eq4(one, ParamVector{radius + 1e-9}, rho, L).holds);
  const auto stay = monitor_eq4(one, ParamVector{0.0}, rho, L);
  CHECK_FALSE(stay.holds);
  CHECK(stay.lhs == 10.0);
  CHECK(stay.rhs == 2.0);
}

TEST_CASE("monitor_thm3 examples") {
  const std::vector<EvalRecord> self{{ParamVector{1.0, 1.0}, 3.0, std::nullopt, 1}};
  CHECK(monitor_thm3(self, ParamVector{1.0, 0.0}, 2.0) == 1.0);
  const std::vector<EvalRecord> ortho{{ParamVector{0.0, 1.0}, 3.0, std::nullopt, 1},
                                      {ParamVector{0.0, 0.0}, 3.0, std::nullopt, 2}};
  CHECK(monitor_thm3(ortho, ParamVector{1.0, 0.0}, 2.0) == 1.0);
}

TEST_CASE("monitor_cor1 examples") {
  const std::vector<EvalRecord> one{{ParamVector{1.0}, 3.0, std::nullopt, 1}};
  CHECK(monitor_cor1(one, ParamVector{1.0}) == 1.0);
  // descending along -g with g = +1: earlier points lie at larger x
  const std::vector<EvalRecord> line{{ParamVector{3.0}, 9.0, std::nullopt, 1},
                                     {ParamVector{2.0}, 4.0, std::nullopt, 2},
                                     {ParamVector{1.0}, 1.0, std::nullopt, 3}};
  CHECK(monitor_cor1(line, ParamVector{1.0}) == 1.0);
  const std::vector<EvalRecord> bump{{ParamVector{3.0}, 1.0, std::nullopt, 1},
                                     {ParamVector{2.0}, 4.0, std::nullopt, 2}};
  CHECK_FALSE(monitor_cor1(bump, ParamVector{1.0}).has_value());
}

TEST_CASE("BPGrad with momentum solves the quadratic within 200 steps") {
  const auto q = quadratic_objective(10, 0.0, 10.0);
  const DeterministicAdapter obj(q);
  RunSpec spec = spec_for(SolverKind::bpgrad, 200);
  spec.cfg = bp_config(10.0, 0.1, 0.9);
  const auto r = run_solver(obj, ParamVector::filled(10, 1.0 / std::sqrt(10.0)), spec);
  REQUIRE(r.status == RunStatus::completed);
  CHECK(r.final_objective < 1e-3);
  CHECK(r.trace.size() == 200);
}

TEST_CASE("every baseline reduces the quadratic tenfold") {
  const auto q = quadratic_objective(4, 0.0, 10.0);
  const DeterministicAdapter obj(q);
  const ParamVector x0{1.0, -0.5, 0.25, 0.75};
  const double f0 = q.value(x0);
  for (SolverKind k : {SolverKind::sgd, SolverKind::sgd_momentum, SolverKind::adagrad,
                       SolverKind::adadelta, SolverKind::rmsprop, SolverKind::adam}) {
    RunSpec spec = spec_for(k, 500);
    spec.hyper = supplement_hyper(k, "f3");
    const auto r = run_solver(obj, x0, spec);
    INFO(to_string(k));
    REQUIRE(r.status == RunStatus::completed);
    CHECK(r.final_objective < f0 / 10.0);
  }
}

TEST_CASE("trace eta equals the recomputed step size") {
  const auto f3 = make_f3();
  const DeterministicAdapter obj(f3);
  RunSpec spec = spec_for(SolverKind::bpgrad, 60);
  spec.cfg = supplement_bpgrad("f3", 0.9);
  const auto r = run_solver(obj, ParamVector{2.5}, spec);
  double m = std::numeric_limits<double>::infinity();
  for (const auto& row : r.trace.rows) {
    m = std::min(m, row.objective);
    REQUIRE(row.eta.has_value());
    const double recomputed = bpgrad_eta(row.objective, m, row.rho, row.lipschitz_L);
    CHECK(std::abs(*row.eta - recomputed) <= 1e-12 * std::max(1.0, recomputed));
    CHECK(row.upper == m);
  }
  // the schedule doubles L every ten iterations
  CHECK(r.trace.rows[9].lipschitz_L == doctest::Approx(4.0 * std::numbers::pi));
  CHECK(r.trace.rows[10].lipschitz_L == doctest::Approx(8.0 * std::numbers::pi));
}

TEST_CASE("each BPGrad step is bounded by eta plus the carried velocity") {
  const auto q = quadratic_objective(3, 0.5, 10.0);
  Rng rng(1);
  auto s = SolverState::start(ParamVector{2.0, -1.0, 0.5});
  const auto cfg = bp_config(20.0, 0.1, 0.9);
  for (int t = 0; t < 100; ++t) {
    const ParamVector x = s.position;
    const ParamVector v = s.velocity;
    s = bpgrad_step(s, q.value(x), q.gradient(x), cfg, rng);
    CHECK(distance(s.position, x) <= s.last_eta + cfg.momentum_mu * norm2(v) + 1e-12);
  }
}

TEST_CASE("run_solver is deterministic for a fixed seed") {
  const auto q = quadratic_objective(3, 0.0, 10.0);
  const DeterministicAdapter obj(q);
  RunSpec spec = spec_for(SolverKind::bpgrad, 50);
  spec.cfg = bp_config(10.0, 0.1, 0.9);
  spec.monitor = true;
  const auto a = run_solver(obj, ParamVector{1.0, 2.0, 3.0}, spec);
  const auto b = run_solver(obj, ParamVector{1.0, 2.0, 3.0}, spec);
  CHECK(a.trace == b.trace);
  CHECK(a.final_point == b.final_point);
}

TEST_CASE("SGD on f2 stops in the local basin") {
  const auto f2 = make_f2();
  const DeterministicAdapter obj(f2);
  RunSpec spec = spec_for(SolverKind::sgd, 1000);
  spec.hyper.learning_rate = 0.1;
  const auto r = run_solver(obj, ParamVector{2.5}, spec);
  REQUIRE(r.status == RunStatus::completed);
  CHECK(std::abs(r.final_point[0] - 4.913) < 0.01);
  CHECK(std::abs(r.final_point[0] - f2.known_global()->point[0]) > 5.0);
}

TEST_CASE("leaving the domain marks the run diverged") {
  const auto f3 = make_f3();
  const DeterministicAdapter obj(f3);
  RunSpec spec = spec_for(SolverKind::sgd, 10);
  spec.hyper.learning_rate = 100.0;
  const auto r = run_solver(obj, ParamVector{2.5}, spec);
  CHECK(r.status == RunStatus::diverged);
  CHECK(std::isnan(r.final_objective));
}

TEST_CASE("run_solver validates its inputs") {
  const auto q = quadratic_objective(2, 0.0);
  const DeterministicAdapter obj(q);
  RunSpec spec = spec_for(SolverKind::bpgrad, 1);
  spec.batch_size = 2;
  CHECK_THROWS_AS(run_solver(obj, ParamVector{0.1, 0.1}, spec), ConfigError);
  spec.batch_size = 1;
  CHECK_THROWS_AS(run_solver(obj, ParamVector{0.1}, spec), InvalidInput);
  spec.cfg.lipschitz_L = 0.0;
  CHECK_THROWS_AS(run_solver(obj, ParamVector{0.1, 0.1}, spec), ConfigError);
}

TEST_CASE("presets") {
  CHECK(supplement_bpgrad("mnist", 0.9).lipschitz_L == 15.0);
  CHECK(supplement_bpgrad("cifar10", 0.9).lipschitz_L == 50.0);
  CHECK(supplement_bpgrad("f2", 0.0).lipschitz_growth_every == 10);
  CHECK_THROWS_AS(supplement_bpgrad("imagenet", 0.9), ConfigError);
  CHECK(supplement_hyper(SolverKind::sgd_momentum, "f1").learning_rate == 0.008);
  CHECK_THROWS_AS(supplement_hyper(SolverKind::bpgrad, "f1"), ConfigError);
}
