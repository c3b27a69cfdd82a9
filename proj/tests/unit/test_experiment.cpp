#include <doctest.h>

#include <cstdlib>
#include <filesystem>

#include <json.hpp>

#include "bpgrad/errors.hpp"
#include "bpgrad/experiment.hpp"

using namespace bpgrad;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bpgrad_test_exp_" + name);
  fs::remove_all(p);
  return p;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text_file(p)); }

ExperimentConfig small_train() {
  ExperimentConfig c(Command::train);
  c.merge_text(
      "samples = 200\ninput_dim = 10\nhidden = 8\nepochs = 2\nbatch_size = 50\n"
      "L = 15\nsolvers = bpgrad,sgd_momentum\nmu_values = 0,0.9\nmonitor_eq4 = true\n");
  return c;
}

}  // namespace

TEST_CASE("command names") {
  for (Command c : {Command::demo1d, Command::train, Command::estimate_l, Command::sweep,
                    Command::bounds_report}) {
    CHECK(parse_command(to_string(c)) == c);
  }
  CHECK(to_string(Command::estimate_l) == "estimate-l");
  CHECK_THROWS_AS(parse_command("plot"), ConfigError);
}

TEST_CASE("config text parsing") {
  ExperimentConfig c(Command::demo1d);
  c.merge_text("# comment\n\n  function = f2   # trailing\nrho=0.2\n");
  CHECK(c.get("function") == "f2");
  CHECK(c.get_double("rho") == 0.2);
  CHECK(c.get("algorithm") == "exact");
  CHECK_THROWS_AS(c.merge_text("colour = red\n"), ConfigError);
  CHECK_THROWS_AS(c.merge_text("rho = 0.1\nrho = 0.2\n"), ConfigError);
  CHECK_THROWS_AS(c.merge_text("rho 0.1\n"), ConfigError);
  CHECK_THROWS_AS(c.set("nonsense", "1"), ConfigError);
}

TEST_CASE("typed getters reject malformed values") {
  ExperimentConfig c(Command::train);
  c.set("epochs", "-3");
  CHECK_THROWS_AS((void)c.get_size("epochs"), ConfigError);
  c.set("rho", "abc");
  CHECK_THROWS_AS((void)c.get_double("rho"), ConfigError);
  c.set("monitor_eq4", "maybe");
  CHECK_THROWS_AS((void)c.get_bool("monitor_eq4"), ConfigError);
  c.set("monitor_eq4", "on");
  CHECK(c.get_bool("monitor_eq4"));
  c.set("mu_values", "0, 0.5 ,0.9");
  CHECK(c.get_doubles("mu_values") == std::vector<double>{0.0, 0.5, 0.9});
  c.set("seed", "18446744073709551615");
  CHECK(c.get_u64("seed") == 18446744073709551615ULL);
}

TEST_CASE("config text round trip") {
  ExperimentConfig a(Command::sweep);
  a.set("rho_grid", "0,0.1");
  ExperimentConfig b(Command::sweep);
  b.merge_text(a.to_text());
  CHECK(a.values() == b.values());
}

TEST_CASE("output directory precedence: flag, environment, config") {
  ExperimentConfig c(Command::demo1d);
  c.set("output_dir", "from_config");
  ::unsetenv(kOutputDirEnv);
  CHECK(resolve_output_dir(c) == fs::path("from_config"));
  ::setenv(kOutputDirEnv, "from_env", 1);
  CHECK(resolve_output_dir(c) == fs::path("from_env"));
  CHECK(resolve_output_dir(c, std::string("from_flag")) == fs::path("from_flag"));
  ::unsetenv(kOutputDirEnv);
}

TEST_CASE("demo1d exact on f3 writes every artifact") {
  const fs::path out = scratch("demo_f3");
  const auto r = cmd_demo1d(ExperimentConfig(Command::demo1d), out);
  CHECK(std::abs(r.minimizer - 11.086) <= 0.05);
  CHECK(r.evaluations <= 30);
  for (const char* f : {"config.txt", "trajectory.csv", "trace.csv", "bounds.csv", "summary.json"}) {
    CHECK(fs::exists(out / f));
  }
  const auto j = read_json(out / "summary.json");
  CHECK(j.at("samples").get<std::size_t>() == r.evaluations);
  CHECK(j.at("thm2_bound").get<double>() >= static_cast<double>(r.evaluations));
  CHECK(j.at("oracle_error").get<double>() <= 0.05);
  fs::remove_all(out);
}

TEST_CASE("rerunning from the echoed config reproduces the artifacts") {
  const fs::path a = scratch("echo_a"), b = scratch("echo_b");
  ExperimentConfig c(Command::demo1d);
  c.merge_text("function = f2\nalgorithm = bpgrad\nmu = 0.9\niterations = 200\n");
  c.set("output_dir", a.string());
  (void)cmd_demo1d(c, a);
  ExperimentConfig again(Command::demo1d);
  again.merge_text(read_text_file(a / "config.txt"));
  again.set("output_dir", b.string());
  (void)cmd_demo1d(again, b);
  for (const char* f : {"trajectory.csv", "trace.csv", "bounds.csv"}) {
    CHECK(read_text_file(a / f) == read_text_file(b / f));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("demo1d validation happens before any output") {
  const fs::path out = scratch("demo_bad");
  ExperimentConfig c(Command::demo1d);
  c.set("function", "f9");
  CHECK_THROWS_AS(cmd_demo1d(c, out), ConfigError);
  c = ExperimentConfig(Command::demo1d);
  c.set("start", "20");
  CHECK_THROWS_AS(cmd_demo1d(c, out), ConfigError);
  c = ExperimentConfig(Command::demo1d);
  c.set("rho", "1.5");
  CHECK_THROWS_AS(cmd_demo1d(c, out), ConfigError);
  c = ExperimentConfig(Command::demo1d);
  c.set("algorithm", "newton");
  CHECK_THROWS_AS(cmd_demo1d(c, out), ConfigError);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("demo1d sgd on f2 stays in the local basin") {
  const fs::path out = scratch("demo_sgd");
  ExperimentConfig c(Command::demo1d);
  c.merge_text("function = f2\nalgorithm = sgd_momentum\n");
  const auto r = cmd_demo1d(c, out);
  CHECK(std::abs(r.minimizer - 4.913) < 0.2);
  fs::remove_all(out);
}

TEST_CASE("small train run writes per-run artifacts and is deterministic") {
  const fs::path a = scratch("train_a"), b = scratch("train_b");
  const auto r = cmd_train(small_train(), a);
  (void)cmd_train(small_train(), b);
  REQUIRE(r.runs.size() == 3);
  CHECK(r.runs[0].name == "bpgrad_mu0");
  CHECK(r.runs[1].name == "bpgrad_mu0.9");
  CHECK(r.runs[2].name == "sgd_momentum");
  CHECK(r.weight_distance.has_value());
  CHECK(r.param_count == 10 * 8 + 8 + 8 * 2 + 2);
  for (const auto& run : r.runs) {
    for (const char* f : {"trace.csv", "bounds.csv", "model.txt", "summary.json"}) {
      CHECK(fs::exists(a / run.name / f));
    }
    CHECK(read_text_file(a / run.name / "trace.csv") == read_text_file(b / run.name / "trace.csv"));
  }
  CHECK(fs::exists(a / "eq4_comparison.csv"));
  const auto j = read_json(a / "summary.json");
  CHECK(j.at("runs").size() == 3);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("train rejects bad settings") {
  const fs::path out = scratch("train_bad");
  ExperimentConfig c = small_train();
  c.set("batch_size", "1000");
  CHECK_THROWS_AS(cmd_train(c, out), ConfigError);
  c = small_train();
  c.set("solvers", "bpgrad,lbfgs");
  CHECK_THROWS_AS(cmd_train(c, out), ConfigError);
  c = small_train();
  c.set("solvers", "");
  CHECK_THROWS_AS(cmd_train(c, out), ConfigError);
  CHECK_FALSE(fs::exists(out));
}

TEST_CASE("estimate-l on a linear objective selects the slope") {
  const fs::path out = scratch("est");
  ExperimentConfig c(Command::estimate_l);
  c.merge_text("objective = linear\nslope = 3\ninits = 100\n");
  for (const char* p : {"50", "99"}) {
    c.set("percentile", p);
    CHECK(cmd_estimate_l(c, out).report.selected_L == doctest::Approx(3.0).epsilon(1e-9));
  }
  CHECK(fs::exists(out / "lipschitz.csv"));
  CHECK(fs::exists(out / "lipschitz.json"));
  c.set("objective", "f3");
  c.set("percentile", "50");
  const double l50 = cmd_estimate_l(c, out).report.selected_L;
  c.set("percentile", "99");
  CHECK(l50 <= cmd_estimate_l(c, out).report.selected_L);
  fs::remove_all(out);
}

TEST_CASE("sweep over an L grid on the quadratic") {
  const fs::path out = scratch("sweep");
  ExperimentConfig c(Command::sweep);
  c.merge_text("repeats = 2\ndim = 3\n");
  const auto r = cmd_sweep(c, out);
  CHECK(r.cells.size() == 8);
  CHECK(r.converged() == 8);
  const std::string csv = read_text_file(out / "sweep.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
  c.set("L_grid", "");
  CHECK_THROWS_AS(cmd_sweep(c, scratch("sweep_empty")), ConfigError);
  fs::remove_all(out);
}

TEST_CASE("sweep over rho on the quadratic converges everywhere") {
  const fs::path out = scratch("sweep_rho");
  ExperimentConfig c(Command::sweep);
  c.merge_text("L_grid = 20\nrho_grid = 0,0.1,0.3,0.5\ndim = 3\n");
  const auto r = cmd_sweep(c, out);
  CHECK(r.cells.size() == 4);
  CHECK(r.converged() == 4);
  fs::remove_all(out);
}

TEST_CASE("bounds-report recomputes bounds from a trace") {
  const fs::path demo = scratch("br_demo"), out = scratch("br_out");
  (void)cmd_demo1d(ExperimentConfig(Command::demo1d), demo);
  ExperimentConfig c(Command::bounds_report);
  c.set("trace", (demo / "trace.csv").string());
  c.set("volume", "12.566370614359172");
  const auto r = cmd_bounds_report(c, out);
  CHECK(read_text_file(out / "bounds.csv") == read_text_file(demo / "bounds.csv"));
  REQUIRE(r.thm2_bound.has_value());
  CHECK(*r.thm2_bound >= static_cast<double>(r.bounds.size()));
  c.set("trace", "");
  CHECK_THROWS_AS(cmd_bounds_report(c, out), ConfigError);
  c.set("trace", (demo / "summary.json").string());
  CHECK_THROWS_AS(cmd_bounds_report(c, out), ConfigError);
  fs::remove_all(demo);
  fs::remove_all(out);
}
