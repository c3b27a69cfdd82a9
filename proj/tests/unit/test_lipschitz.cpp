#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <json.hpp>

#include "bpgrad/diagnostics.hpp"
#include "bpgrad/errors.hpp"
#include "bpgrad/lipschitz.hpp"

using namespace bpgrad;
namespace fs = std::filesystem;

namespace {

std::vector<LipschitzSample> ratios(const std::vector<double>& values) {
  std::vector<LipschitzSample> out;
  for (double v : values) {
    LipschitzSample s;
    s.ratio = v;
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("linear objective gives ratio 3 everywhere") {
  const LinearObjective1D f(3.0, 0.0, 0.0, 1.0);
  const auto est = estimate_pairs(f, 200, Pairing::consecutive, 1);
  CHECK(est.samples.size() + est.skipped_pairs == 199);
  for (const auto& s : est.samples) CHECK(s.ratio == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("constant objective gives ratio 0") {
  const ConstantObjective c(BoxDomain::cube(2, 0.0, 1.0), 4.0);
  const auto est = estimate_pairs(c, 50, Pairing::all_pairs, 2);
  CHECK(est.samples.size() == 50 * 49 / 2);
  for (const auto& s : est.samples) CHECK(s.ratio == 0.0);
  CHECK(make_report(est).median_over_max() == 0.0);
}

TEST_CASE("f3 ratios never exceed the derivative bound") {
  const auto f3 = make_f3();
  double sup = 0.0;
  for (int i = 0; i <= 1000000; ++i) {
    const double x = 4.0 * std::numbers::pi * i / 1000000;
    sup = std::max(sup, std::abs(std::sin(x) + x * std::cos(x)));
  }
  const auto est = estimate_pairs(f3, 1000, Pairing::all_pairs, 3);
  double mx = 0.0;
  for (const auto& s : est.samples) mx = std::max(mx, s.ratio);
  CHECK(mx <= sup + 1e-9);
  CHECK(mx > 0.5 * sup);
}

TEST_CASE("coincident pairs are skipped and counted") {
  const LinearObjective1D f(3.0, 0.0, 0.0, 1.0);
  // 1D uniform draws practically never coincide, so build a degenerate domain instead.
  const ConstantObjective c(BoxDomain::interval(0.0, 1e-300), 1.0);
  const auto est = estimate_pairs(c, 10, Pairing::consecutive, 4);
  CHECK(est.skipped_pairs == 9);
  CHECK(est.samples.empty());
  CHECK_THROWS_AS(estimate_pairs(f, 1, Pairing::consecutive, 0), ConfigError);
  CHECK_THROWS_AS(make_report(est), InvalidInput);
}

TEST_CASE("select_L interpolation rule") {
  CHECK(select_L(ratios({2.5, 2.5, 2.5}), 1.0) == 2.5);
  CHECK(select_L(ratios({2.5, 2.5, 2.5}), 100.0) == 2.5);
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i);
  // h = 0.99 * 99 = 98.01 -> 99 + 0.01 * (100 - 99)
  CHECK(select_L(ratios(v), 99.0) == doctest::Approx(99.01).epsilon(1e-12));
  CHECK(select_L(ratios(v), 50.0) == doctest::Approx(50.5).epsilon(1e-12));
  CHECK(select_L(ratios(v), 100.0) == 100.0);
  CHECK_THROWS_AS(select_L({}, 50.0), InvalidInput);
  CHECK_THROWS_AS(select_L(ratios(v), 0.0), ConfigError);
  CHECK_THROWS_AS(select_L(ratios(v), 100.5), ConfigError);
}

TEST_CASE("select_L is monotone in the percentile") {
  Rng rng(6);
  std::vector<double> v(257);
  for (double& x : v) x = std::exp(rng.normal());
  double prev = 0.0;
  for (double p = 0.5; p <= 100.0; p += 0.5) {
    const double q = select_L(ratios(v), p);
    CHECK(q >= prev);
    prev = q;
  }
  CHECK(prev == *std::max_element(v.begin(), v.end()));
}

TEST_CASE("estimates are deterministic per seed") {
  const auto f2 = make_f2();
  const auto a = estimate_pairs(f2, 100, Pairing::consecutive, 9);
  const auto b = estimate_pairs(f2, 100, Pairing::consecutive, 9);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t k = 0; k < a.samples.size(); ++k) CHECK(a.samples[k].ratio == b.samples[k].ratio);
  CHECK(a.values == b.values);
}

TEST_CASE("network estimate is reproducible and skewed") {
  const Dataset d = make_gaussian_classification(400, 20, 2, 1);
  const MlpObjective obj(make_mlp({20, 20, 2}), d, 5e-4);
  const auto a = estimate_pairs(obj, 60, Pairing::consecutive, 5, 0.05, 100);
  const auto b = estimate_pairs(obj, 60, Pairing::consecutive, 5, 0.05, 100);
  CHECK(a.values == b.values);
  CHECK(a.samples.size() == 59);
  const auto report = make_report(a);
  CHECK(report.selected_L == report.percentiles.at(99.0));
  CHECK(report.percentiles.size() == 8);
  CHECK(report.median_over_max() <= 1.0);
}

TEST_CASE("report JSON and CSV") {
  const LinearObjective1D f(3.0, 0.0, 0.0, 1.0);
  const auto report = make_report(estimate_pairs(f, 20, Pairing::consecutive, 1), 95.0);
  const auto j = nlohmann::json::parse(report_json(report));
  CHECK(j.at("selected_L").get<double>() == doctest::Approx(3.0));
  CHECK(j.at("selection_percentile").get<double>() == 95.0);
  CHECK(j.at("pairs").get<std::size_t>() == report.samples.size());
  CHECK(j.at("percentiles").contains("99"));

  const fs::path dir = fs::temp_directory_path() / "bpgrad_test_lipschitz";
  fs::create_directories(dir);
  write_report_csv(report, dir / "l.csv");
  const std::string csv = read_text_file(dir / "l.csv");
  CHECK(csv.rfind("pair_i,pair_j,distance,delta_f,ratio\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(report.samples.size() + 1));
  fs::remove_all(dir);
}

TEST_CASE("sweep produces one row per grid cell in nesting order") {
  const auto q = quadratic_objective(3, 0.0, 10.0);
  const DeterministicAdapter obj(q);
  RunSpec tmpl;
  tmpl.kind = SolverKind::bpgrad;
  tmpl.epochs = 500;
  tmpl.batch_size = 1;
  tmpl.cfg.rho = 0.1;
  tmpl.cfg.momentum_mu = 0.9;
  const StartFactory start = [](std::uint64_t seed) {
    Rng rng(seed);
    return random_unit_vector(3, rng);
  };
  const auto cells = sweep_L(obj, start, {10.0, 20.0, 50.0, 100.0}, 2, tmpl, 3);
  REQUIRE(cells.size() == 8);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    CHECK(cells[k].cell == k);
    CHECK(cells[k].repeat == k % 2);
    CHECK(cells[k].seed == derive_seed(tmpl.cfg.seed, k));
    CHECK(cells[k].status == RunStatus::completed);
    CHECK(cells[k].final_objective < 1e-3);
  }
  CHECK(cells[0].L == 10.0);
  CHECK(cells[7].L == 100.0);
  // worker count does not change results
  const auto serial = sweep_L(obj, start, {10.0, 20.0, 50.0, 100.0}, 2, tmpl, 1);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    CHECK(serial[k].final_objective == cells[k].final_objective);
  }
  CHECK(sweep_L(obj, start, {10.0}, 1, tmpl).size() == 1);
  CHECK(sweep_rho(obj, start, {0.0, 0.1, 0.3}, 1, tmpl).size() == 3);
}

TEST_CASE("empty sweep grids are rejected") {
  const auto q = quadratic_objective(1, 0.0);
  const DeterministicAdapter obj(q);
  const StartFactory start = [](std::uint64_t) { return ParamVector{0.5}; };
  CHECK_THROWS_AS(sweep_L(obj, start, {}, 1, RunSpec{}), ConfigError);
  CHECK_THROWS_AS(sweep_L(obj, start, {1.0}, 0, RunSpec{}), ConfigError);
}

TEST_CASE("a failing cell is recorded as diverged") {
  const auto q = quadratic_objective(1, 0.0, 1.0);
  const DeterministicAdapter obj(q);
  RunSpec tmpl;
  tmpl.epochs = 50;
  tmpl.cfg.rho = 0.0;
  tmpl.cfg.momentum_mu = 0.0;
  const StartFactory start = [](std::uint64_t) { return ParamVector{0.9}; };
  // L = 0.1 gives eta = 10 f, far outside the unit box
  const auto cells = sweep_L(obj, start, {0.1, 10.0}, 1, tmpl, 1);
  CHECK(cells[0].status == RunStatus::diverged);
  CHECK_FALSE(cells[0].detail.empty());
  CHECK(cells[1].status == RunStatus::completed);
}

TEST_CASE("pairing names") {
  CHECK(parse_pairing("all_pairs") == Pairing::all_pairs);
  CHECK(to_string(Pairing::consecutive) == "consecutive");
  CHECK_THROWS_AS(parse_pairing("random"), ConfigError);
}
