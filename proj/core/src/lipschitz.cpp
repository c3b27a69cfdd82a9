#include "bpgrad/lipschitz.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "bpgrad/errors.hpp"
#include "bpgrad/format.hpp"

namespace bpgrad {

namespace {

LipschitzEstimate assemble(const std::vector<ParamVector>& points, std::vector<double> values,
                           Pairing pairing) {
  LipschitzEstimate est;
  auto add = [&](std::size_t i, std::size_t j) {
    const double dist = distance(points[i], points[j]);
    if (!(dist >= kCoincidentDistance)) {
      ++est.skipped_pairs;
      return;
    }
    const double df = std::abs(values[i] - values[j]);
    est.samples.push_back({i, j, dist, df, df / dist});
  };
  const std::size_t n = points.size();
  if (pairing == Pairing::consecutive) {
    for (std::size_t k = 0; k + 1 < n; ++k) add(k, k + 1);
  } else {
    std::size_t formed = 0;
    for (std::size_t i = 0; i < n && formed < kMaxPairs; ++i) {
      for (std::size_t j = i + 1; j < n && formed < kMaxPairs; ++j, ++formed) add(i, j);
    }
  }
  est.values = std::move(values);
  return est;
}

void require_inits(std::size_t n_inits) {
  if (n_inits < 2) throw ConfigError("Lipschitz estimation needs at least 2 initialisations");
}

}  // namespace

std::string to_string(Pairing p) { return p == Pairing::consecutive ? "consecutive" : "all_pairs"; }

Pairing parse_pairing(std::string_view s) {
  if (s == "consecutive") return Pairing::consecutive;
  if (s == "all_pairs") return Pairing::all_pairs;
  throw ConfigError("unknown pairing '" + std::string(s) + "' (expected consecutive or all_pairs)");
}

LipschitzEstimate estimate_pairs(const Objective& obj, std::size_t n_inits, Pairing pairing,
                                 std::uint64_t seed) {
  require_inits(n_inits);
  Rng rng(seed);
  const BoxDomain& dom = obj.domain();
  std::vector<ParamVector> points;
  std::vector<double> values;
  points.reserve(n_inits);
  values.reserve(n_inits);
  for (std::size_t k = 0; k < n_inits; ++k) {
    ParamVector x = ParamVector::zeros(obj.dimension());
    for (std::size_t c = 0; c < x.size(); ++c) x[c] = rng.uniform(dom.lower()[c], dom.upper()[c]);
    values.push_back(obj.value(x));
    points.push_back(std::move(x));
  }
  return assemble(points, std::move(values), pairing);
}

LipschitzEstimate estimate_pairs(const MlpObjective& obj, std::size_t n_inits, Pairing pairing,
                                 std::uint64_t seed, double sigma, std::size_t batch_size) {
  require_inits(n_inits);
  const std::size_t n = obj.sample_count();
  if (batch_size == 0 || batch_size > n) {
    throw ConfigError("Lipschitz estimation: batch size must lie in [1, sample count]");
  }
  const std::vector<std::size_t> sizes = obj.architecture().sizes();
  std::vector<ParamVector> points(n_inits);
  std::vector<double> values(n_inits);
  std::vector<std::size_t> perm(n);
  for (std::size_t k = 0; k < n_inits; ++k) {
    const std::uint64_t s = derive_seed(seed, k);
    points[k] = init_gaussian(sizes, sigma, s, obj.architecture().loss()).flatten();
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng batch_rng(derive_seed(s, 1));
    batch_rng.shuffle(perm);
    ParamVector grad;
    values[k] = obj.loss_and_grad(points[k], std::span(perm.data(), batch_size), grad);
  }
  return assemble(points, std::move(values), pairing);
}

double percentile_of(std::vector<double> values, double percentile) {
  if (values.empty()) throw InvalidInput("percentile of an empty sample");
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw ConfigError("percentile must lie in (0, 100]");
  }
  std::sort(values.begin(), values.end());
  const double h = percentile / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

double select_L(const std::vector<LipschitzSample>& samples, double percentile) {
  std::vector<double> r;
  r.reserve(samples.size());
  for (const LipschitzSample& s : samples) r.push_back(s.ratio);
  return percentile_of(std::move(r), percentile);
}

double LipschitzReport::median_over_max() const {
  const double mx = percentiles.at(100.0);
  return mx > 0.0 ? percentiles.at(50.0) / mx : 0.0;
}

LipschitzReport make_report(const LipschitzEstimate& estimate, double selection_percentile) {
  if (estimate.samples.empty()) {
    throw InvalidInput("no usable Lipschitz pairs (" + std::to_string(estimate.skipped_pairs) +
                       " skipped as coincident)");
  }
  LipschitzReport rep;
  rep.samples = estimate.samples;
  rep.skipped_pairs = estimate.skipped_pairs;
  rep.selection_percentile = selection_percentile;
  for (double p : {1.0, 5.0, 25.0, 50.0, 75.0, 95.0, 99.0, 100.0, selection_percentile}) {
    rep.percentiles[p] = select_L(rep.samples, p);
  }
  rep.selected_L = rep.percentiles.at(selection_percentile);
  return rep;
}

void write_report_csv(const LipschitzReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "pair_i,pair_j,distance,delta_f,ratio\n";
  for (const LipschitzSample& s : report.samples) {
    out << s.i << ',' << s.j << ',' << format_double(s.distance) << ','
        << format_double(s.delta_f) << ',' << format_double(s.ratio) << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

std::string report_json(const LipschitzReport& report) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json pct = nlohmann::ordered_json::object();
  for (const auto& [p, v] : report.percentiles) pct[format_double(p)] = v;
  j["percentiles"] = pct;
  j["selected_L"] = report.selected_L;
  j["selection_percentile"] = report.selection_percentile;
  j["skipped_pairs"] = report.skipped_pairs;
  j["pairs"] = report.samples.size();
  j["median_over_max"] = report.median_over_max();
  return j.dump(2);
}

std::vector<SweepCell> run_sweep(const StochasticObjective& obj, const StartFactory& start,
                                 const SweepGrid& grid, const RunSpec& tmpl, std::size_t threads) {
  if (grid.L_values.empty() || grid.rho_values.empty() || grid.mu_values.empty() ||
      grid.repeats == 0) {
    throw ConfigError("sweep grid must have at least one value per axis and one repeat");
  }
  std::vector<SweepCell> cells;
  for (double L : grid.L_values) {
    for (double rho : grid.rho_values) {
      for (double mu : grid.mu_values) {
        for (std::size_t r = 0; r < grid.repeats; ++r) {
          SweepCell c;
          c.cell = cells.size();
          c.L = L;
          c.rho = rho;
          c.mu = mu;
          c.repeat = r;
          c.seed = derive_seed(tmpl.cfg.seed, c.cell);
          cells.push_back(c);
        }
      }
    }
  }
  const std::size_t n = obj.sample_count();
  const std::size_t steps_per_epoch = (n + tmpl.batch_size - 1) / std::max<std::size_t>(tmpl.batch_size, 1);

  auto run_cell = [&](SweepCell& c) {
    try {
      RunSpec spec = tmpl;
      spec.kind = SolverKind::bpgrad;
      spec.cfg.lipschitz_L = c.L;
      spec.cfg.rho = c.rho;
      spec.cfg.momentum_mu = c.mu;
      spec.cfg.seed = c.seed;
      const RunResult res = run_solver(obj, start(c.seed), spec);
      c.status = res.status;
      c.detail = res.status_detail;
      c.final_objective = res.final_objective;
      const std::size_t k = std::min(steps_per_epoch, res.trace.size());
      double sum = 0.0;
      for (std::size_t i = 0; i < k; ++i) sum += res.trace.rows[i].objective;
      c.first_epoch_objective = k ? sum / static_cast<double>(k) : std::nan("");
    } catch (const std::exception& e) {
      c.status = RunStatus::diverged;
      c.detail = std::string("error: ") + e.what();
      c.final_objective = std::nan("");
      c.first_epoch_objective = std::nan("");
    }
  };

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) run_cell(cells[k]);
  };
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  pool.clear();
  return cells;
}

std::vector<SweepCell> sweep_L(const StochasticObjective& obj, const StartFactory& start,
                               const std::vector<double>& L_values, std::size_t runs_per_L,
                               const RunSpec& tmpl, std::size_t threads) {
  return run_sweep(obj, start, {L_values, {tmpl.cfg.rho}, {tmpl.cfg.momentum_mu}, runs_per_L},
                   tmpl, threads);
}

std::vector<SweepCell> sweep_rho(const StochasticObjective& obj, const StartFactory& start,
                                 const std::vector<double>& rho_values, std::size_t runs_per_rho,
                                 const RunSpec& tmpl, std::size_t threads) {
  return run_sweep(obj, start,
                   {{tmpl.cfg.lipschitz_L}, rho_values, {tmpl.cfg.momentum_mu}, runs_per_rho},
                   tmpl, threads);
}

void write_sweep_csv(const std::vector<SweepCell>& cells, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "cell,L,rho,mu,repeat,seed,status,first_epoch_objective,final_objective,detail\n";
  for (const SweepCell& c : cells) {
    out << c.cell << ',' << format_double(c.L) << ',' << format_double(c.rho) << ','
        << format_double(c.mu) << ',' << c.repeat << ',' << c.seed << ',' << to_string(c.status)
        << ',' << format_double(c.first_epoch_objective) << ','
        << format_double(c.final_objective) << ',' << csv_escape(c.detail) << '\n';
  }
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace bpgrad
