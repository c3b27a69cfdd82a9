#include "bpgrad/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>

#include <json.hpp>

#include "bpgrad/errors.hpp"
#include "bpgrad/format.hpp"

namespace bpgrad {

namespace {

using Defaults = std::map<std::string, std::string>;

void add_dataset_keys(Defaults& d) {
  d["samples"] = "2000";
  d["input_dim"] = "100";
  d["hidden"] = "100";
  d["classes"] = "2";
  d["separation"] = "4";
  d["data_seed"] = "1";
  d["init_sigma"] = "0.05";
  d["weight_decay"] = "0.0005";
  d["loss"] = "softmax_cross_entropy";
}

void add_estimate_keys(Defaults& d) {
  d["inits"] = "500";
  d["pairing"] = "consecutive";
  d["percentile"] = "99";
  d["lipschitz_batch"] = "200";
}

void add_baseline_keys(Defaults& d) {
  d["lr"] = "preset";
  d["baseline_momentum"] = "preset";
  d["baseline_decay"] = "preset";
  d["baseline_epsilon"] = "preset";
  d["beta1"] = "preset";
  d["beta2"] = "preset";
}

const Defaults& defaults_for(Command c) {
  static const std::map<Command, Defaults> table = [] {
    std::map<Command, Defaults> t;
    Defaults demo{
        {"function", "f3"},        {"algorithm", "exact"},      {"start", "2.5"},
        {"preset", "auto"},        {"L", "preset"},             {"L_growth", "preset"},
        {"L_growth_every", "preset"}, {"rho", "0.1"},           {"mu", "0.9"},
        {"epsilon", "1e-4"},       {"gamma", "0.001"},          {"max_inner_iters", "1000"},
        {"max_outer_iters", "1"},  {"rho_increment", "0.1"},    {"rho_cap", "0.95"},
        {"iterations", "1000"},    {"seed", "0"},               {"output_dir", "runs/demo1d"},
    };
    add_baseline_keys(demo);
    t[Command::demo1d] = demo;

    Defaults train{
        {"solvers", "bpgrad,sgd_momentum"}, {"mu_values", "0.9"}, {"L", "auto"},
        {"rho", "0.1"},                     {"L_growth", "1"},    {"L_growth_every", "0"},
        {"epochs", "20"},                   {"batch_size", "200"}, {"monitor_eq4", "false"},
        {"monitor_window", "512"},          {"preset", "cifar10"}, {"checkpoint", "true"},
        {"seed", "0"},                      {"output_dir", "runs/train"},
    };
    add_baseline_keys(train);
    add_dataset_keys(train);
    add_estimate_keys(train);
    t[Command::train] = train;

    Defaults est{
        {"objective", "mlp"}, {"slope", "3"},      {"intercept", "0"},
        {"lower", "0"},       {"upper", "1"},      {"dim", "10"},
        {"offset", "0"},      {"half_width", "1"}, {"seed", "0"},
        {"output_dir", "runs/estimate-l"},
    };
    add_dataset_keys(est);
    add_estimate_keys(est);
    t[Command::estimate_l] = est;

    Defaults sweep{
        {"objective", "quadratic"}, {"L", "auto"},          {"L_grid", "10,20,50,100"},
        {"rho_grid", "0.1"},        {"mu_grid", "0.9"},     {"repeats", "1"},
        {"threads", "0"},           {"epochs", "auto"},     {"batch_size", "200"},
        {"threshold", "auto"},      {"dim", "10"},          {"offset", "0"},
        {"half_width", "10"},       {"start_radius", "1"},  {"seed", "0"},
        {"output_dir", "runs/sweep"},
    };
    add_dataset_keys(sweep);
    add_estimate_keys(sweep);
    t[Command::sweep] = sweep;

    t[Command::bounds_report] = Defaults{
        {"trace", ""},     {"rho", "row"},  {"L", "row"},
        {"volume", ""},    {"dimension", "1"}, {"output_dir", "runs/bounds-report"},
    };
    return t;
  }();
  return table.at(c);
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

bool is_keyword(const std::string& v) { return v == "preset" || v == "auto" || v == "row"; }

std::optional<double> opt_double(const ExperimentConfig& cfg, const std::string& key) {
  const std::string& v = cfg.get(key);
  if (is_keyword(v) || v.empty()) return std::nullopt;
  return cfg.get_double(key);
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

void prepare_output(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
  write_text_file(out_dir / "config.txt", cfg.to_text());
}

BaselineHyper baseline_hyper(const ExperimentConfig& cfg, SolverKind kind, const std::string& preset) {
  BaselineHyper h = supplement_hyper(kind, preset);
  if (auto v = opt_double(cfg, "lr")) h.learning_rate = *v;
  if (auto v = opt_double(cfg, "baseline_momentum")) h.momentum = *v;
  if (auto v = opt_double(cfg, "baseline_decay")) h.decay = *v;
  if (auto v = opt_double(cfg, "baseline_epsilon")) h.epsilon = *v;
  if (auto v = opt_double(cfg, "beta1")) h.beta1 = *v;
  if (auto v = opt_double(cfg, "beta2")) h.beta2 = *v;
  require(h.learning_rate > 0.0, "lr must be > 0");
  require(h.momentum >= 0.0 && h.momentum <= 1.0, "baseline_momentum must lie in [0, 1]");
  require(h.decay >= 0.0 && h.decay <= 1.0, "baseline_decay must lie in [0, 1]");
  require(h.epsilon > 0.0, "baseline_epsilon must be > 0");
  require(h.beta1 >= 0.0 && h.beta1 < 1.0 && h.beta2 >= 0.0 && h.beta2 < 1.0,
          "beta1 and beta2 must lie in [0, 1)");
  return h;
}

std::vector<std::pair<std::string, std::string>> config_pairs(const ExperimentConfig& cfg) {
  return {cfg.values().begin(), cfg.values().end()};
}

std::unique_ptr<Objective> simple_objective(const ExperimentConfig& cfg, const std::string& name) {
  if (name == "f1" || name == "f2" || name == "f3") {
    return std::make_unique<SinusoidalObjective>(make_sinusoid(name));
  }
  if (name == "quadratic") {
    const std::size_t dim = cfg.get_size("dim");
    require(dim >= 1, "dim must be >= 1");
    const double hw = cfg.get_double("half_width");
    require(hw > 0.0, "half_width must be > 0");
    require(cfg.get_double("offset") >= 0.0, "offset must be >= 0");
    return std::make_unique<QuadraticObjective>(dim, cfg.get_double("offset"), hw);
  }
  if (name == "linear") {
    const double lo = cfg.get_double("lower");
    const double hi = cfg.get_double("upper");
    require(lo < hi, "lower must be < upper");
    try {
      return std::make_unique<LinearObjective1D>(cfg.get_double("slope"), cfg.get_double("intercept"),
                                                 lo, hi);
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
  }
  throw ConfigError("unknown objective '" + name + "'");
}

void check_estimate_keys(const ExperimentConfig& cfg) {
  require(cfg.get_size("inits") >= 2, "inits must be >= 2");
  const double p = cfg.get_double("percentile");
  require(p > 0.0 && p <= 100.0, "percentile must lie in (0, 100]");
  parse_pairing(cfg.get("pairing"));
  require(cfg.get_size("lipschitz_batch") >= 1, "lipschitz_batch must be >= 1");
}

double eq4_fraction(const Trace& t) {
  std::size_t n = 0, ok = 0;
  for (const TraceRow& r : t.rows) {
    if (!r.eq4_holds) continue;
    ++n;
    if (*r.eq4_holds) ++ok;
  }
  return n ? static_cast<double>(ok) / static_cast<double>(n) : std::nan("");
}

nlohmann::ordered_json num(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

std::string to_string(Command c) {
  switch (c) {
    case Command::demo1d: return "demo1d";
    case Command::train: return "train";
    case Command::estimate_l: return "estimate-l";
    case Command::sweep: return "sweep";
    case Command::bounds_report: return "bounds-report";
  }
  return "unknown";
}

Command parse_command(std::string_view name) {
  for (Command c : {Command::demo1d, Command::train, Command::estimate_l, Command::sweep,
                    Command::bounds_report}) {
    if (to_string(c) == name) return c;
  }
  throw ConfigError("unknown command '" + std::string(name) + "'");
}

ExperimentConfig::ExperimentConfig(Command command)
    : command_(command), values_(defaults_for(command)) {}

bool ExperimentConfig::has_key(const std::string& key) const { return values_.contains(key); }

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigError("unknown key '" + key + "' for command " + to_string(command_));
  }
  it->second = trim(value);
}

void ExperimentConfig::merge_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::set<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (!seen.insert(key).second) {
      throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    set(key, line.substr(eq + 1));
  }
}

const std::string& ExperimentConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "'");
  return it->second;
}

double ExperimentConfig::get_double(const std::string& key) const {
  try {
    const double v = parse_double(get(key), key);
    if (!std::isfinite(v)) throw ConfigError(key + " must be finite");
    return v;
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
}

std::size_t ExperimentConfig::get_size(const std::string& key) const {
  try {
    const long long v = parse_int(get(key), key);
    if (v < 0) throw ConfigError(key + " must be >= 0");
    return static_cast<std::size_t>(v);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
}

std::uint64_t ExperimentConfig::get_u64(const std::string& key) const {
  const std::string& s = get(key);
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError("invalid " + key + ": '" + s + "'");
  }
  return v;
}

bool ExperimentConfig::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + s + "'");
}

std::vector<double> ExperimentConfig::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : split_list(get(key))) {
    try {
      const double v = parse_double(item, key);
      if (!std::isfinite(v)) throw ConfigError(key + " entries must be finite");
      out.push_back(v);
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
  }
  return out;
}

std::vector<std::string> ExperimentConfig::get_strings(const std::string& key) const {
  return split_list(get(key));
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream out;
  out << "# bpgrad " << to_string(command_) << " effective configuration\n";
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
  return out.str();
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg,
                                         const std::optional<std::string>& flag_value) {
  if (flag_value && !flag_value->empty()) return *flag_value;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  const std::string& v = cfg.get("output_dir");
  if (v.empty()) throw ConfigError("output_dir must not be empty");
  return v;
}

bool TrainResult::any_diverged() const {
  return std::any_of(runs.begin(), runs.end(),
                     [](const TrainRun& r) { return r.result.status == RunStatus::diverged; });
}

std::size_t SweepResult::converged() const {
  return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [&](const SweepCell& c) {
    return c.status == RunStatus::completed && c.final_objective < threshold;
  }));
}

Dataset dataset_from_config(const ExperimentConfig& cfg) {
  const std::size_t n = cfg.get_size("samples");
  const std::size_t dim = cfg.get_size("input_dim");
  const std::size_t classes = cfg.get_size("classes");
  const double sep = cfg.get_double("separation");
  require(n >= 1, "samples must be >= 1");
  require(dim >= 1, "input_dim must be >= 1");
  require(classes >= 2, "classes must be >= 2");
  require(sep >= 0.0, "separation must be >= 0");
  return make_gaussian_classification(n, dim, classes, cfg.get_u64("data_seed"), sep);
}

std::vector<std::size_t> layer_sizes_from_config(const ExperimentConfig& cfg) {
  std::vector<std::size_t> sizes{cfg.get_size("input_dim")};
  for (const std::string& h : cfg.get_strings("hidden")) {
    try {
      const long long v = parse_int(h, "hidden");
      require(v >= 1, "hidden layer widths must be >= 1");
      sizes.push_back(static_cast<std::size_t>(v));
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
  }
  sizes.push_back(cfg.get_size("classes"));
  require(sizes.front() >= 1, "input_dim must be >= 1");
  return sizes;
}

namespace {

struct MlpSetup {
  Dataset data;
  std::vector<std::size_t> sizes;
  LossKind loss = LossKind::softmax_cross_entropy;
  double sigma = 0.05;
  double decay = 0.0;
};

MlpSetup mlp_setup(const ExperimentConfig& cfg) {
  MlpSetup s;
  s.sizes = layer_sizes_from_config(cfg);
  try {
    s.loss = parse_loss_kind(cfg.get("loss"));
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  s.sigma = cfg.get_double("init_sigma");
  s.decay = cfg.get_double("weight_decay");
  require(s.sigma > 0.0, "init_sigma must be > 0");
  require(s.decay >= 0.0, "weight_decay must be >= 0");
  check_estimate_keys(cfg);
  s.data = dataset_from_config(cfg);
  require(cfg.get_size("lipschitz_batch") <= s.data.size(), "lipschitz_batch exceeds samples");
  return s;
}

LipschitzReport mlp_lipschitz(const ExperimentConfig& cfg, const MlpObjective& obj, double sigma) {
  const LipschitzEstimate est =
      estimate_pairs(obj, cfg.get_size("inits"), parse_pairing(cfg.get("pairing")),
                     derive_seed(cfg.get_u64("seed"), 2), sigma, cfg.get_size("lipschitz_batch"));
  return make_report(est, cfg.get_double("percentile"));
}

}  // namespace

double resolve_lipschitz(const ExperimentConfig& cfg, const MlpObjective& obj) {
  if (cfg.get("L") != "auto") {
    const double L = cfg.get_double("L");
    require(L > 0.0, "L must be > 0");
    return L;
  }
  const double L = mlp_lipschitz(cfg, obj, cfg.get_double("init_sigma")).selected_L;
  if (!(L > 0.0)) throw ConfigError("estimated L is zero; set L explicitly");
  return L;
}

Demo1dResult cmd_demo1d(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const std::string function = cfg.get("function");
  const SinusoidalObjective fn = make_sinusoid(function);
  const std::string algorithm = cfg.get("algorithm");
  const bool exact = algorithm == "exact";
  const SolverKind kind = exact ? SolverKind::bpgrad : parse_solver_kind(algorithm);
  const std::string preset = cfg.get("preset") == "auto" ? function : cfg.get("preset");

  SolverConfig sc = supplement_bpgrad(preset, cfg.get_double("mu"));
  if (auto v = opt_double(cfg, "L")) sc.lipschitz_L = *v;
  if (auto v = opt_double(cfg, "L_growth")) sc.lipschitz_growth = *v;
  if (cfg.get("L_growth_every") != "preset") sc.lipschitz_growth_every = cfg.get_size("L_growth_every");
  sc.rho = cfg.get_double("rho");
  sc.epsilon = cfg.get_double("epsilon");
  sc.gamma = cfg.get_double("gamma");
  sc.max_inner_iters = cfg.get_size("max_inner_iters");
  sc.max_outer_iters = cfg.get_size("max_outer_iters");
  sc.rho_increment = cfg.get_double("rho_increment");
  sc.rho_cap = cfg.get_double("rho_cap");
  sc.seed = cfg.get_u64("seed");
  sc.validate();
  require(sc.lipschitz_L > 0.0, "L must be > 0");
  const double start = cfg.get_double("start");
  require(fn.domain().contains(ParamVector{start}),
          "start " + format_double(start) + " lies outside the domain of " + function);
  const std::size_t iterations = cfg.get_size("iterations");
  require(iterations >= 1, "iterations must be >= 1");
  BaselineHyper hyper;
  if (!exact && kind != SolverKind::bpgrad) hyper = baseline_hyper(cfg, kind, preset);

  prepare_output(cfg, out_dir);
  Demo1dResult out;
  out.function = function;
  out.algorithm = algorithm;
  out.oracle_minimizer = fn.known_global()->point[0];
  out.oracle_value = fn.known_global()->value;

  if (exact) {
    ExactRunResult run = run_exact_bpgrad(fn, sc, ParamVector{start});
    out.minimizer = run.best.point[0];
    out.value = run.best.value;
    out.best_visited = out.minimizer;
    out.evaluations = run.evaluations();
    out.terminated_by = to_string(run.terminated_by);
    out.thm2_bound = thm2_bound(sc.lipschitz_L, run.max_rho(), run.history.running_min(), 1,
                                fn.domain().volume());
    for (const EvalRecord& r : run.history.records()) out.trajectory.push_back(r.point[0]);
    out.trace = run.trace;
    out.exact = std::move(run);
  } else {
    const DeterministicAdapter adapter(fn);
    RunSpec spec;
    spec.kind = kind;
    spec.cfg = sc;
    spec.hyper = hyper;
    spec.epochs = iterations;
    spec.batch_size = 1;
    spec.monitor = kind == SolverKind::bpgrad;
    spec.monitor_window = iterations + 1;
    spec.record_trajectory = true;
    const RunResult res = run_solver(adapter, ParamVector{start}, spec);
    out.status = res.status;
    out.minimizer = res.final_point[0];
    out.value = fn.at(out.minimizer);
    out.evaluations = res.trace.size();
    out.terminated_by = res.status == RunStatus::completed ? "budget" : "diverged";
    double best = std::numeric_limits<double>::infinity();
    for (const ParamVector& p : res.trajectory) {
      out.trajectory.push_back(p[0]);
      if (fn.domain().contains(p) && fn.at(p[0]) < best) {
        best = fn.at(p[0]);
        out.best_visited = p[0];
      }
    }
    out.trace = res.trace;
  }

  std::ostringstream traj;
  traj << "iteration,x,f\n";
  for (std::size_t i = 0; i < out.trajectory.size(); ++i) {
    traj << i + 1 << ',' << format_double(out.trajectory[i]) << ','
         << format_double(fn.at(out.trajectory[i])) << '\n';
  }
  write_text_file(out_dir / "trajectory.csv", traj.str());
  trace_to_csv(out.trace, out_dir / "trace.csv");
  if (!out.trace.empty()) bounds_to_csv(bounds_from_trace(out.trace), out_dir / "bounds.csv");

  RunSummary s;
  s.solver = algorithm;
  s.config = config_pairs(cfg);
  s.final_f = out.value;
  s.samples = out.evaluations;
  s.thm2_bound = out.thm2_bound;
  s.terminated_by = out.terminated_by;
  s.metrics = {{"minimizer", out.minimizer},
               {"oracle_minimizer", out.oracle_minimizer},
               {"oracle_value", out.oracle_value},
               {"oracle_error", out.value - out.oracle_value},
               {"minimizer_error", std::abs(out.minimizer - out.oracle_minimizer)},
               {"best_visited", out.best_visited},
               {"lipschitz_L", sc.lipschitz_L}};
  s.notes = {{"function", function}, {"status", to_string(out.status)}};
  write_text_file(out_dir / "summary.json", summary_json(s));
  return out;
}

TrainResult cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  std::vector<SolverKind> kinds;
  for (const std::string& name : cfg.get_strings("solvers")) kinds.push_back(parse_solver_kind(name));
  require(!kinds.empty(), "solvers must list at least one solver");
  const std::vector<double> mus = cfg.get_doubles("mu_values");
  const bool has_bpgrad = std::find(kinds.begin(), kinds.end(), SolverKind::bpgrad) != kinds.end();
  require(!has_bpgrad || !mus.empty(), "mu_values must not be empty when training with bpgrad");
  for (double mu : mus) require(mu >= 0.0 && mu <= 1.0, "mu_values entries must lie in [0, 1]");
  const double rho = cfg.get_double("rho");
  require(rho >= 0.0 && rho < 1.0, "rho must lie in [0, 1)");
  if (cfg.get("L") != "auto") require(cfg.get_double("L") > 0.0, "L must be > 0");
  const std::size_t epochs = cfg.get_size("epochs");
  const std::size_t batch = cfg.get_size("batch_size");
  require(epochs >= 1, "epochs must be >= 1");
  const bool monitor = cfg.get_bool("monitor_eq4");
  const std::size_t window = cfg.get_size("monitor_window");
  require(window >= 1, "monitor_window must be >= 1");
  const bool checkpoint = cfg.get_bool("checkpoint");
  const std::string preset = cfg.get("preset");
  std::vector<BaselineHyper> hypers;
  for (SolverKind k : kinds) {
    hypers.push_back(k == SolverKind::bpgrad ? BaselineHyper{} : baseline_hyper(cfg, k, preset));
  }
  const double growth = cfg.get_double("L_growth");
  const std::size_t growth_every = cfg.get_size("L_growth_every");
  const std::uint64_t seed = cfg.get_u64("seed");
  const MlpSetup setup = mlp_setup(cfg);
  require(batch >= 1 && batch <= setup.data.size(), "batch_size must lie in [1, samples]");

  prepare_output(cfg, out_dir);
  const MlpObjective obj(make_mlp(setup.sizes, setup.loss), setup.data, setup.decay);
  TrainResult out;
  out.param_count = obj.dimension();
  if (cfg.get("L") == "auto") {
    const LipschitzReport rep = mlp_lipschitz(cfg, obj, setup.sigma);
    write_text_file(out_dir / "lipschitz.json", report_json(rep));
    out.lipschitz_L = rep.selected_L;
    if (!(out.lipschitz_L > 0.0)) throw ConfigError("estimated L is zero; set L explicitly");
  } else {
    out.lipschitz_L = cfg.get_double("L");
  }
  const ParamVector x0 = init_gaussian(setup.sizes, setup.sigma, derive_seed(seed, 0), setup.loss).flatten();

  struct Job {
    std::string name;
    SolverKind kind;
    double mu;
    BaselineHyper hyper;
  };
  std::vector<Job> jobs;
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    if (kinds[k] == SolverKind::bpgrad) {
      for (double mu : mus) jobs.push_back({"bpgrad_mu" + format_double(mu), kinds[k], mu, {}});
    } else {
      jobs.push_back({to_string(kinds[k]), kinds[k], 0.0, hypers[k]});
    }
  }

  for (const Job& job : jobs) {
    RunSpec spec;
    spec.kind = job.kind;
    spec.cfg.lipschitz_L = out.lipschitz_L;
    spec.cfg.rho = rho;
    spec.cfg.momentum_mu = job.mu;
    spec.cfg.lipschitz_growth = growth;
    spec.cfg.lipschitz_growth_every = growth_every;
    spec.cfg.seed = derive_seed(seed, 1);
    spec.hyper = job.hyper;
    spec.epochs = epochs;
    spec.batch_size = batch;
    spec.monitor = monitor;
    spec.monitor_window = window;

    TrainRun run;
    run.name = job.name;
    run.kind = job.kind;
    run.mu = job.mu;
    run.result = run_solver(obj, x0, spec);
    run.final_loss = run.result.final_objective;
    Mlp model = obj.architecture();
    if (run.result.final_point.all_finite()) {
      model.unflatten(run.result.final_point);
      run.final_accuracy = accuracy(model, setup.data);
    } else {
      run.final_accuracy = std::nan("");
    }
    if (monitor) run.eq4_fraction = eq4_fraction(run.result.trace);

    const std::filesystem::path dir = out_dir / run.name;
    std::filesystem::create_directories(dir);
    trace_to_csv(run.result.trace, dir / "trace.csv");
    if (!run.result.trace.empty()) {
      bounds_to_csv(bounds_from_trace(run.result.trace), dir / "bounds.csv");
    }
    if (checkpoint && run.result.status == RunStatus::completed) {
      save_checkpoint(model, dir / "model.txt");
    }
    RunSummary s;
    s.solver = run.name;
    s.config = config_pairs(cfg);
    s.final_f = run.final_loss;
    s.samples = run.result.trace.size();
    s.terminated_by = to_string(run.result.status);
    s.metrics = {{"final_accuracy", run.final_accuracy}, {"lipschitz_L", out.lipschitz_L}};
    if (run.eq4_fraction) s.metrics.emplace_back("eq4_fraction", *run.eq4_fraction);
    if (!run.result.status_detail.empty()) s.notes.emplace_back("detail", run.result.status_detail);
    write_text_file(dir / "summary.json", summary_json(s));
    out.runs.push_back(std::move(run));
  }

  if (out.runs.size() >= 2) {
    // BPGrad against the first baseline when both are present, else the first two runs.
    std::size_t a = 0, b = 1;
    auto is_bp = [&](std::size_t k) { return out.runs[k].kind == SolverKind::bpgrad; };
    for (std::size_t k = 0; k < out.runs.size(); ++k) {
      if (!is_bp(k)) {
        b = k;
        break;
      }
    }
    if (b == a || !is_bp(a)) b = 1;
    const ParamVector& pa = out.runs[a].result.final_point;
    const ParamVector& pb = out.runs[b].result.final_point;
    if (pa.all_finite() && pb.all_finite()) out.weight_distance = distance(pa, pb);
  }

  if (monitor) {
    const std::size_t per_epoch = (setup.data.size() + batch - 1) / batch;
    std::ostringstream csv;
    csv << "epoch";
    for (const TrainRun& r : out.runs) csv << ",eq4_fraction_" << r.name;
    csv << '\n';
    for (std::size_t e = 0; e < epochs; ++e) {
      csv << e + 1;
      for (const TrainRun& r : out.runs) {
        std::size_t n = 0, ok = 0;
        for (std::size_t i = e * per_epoch; i < std::min((e + 1) * per_epoch, r.result.trace.size()); ++i) {
          const auto& h = r.result.trace.rows[i].eq4_holds;
          if (!h) continue;
          ++n;
          ok += *h ? 1 : 0;
        }
        csv << ',' << (n ? format_double(static_cast<double>(ok) / static_cast<double>(n)) : "");
      }
      csv << '\n';
    }
    write_text_file(out_dir / "eq4_comparison.csv", csv.str());
  }

  nlohmann::ordered_json j;
  j["lipschitz_L"] = out.lipschitz_L;
  j["param_count"] = out.param_count;
  j["weight_distance"] = out.weight_distance ? num(*out.weight_distance) : nullptr;
  j["runs"] = nlohmann::ordered_json::array();
  for (const TrainRun& r : out.runs) {
    nlohmann::ordered_json rj;
    rj["name"] = r.name;
    rj["solver"] = to_string(r.kind);
    rj["status"] = to_string(r.result.status);
    rj["final_loss"] = num(r.final_loss);
    rj["final_accuracy"] = num(r.final_accuracy);
    rj["eq4_fraction"] = r.eq4_fraction ? num(*r.eq4_fraction) : nullptr;
    j["runs"].push_back(rj);
  }
  write_text_file(out_dir / "summary.json", j.dump(2) + "\n");
  return out;
}

EstimateResult cmd_estimate_l(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const std::string objective = cfg.get("objective");
  check_estimate_keys(cfg);
  const std::size_t inits = cfg.get_size("inits");
  const Pairing pairing = parse_pairing(cfg.get("pairing"));
  const double pct = cfg.get_double("percentile");
  const std::uint64_t seed = cfg.get_u64("seed");

  EstimateResult out;
  if (objective == "mlp") {
    const MlpSetup setup = mlp_setup(cfg);
    prepare_output(cfg, out_dir);
    const MlpObjective obj(make_mlp(setup.sizes, setup.loss), setup.data, setup.decay);
    out.report = make_report(estimate_pairs(obj, inits, pairing, seed, setup.sigma,
                                            cfg.get_size("lipschitz_batch")),
                             pct);
  } else {
    const auto obj = simple_objective(cfg, objective);
    prepare_output(cfg, out_dir);
    out.report = make_report(estimate_pairs(*obj, inits, pairing, seed), pct);
  }
  write_report_csv(out.report, out_dir / "lipschitz.csv");
  write_text_file(out_dir / "lipschitz.json", report_json(out.report) + "\n");
  return out;
}

SweepResult cmd_sweep(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const std::string objective = cfg.get("objective");
  require(objective == "quadratic" || objective == "mlp", "sweep objective must be quadratic or mlp");
  const bool mlp = objective == "mlp";

  std::vector<std::string> L_items = cfg.get_strings("L_grid");
  const std::vector<double> rhos = cfg.get_doubles("rho_grid");
  const std::vector<double> mus = cfg.get_doubles("mu_grid");
  require(!L_items.empty() && !rhos.empty() && !mus.empty(), "sweep grids must not be empty");
  for (double r : rhos) require(r >= 0.0 && r < 1.0, "rho_grid entries must lie in [0, 1)");
  for (double m : mus) require(m >= 0.0 && m <= 1.0, "mu_grid entries must lie in [0, 1]");
  const std::size_t repeats = cfg.get_size("repeats");
  require(repeats >= 1, "repeats must be >= 1");
  const std::size_t threads = cfg.get_size("threads");
  const std::size_t epochs = cfg.get("epochs") == "auto" ? (mlp ? 20 : 500) : cfg.get_size("epochs");
  require(epochs >= 1, "epochs must be >= 1");
  const double threshold =
      cfg.get("threshold") == "auto" ? (mlp ? 0.1 : 1e-3) : cfg.get_double("threshold");
  const std::uint64_t seed = cfg.get_u64("seed");
  if (cfg.get("L") != "auto") require(cfg.get_double("L") > 0.0, "L must be > 0");

  // Entries ending in 'x' are multiples of the base L.
  std::vector<std::pair<double, bool>> L_spec;
  bool needs_base = false;
  for (const std::string& item : L_items) {
    const bool rel = item.back() == 'x';
    double v = 0.0;
    try {
      v = parse_double(rel ? std::string_view(item).substr(0, item.size() - 1) : item, "L_grid entry");
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
    require(std::isfinite(v) && v > 0.0, "L_grid entries must be > 0");
    L_spec.emplace_back(v, rel);
    needs_base = needs_base || rel;
  }

  SweepResult out;
  out.threshold = threshold;
  RunSpec tmpl;
  tmpl.kind = SolverKind::bpgrad;
  tmpl.cfg.seed = seed;
  tmpl.epochs = epochs;

  std::optional<MlpSetup> setup;
  std::unique_ptr<Objective> simple;
  std::unique_ptr<StochasticObjective> stoch;
  std::unique_ptr<MlpObjective> mlp_obj;
  StartFactory start;
  if (mlp) {
    setup = mlp_setup(cfg);
    const std::size_t batch = cfg.get_size("batch_size");
    require(batch >= 1 && batch <= setup->data.size(), "batch_size must lie in [1, samples]");
    tmpl.batch_size = batch;
    prepare_output(cfg, out_dir);
    mlp_obj = std::make_unique<MlpObjective>(make_mlp(setup->sizes, setup->loss), setup->data,
                                             setup->decay);
    const auto sizes = setup->sizes;
    const double sigma = setup->sigma;
    const LossKind loss = setup->loss;
    start = [sizes, sigma, loss](std::uint64_t s) { return init_gaussian(sizes, sigma, s, loss).flatten(); };
    if (needs_base) out.base_L = resolve_lipschitz(cfg, *mlp_obj);
  } else {
    check_estimate_keys(cfg);
    simple = simple_objective(cfg, "quadratic");
    const double radius = cfg.get_double("start_radius");
    require(radius > 0.0 && radius <= cfg.get_double("half_width"),
            "start_radius must lie in (0, half_width]");
    tmpl.batch_size = 1;
    prepare_output(cfg, out_dir);
    stoch = std::make_unique<DeterministicAdapter>(*simple);
    const std::size_t dim = simple->dimension();
    start = [dim, radius](std::uint64_t s) {
      Rng rng(s);
      ParamVector x = ParamVector::zeros(dim);
      for (std::size_t k = 0; k < dim; ++k) x[k] = rng.uniform(-radius, radius);
      return x;
    };
    if (needs_base) {
      if (cfg.get("L") == "auto") {
        out.base_L = make_report(estimate_pairs(*simple, cfg.get_size("inits"),
                                                parse_pairing(cfg.get("pairing")),
                                                derive_seed(seed, 2)),
                                 cfg.get_double("percentile"))
                         .selected_L;
      } else {
        out.base_L = cfg.get_double("L");
      }
    }
  }
  if (!needs_base && cfg.get("L") != "auto") out.base_L = cfg.get_double("L");

  SweepGrid grid;
  for (const auto& [v, rel] : L_spec) grid.L_values.push_back(rel ? v * out.base_L : v);
  grid.rho_values = rhos;
  grid.mu_values = mus;
  grid.repeats = repeats;
  const StochasticObjective& target = mlp ? static_cast<const StochasticObjective&>(*mlp_obj) : *stoch;
  out.cells = run_sweep(target, start, grid, tmpl, threads);

  write_sweep_csv(out.cells, out_dir / "sweep.csv");
  nlohmann::ordered_json j;
  j["objective"] = objective;
  j["base_L"] = out.base_L;
  j["threshold"] = threshold;
  j["cells"] = out.cells.size();
  j["converged"] = out.converged();
  j["diverged"] = std::count_if(out.cells.begin(), out.cells.end(),
                                [](const SweepCell& c) { return c.status == RunStatus::diverged; });
  write_text_file(out_dir / "summary.json", j.dump(2) + "\n");
  return out;
}

BoundsReportResult cmd_bounds_report(const ExperimentConfig& cfg,
                                     const std::filesystem::path& out_dir) {
  const std::string trace_path = cfg.get("trace");
  require(!trace_path.empty(), "bounds-report needs trace = <path to trace.csv>");
  const std::optional<double> rho = opt_double(cfg, "rho");
  if (rho) require(*rho >= 0.0 && *rho < 1.0, "rho must lie in [0, 1)");
  const std::optional<double> L = opt_double(cfg, "L");
  if (L) require(*L > 0.0, "L must be > 0");
  const std::optional<double> volume = opt_double(cfg, "volume");
  if (volume) require(*volume > 0.0, "volume must be > 0");
  const std::size_t dim = cfg.get_size("dimension");
  require(dim >= 1, "dimension must be >= 1");

  Trace trace;
  try {
    trace = read_trace_csv(trace_path);
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("trace ") + trace_path + ": " + e.what());
  }
  require(!trace.empty(), "trace " + trace_path + " has no rows");
  prepare_output(cfg, out_dir);

  BoundsReportResult out;
  out.bounds = bounds_from_trace(trace, rho);
  double rho_max = 0.0;
  for (const BoundsRow& b : out.bounds.rows) rho_max = std::max(rho_max, b.rho);
  const double L_used = L ? *L : trace.rows.back().lipschitz_L;
  const double f_min = out.bounds.rows.back().upper;
  if (volume && L_used > 0.0) out.thm2_bound = thm2_bound(L_used, rho_max, f_min, dim, *volume);
  bounds_to_csv(out.bounds, out_dir / "bounds.csv");

  nlohmann::ordered_json j;
  j["rows"] = out.bounds.size();
  j["initial_gap"] = num(out.bounds.rows.front().gap);
  j["final_gap"] = num(out.bounds.rows.back().gap);
  j["final_lower"] = num(out.bounds.rows.back().lower);
  j["final_upper"] = num(f_min);
  j["rho_max"] = rho_max;
  j["thm2_bound"] = out.thm2_bound ? num(*out.thm2_bound) : nullptr;
  j["samples"] = trace.size();
  write_text_file(out_dir / "summary.json", j.dump(2) + "\n");
  return out;
}

}  // namespace bpgrad
