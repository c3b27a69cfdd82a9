// bpgrad command-line front end. Exit codes: 0 success, 1 I/O or internal
// failure, 2 invalid configuration, 3 a run diverged.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bpgrad/errors.hpp"
#include "bpgrad/experiment.hpp"
#include "bpgrad/format.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitInvalid = 2;
constexpr int kExitDiverged = 3;

struct SubcommandArgs {
  bpgrad::Command command;
  CLI::App* app = nullptr;
  std::string config_file;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flag_values;
  std::map<std::string, CLI::Option*> flag_options;
};

bool is_bool_key(const std::string& key) { return key == "monitor_eq4" || key == "checkpoint"; }

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

const char* description(bpgrad::Command c) {
  switch (c) {
    case bpgrad::Command::demo1d: return "Run one method on a 1D test function from x1 = 2.5";
    case bpgrad::Command::train: return "Train the MLP on the synthetic classification task";
    case bpgrad::Command::estimate_l: return "Estimate the Lipschitz constant from random pairs";
    case bpgrad::Command::sweep: return "Grid over L, rho and momentum for the BPGrad solver";
    case bpgrad::Command::bounds_report: return "Recompute bound estimators from a trace CSV";
  }
  return "";
}

void add_subcommand(CLI::App& app, SubcommandArgs& args) {
  args.app = app.add_subcommand(bpgrad::to_string(args.command), description(args.command));
  args.app->add_option("--config", args.config_file, "key = value configuration file")
      ->check(CLI::ExistingFile);
  args.app->add_option("--set", args.sets, "Override one key (repeatable): key=value");
  const bpgrad::ExperimentConfig defaults(args.command);
  for (const auto& [key, value] : defaults.values()) {
    CLI::Option* opt = nullptr;
    const std::string help = "default: " + (value.empty() ? std::string("(none)") : value);
    if (is_bool_key(key)) {
      opt = args.app->add_option(flag_name(key), args.flag_values[key], help)
                ->expected(0, 1)
                ->default_str("true");
    } else {
      opt = args.app->add_option(flag_name(key), args.flag_values[key], help);
    }
    args.flag_options[key] = opt;
  }
}

bpgrad::ExperimentConfig build_config(const SubcommandArgs& args,
                                      std::optional<std::string>& output_flag) {
  bpgrad::ExperimentConfig cfg(args.command);
  if (!args.config_file.empty()) cfg.merge_text(bpgrad::read_text_file(args.config_file));
  for (const auto& [key, opt] : args.flag_options) {
    if (opt->count() == 0) continue;
    std::string value = args.flag_values.at(key);
    if (is_bool_key(key) && value.empty()) value = "true";
    cfg.set(key, value);
    if (key == "output_dir") output_flag = value;
  }
  for (const std::string& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw bpgrad::ConfigError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    cfg.set(key, kv.substr(eq + 1));
    if (key == "output_dir") output_flag = kv.substr(eq + 1);
  }
  return cfg;
}

int run(const SubcommandArgs& args) {
  std::optional<std::string> output_flag;
  bpgrad::ExperimentConfig cfg = build_config(args, output_flag);
  const std::filesystem::path out = bpgrad::resolve_output_dir(cfg, output_flag);
  cfg.set("output_dir", out.string());
  using bpgrad::format_double;

  switch (args.command) {
    case bpgrad::Command::demo1d: {
      const auto r = bpgrad::cmd_demo1d(cfg, out);
      std::cout << r.function << " " << r.algorithm << ": x = " << format_double(r.minimizer)
                << ", f = " << format_double(r.value) << ", oracle x* = "
                << format_double(r.oracle_minimizer) << ", evaluations = " << r.evaluations
                << ", terminated by " << r.terminated_by << "\n";
      std::cout << "artifacts in " << out.string() << "\n";
      return r.status == bpgrad::RunStatus::diverged ? kExitDiverged : kExitOk;
    }
    case bpgrad::Command::train: {
      const auto r = bpgrad::cmd_train(cfg, out);
      std::cout << "L = " << format_double(r.lipschitz_L) << ", parameters = " << r.param_count
                << "\n";
      for (const auto& run : r.runs) {
        std::cout << run.name << ": " << bpgrad::to_string(run.result.status)
                  << ", final loss = " << format_double(run.final_loss)
                  << ", accuracy = " << format_double(run.final_accuracy);
        if (run.eq4_fraction) std::cout << ", eq4 fraction = " << format_double(*run.eq4_fraction);
        std::cout << "\n";
      }
      if (r.weight_distance) {
        std::cout << "weight distance = " << format_double(*r.weight_distance) << "\n";
      }
      std::cout << "artifacts in " << out.string() << "\n";
      return r.any_diverged() ? kExitDiverged : kExitOk;
    }
    case bpgrad::Command::estimate_l: {
      const auto r = bpgrad::cmd_estimate_l(cfg, out);
      std::cout << "selected L = " << format_double(r.report.selected_L) << " (percentile "
                << format_double(r.report.selection_percentile) << ", " << r.report.samples.size()
                << " pairs, " << r.report.skipped_pairs << " skipped, median/max = "
                << format_double(r.report.median_over_max()) << ")\n";
      std::cout << "artifacts in " << out.string() << "\n";
      return kExitOk;
    }
    case bpgrad::Command::sweep: {
      const auto r = bpgrad::cmd_sweep(cfg, out);
      std::cout << r.converged() << " of " << r.cells.size() << " cells below "
                << format_double(r.threshold) << "\n";
      std::cout << "artifacts in " << out.string() << "\n";
      return kExitOk;
    }
    case bpgrad::Command::bounds_report: {
      const auto r = bpgrad::cmd_bounds_report(cfg, out);
      const auto& last = r.bounds.rows.back();
      std::cout << "final bounds [" << format_double(last.lower) << ", " << format_double(last.upper)
                << "], gap " << format_double(last.gap);
      if (r.thm2_bound) std::cout << ", sample bound " << format_double(*r.thm2_bound);
      std::cout << "\nartifacts in " << out.string() << "\n";
      return kExitOk;
    }
  }
  return kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BPGrad branch-and-prune optimisation experiments"};
  app.require_subcommand(1);
  std::vector<SubcommandArgs> subs;
  for (bpgrad::Command c : {bpgrad::Command::demo1d, bpgrad::Command::train,
                            bpgrad::Command::estimate_l, bpgrad::Command::sweep,
                            bpgrad::Command::bounds_report}) {
    SubcommandArgs s;
    s.command = c;
    subs.push_back(std::move(s));
  }
  for (SubcommandArgs& s : subs) add_subcommand(app, s);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInvalid;
  }

  try {
    for (const SubcommandArgs& s : subs) {
      if (s.app->parsed()) return run(s);
    }
  } catch (const bpgrad::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const bpgrad::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const bpgrad::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
