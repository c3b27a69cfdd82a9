#include "bpgrad/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "bpgrad/errors.hpp"
#include "bpgrad/format.hpp"

namespace bpgrad {

namespace {

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::optional<double> opt_parse(const std::string& s, const char* what) {
  if (s.empty()) return std::nullopt;
  return parse_double(s, what);
}

// Non-finite values have no JSON literal; emit null instead.
nlohmann::ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

}  // namespace

BoundsTrace bounds_from_trace(const Trace& trace, std::optional<double> rho) {
  if (trace.empty()) throw InvalidInput("bounds_from_trace: empty trace");
  if (rho && !(*rho >= 0.0 && *rho < 1.0)) throw ConfigError("bounds_from_trace: rho outside [0, 1)");
  BoundsTrace out;
  out.rows.reserve(trace.size());
  double m = std::numeric_limits<double>::infinity();
  for (const TraceRow& r : trace.rows) {
    m = std::min(m, r.objective);
    const double p = rho ? *rho : r.rho;
    BoundsRow b;
    b.iteration = r.iteration;
    b.upper = m;
    b.lower = p * m;
    b.gap = m - b.lower;
    b.rho = p;
    out.rows.push_back(b);
  }
  return out;
}

double unit_ball_volume(std::size_t d) {
  if (d == 0) throw ConfigError("unit_ball_volume: d must be >= 1");
  const double half = 0.5 * static_cast<double>(d);
  return std::pow(std::numbers::pi, half) / std::tgamma(half + 1.0);
}

double thm2_bound(double L, double rho, double f_min, std::size_t d, double volume) {
  if (!(L > 0.0)) throw ConfigError("thm2_bound: L must be > 0");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("thm2_bound: rho must lie in [0, 1)");
  if (d == 0) throw ConfigError("thm2_bound: d must be >= 1");
  if (!(volume > 0.0)) throw ConfigError("thm2_bound: volume must be > 0");
  if (!(f_min > 0.0)) return std::numeric_limits<double>::infinity();
  const double base = 2.0 * L / ((1.0 - rho) * f_min);
  return std::pow(base, static_cast<double>(d)) * volume / unit_ball_volume(d);
}

std::vector<SeparationViolation> separation_violations(const ExactRunResult& run, double L,
                                                       double rel_slack) {
  if (!(L > 0.0)) throw ConfigError("separation_violations: L must be > 0");
  std::vector<SeparationViolation> out;
  const auto& recs = run.history.records();
  if (recs.empty()) return out;
  const double f_min = run.history.running_min();
  for (std::size_t j = 1; j < recs.size(); ++j) {
    const double rho = run.sample_rho[j];
    const double required = (1.0 - rho) * f_min / L;
    for (std::size_t i = j; i-- > 0 && run.sample_rho[i] == rho;) {
      const double dist = distance(recs[i].point, recs[j].point);
      if (dist < required * (1.0 - rel_slack)) out.push_back({i, j, dist, required});
    }
  }
  return out;
}

std::string trace_csv_string(const Trace& trace) {
  std::ostringstream out;
  out << kTraceCsvHeader << '\n';
  for (const TraceRow& r : trace.rows) {
    out << r.iteration << ',' << format_double(r.objective) << ',' << opt_field(r.eta) << ','
        << format_double(r.grad_norm) << ',' << format_double(r.lower) << ','
        << format_double(r.upper) << ',' << opt_field(r.eq4_lhs) << ',' << opt_field(r.eq4_rhs)
        << ',' << (r.eq4_holds ? (*r.eq4_holds ? "1" : "0") : "") << ',' << format_double(r.rho)
        << ',' << format_double(r.lipschitz_L) << ',' << opt_field(r.thm3_fraction) << ','
        << opt_field(r.cor1_fraction) << '\n';
  }
  return out.str();
}

void trace_to_csv(const Trace& trace, const std::filesystem::path& path) {
  write_text_file(path, trace_csv_string(trace));
}

Trace parse_trace_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kTraceCsvHeader) {
    throw InvalidInput("trace CSV: unexpected header");
  }
  Trace t;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 13) {
      throw InvalidInput("trace CSV line " + std::to_string(lineno) + ": expected 13 fields");
    }
    TraceRow r;
    const long long it = parse_int(f[0], "iteration");
    if (it < 0) throw InvalidInput("trace CSV: negative iteration");
    r.iteration = static_cast<std::size_t>(it);
    r.objective = parse_double(f[1], "f");
    r.eta = opt_parse(f[2], "eta");
    r.grad_norm = parse_double(f[3], "grad_norm");
    r.lower = parse_double(f[4], "lower");
    r.upper = parse_double(f[5], "upper");
    r.eq4_lhs = opt_parse(f[6], "eq4_lhs");
    r.eq4_rhs = opt_parse(f[7], "eq4_rhs");
    if (f[8] == "1") {
      r.eq4_holds = true;
    } else if (f[8] == "0") {
      r.eq4_holds = false;
    } else if (!f[8].empty()) {
      throw InvalidInput("trace CSV: eq4_holds must be 0, 1 or empty");
    }
    r.rho = parse_double(f[9], "rho");
    r.lipschitz_L = parse_double(f[10], "lipschitz_L");
    r.thm3_fraction = opt_parse(f[11], "thm3_fraction");
    r.cor1_fraction = opt_parse(f[12], "cor1_fraction");
    t.rows.push_back(r);
  }
  return t;
}

Trace read_trace_csv(const std::filesystem::path& path) { return parse_trace_csv(read_text_file(path)); }

void bounds_to_csv(const BoundsTrace& bounds, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "iteration,lower,upper,gap,rho\n";
  for (const BoundsRow& b : bounds.rows) {
    out << b.iteration << ',' << format_double(b.lower) << ',' << format_double(b.upper) << ','
        << format_double(b.gap) << ',' << format_double(b.rho) << '\n';
  }
  write_text_file(path, out.str());
}

std::string summary_json(const RunSummary& s) {
  nlohmann::ordered_json j;
  j["solver"] = s.solver;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.config) cfg[k] = v;
  j["config"] = cfg;
  j["final_f"] = json_number(s.final_f);
  j["samples"] = s.samples;
  j["thm2_bound"] = s.thm2_bound ? json_number(*s.thm2_bound) : nlohmann::ordered_json(nullptr);
  j["terminated_by"] = s.terminated_by;
  for (const auto& [k, v] : s.metrics) j[k] = json_number(v);
  for (const auto& [k, v] : s.notes) j[k] = v;
  return j.dump(2) + "\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace bpgrad
