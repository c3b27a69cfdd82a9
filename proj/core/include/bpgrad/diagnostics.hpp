#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bpgrad/pruning.hpp"
#include "bpgrad/trace.hpp"

namespace bpgrad {

struct BoundsRow {
  std::size_t iteration = 0;
  double lower = 0.0;  ///< rho * upper
  double upper = 0.0;  ///< running min of f
  double gap = 0.0;    ///< upper - lower
  double rho = 0.0;
  friend bool operator==(const BoundsRow&, const BoundsRow&) = default;
};

struct BoundsTrace {
  std::vector<BoundsRow> rows;
  [[nodiscard]] bool empty() const noexcept { return rows.empty(); }
  [[nodiscard]] std::size_t size() const noexcept { return rows.size(); }
};

/// Bound estimators from the running minimum of the logged objectives. With
/// `rho` unset each row's own rho is used (exact runs escalate rho).
/// Throws InvalidInput on an empty trace.
BoundsTrace bounds_from_trace(const Trace& trace, std::optional<double> rho = std::nullopt);

/// pi^(d/2) / Gamma(d/2 + 1), the volume of the unit d-ball.
double unit_ball_volume(std::size_t d);

/// [2L / ((1 - rho) f_min)]^d * volume / unit_ball_volume(d). Returns +inf
/// when f_min <= 0. Throws ConfigError for L <= 0, rho outside [0, 1), d = 0
/// or a non-positive volume.
double thm2_bound(double L, double rho, double f_min, std::size_t d, double volume);

/// Pairs within one rho-phase of an exact run that are closer than
/// (1 - rho) f_min / L, f_min being the final running minimum. A relative
/// slack absorbs rounding in the radius arithmetic.
struct SeparationViolation {
  std::size_t i = 0;
  std::size_t j = 0;
  double distance = 0.0;
  double required = 0.0;
};
std::vector<SeparationViolation> separation_violations(const ExactRunResult& run, double L,
                                                       double rel_slack = 1e-12);

/// Column order: iteration, f, eta, grad_norm, lower, upper, eq4_lhs,
/// eq4_rhs, eq4_holds, rho, lipschitz_L, thm3_fraction, cor1_fraction.
/// Missing optionals are empty fields; floats use shortest round-trip form.
inline constexpr const char* kTraceCsvHeader =
    "iteration,f,eta,grad_norm,lower,upper,eq4_lhs,eq4_rhs,eq4_holds,rho,lipschitz_L,"
    "thm3_fraction,cor1_fraction";

std::string trace_csv_string(const Trace& trace);
/// Throws IoError with the path on failure.
void trace_to_csv(const Trace& trace, const std::filesystem::path& path);
/// Inverse of trace_csv_string. Throws InvalidInput on malformed input.
Trace parse_trace_csv(const std::string& text);
Trace read_trace_csv(const std::filesystem::path& path);

/// Columns: iteration, lower, upper, gap, rho.
void bounds_to_csv(const BoundsTrace& bounds, const std::filesystem::path& path);

/// Per-run summary written as JSON:
/// {solver, config, final_f, samples, thm2_bound, terminated_by, ...metrics}.
struct RunSummary {
  std::string solver;
  std::vector<std::pair<std::string, std::string>> config;
  double final_f = 0.0;
  std::size_t samples = 0;
  std::optional<double> thm2_bound;
  std::string terminated_by;
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::pair<std::string, std::string>> notes;
};

std::string summary_json(const RunSummary& summary);

/// Writes `text` to `path`, throwing IoError with the path on failure.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace bpgrad
