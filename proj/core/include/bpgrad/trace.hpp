#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace bpgrad {

/// One logged iteration. `lower`/`upper` are the bound estimators
/// rho * min f and min f at the time the row was written.
struct TraceRow {
  std::size_t iteration = 0;
  double objective = 0.0;
  std::optional<double> eta;
  double grad_norm = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::optional<double> eq4_lhs;
  std::optional<double> eq4_rhs;
  std::optional<bool> eq4_holds;
  double rho = 0.0;
  double lipschitz_L = 0.0;
  std::optional<double> thm3_fraction;
  std::optional<double> cor1_fraction;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

struct Trace {
  std::vector<TraceRow> rows;

  [[nodiscard]] bool empty() const noexcept { return rows.empty(); }
  [[nodiscard]] std::size_t size() const noexcept { return rows.size(); }
  friend bool operator==(const Trace&, const Trace&) = default;
};

}  // namespace bpgrad
