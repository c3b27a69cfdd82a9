#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace bpgrad {

/// Dense point in the search space. Construction from raw values validates
/// that the vector is non-empty and finite; arithmetic results are not
/// re-validated (solvers check objective finiteness instead).
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::vector<double> values);
  ParamVector(std::initializer_list<double> values);

  static ParamVector zeros(std::size_t dim);
  static ParamVector filled(std::size_t dim, double value);

  [[nodiscard]] std::size_t size() const noexcept { return values_.size(); }
  [[nodiscard]] bool empty() const noexcept { return values_.empty(); }
  [[nodiscard]] double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  [[nodiscard]] std::span<const double> span() const noexcept { return values_; }
  [[nodiscard]] std::span<double> span() noexcept { return values_; }
  [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
  [[nodiscard]] auto begin() const noexcept { return values_.begin(); }
  [[nodiscard]] auto end() const noexcept { return values_.end(); }

  [[nodiscard]] bool all_finite() const noexcept;

  ParamVector& operator+=(const ParamVector& other);
  ParamVector& operator-=(const ParamVector& other);
  ParamVector& operator*=(double s) noexcept;
  /// this += s * other
  ParamVector& axpy(double s, const ParamVector& other);

  friend ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
  friend ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
  friend ParamVector operator*(ParamVector a, double s) { return a *= s; }
  friend ParamVector operator*(double s, ParamVector a) { return a *= s; }
  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  struct Unchecked {};
  ParamVector(Unchecked, std::vector<double> values) : values_(std::move(values)) {}
  std::vector<double> values_;
};

/// Euclidean norm. Throws InvalidInput on non-finite components.
double norm2(const ParamVector& v);
double dot(const ParamVector& a, const ParamVector& b);
double distance(const ParamVector& a, const ParamVector& b);

/// Axis-aligned box `lower <= x <= upper`.
class BoxDomain {
 public:
  BoxDomain(ParamVector lower, ParamVector upper);
  static BoxDomain interval(double a, double b);
  static BoxDomain cube(std::size_t dim, double lo, double hi);

  [[nodiscard]] std::size_t dimension() const noexcept { return lower_.size(); }
  [[nodiscard]] const ParamVector& lower() const noexcept { return lower_; }
  [[nodiscard]] const ParamVector& upper() const noexcept { return upper_; }
  [[nodiscard]] double volume() const noexcept { return volume_; }
  [[nodiscard]] bool contains(const ParamVector& x) const;
  /// True when every coordinate is at least `margin` inside the box.
  [[nodiscard]] bool contains_interior(const ParamVector& x, double margin) const;

 private:
  ParamVector lower_;
  ParamVector upper_;
  double volume_ = 0.0;
};

/// Single seeded source of randomness. Every stochastic decision in a run
/// draws from one of these so identical seeds replay identically.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi);
  double normal(double mean = 0.0, double stddev = 1.0);
  std::size_t index(std::size_t n);
  void shuffle(std::span<std::size_t> values);
  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finaliser applied to `base + 0x9e3779b97f4a7c15 * (index + 1)`.
/// Used to derive per-run and per-cell seeds from one base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept;

/// Isotropic Gaussian draw normalised to the unit sphere.
ParamVector random_unit_vector(std::size_t dim, Rng& rng);

/// g / ||g||, or a random unit direction when g is exactly zero.
ParamVector normalized_gradient(const ParamVector& g, Rng& rng);

struct EvalRecord {
  ParamVector point;
  double value = 0.0;
  std::optional<ParamVector> gradient;
  std::size_t index = 0;
};

/// Append-only evaluation history with running minimum. Ties keep the
/// earliest argmin.
class History {
 public:
  History() = default;

  /// Rejects negative or non-finite values and dimension mismatches.
  void append(EvalRecord record);

  [[nodiscard]] bool empty() const noexcept { return records_.empty(); }
  [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
  [[nodiscard]] std::size_t dimension() const noexcept;
  [[nodiscard]] const std::vector<EvalRecord>& records() const noexcept { return records_; }
  [[nodiscard]] const EvalRecord& operator[](std::size_t i) const { return records_[i]; }
  [[nodiscard]] const EvalRecord& back() const { return records_.back(); }
  [[nodiscard]] double running_min() const;
  [[nodiscard]] std::size_t argmin_index() const;
  [[nodiscard]] const EvalRecord& best() const { return records_.at(argmin_index()); }

 private:
  std::vector<EvalRecord> records_;
  double running_min_ = 0.0;
  std::size_t argmin_ = 0;
};

/// Value-returning form of History::append.
History append_record(History h, EvalRecord r);

struct SolverConfig {
  double lipschitz_L = 15.0;
  double rho = 0.1;
  double momentum_mu = 0.9;
  double epsilon = 1e-4;
  double gamma = 1e-3;
  std::size_t max_inner_iters = 1000;
  std::size_t max_outer_iters = 100;
  double rho_increment = 0.1;
  double rho_cap = 0.95;
  /// Multiply L by `lipschitz_growth` every `lipschitz_growth_every` steps
  /// (0 disables the schedule).
  double lipschitz_growth = 1.0;
  std::size_t lipschitz_growth_every = 0;
  std::uint64_t seed = 0;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

}  // namespace bpgrad
