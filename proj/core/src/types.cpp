#include "bpgrad/types.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bpgrad/errors.hpp"

namespace bpgrad {

namespace {

void require_same_size(const ParamVector& a, const ParamVector& b) {
  if (a.size() != b.size()) {
    throw InvalidInput("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()));
  }
}

}  // namespace

ParamVector::ParamVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw InvalidInput("ParamVector must have dimension >= 1");
  if (!all_finite()) throw InvalidInput("ParamVector has a non-finite component");
}

ParamVector::ParamVector(std::initializer_list<double> values)
    : ParamVector(std::vector<double>(values)) {}

ParamVector ParamVector::zeros(std::size_t dim) { return filled(dim, 0.0); }

ParamVector ParamVector::filled(std::size_t dim, double value) {
  if (dim == 0) throw InvalidInput("ParamVector must have dimension >= 1");
  return ParamVector(Unchecked{}, std::vector<double>(dim, value));
}

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
  require_same_size(*this, other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
  require_same_size(*this, other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

ParamVector& ParamVector::operator*=(double s) noexcept {
  for (double& v : values_) v *= s;
  return *this;
}

ParamVector& ParamVector::axpy(double s, const ParamVector& other) {
  require_same_size(*this, other);
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * other.values_[i];
  return *this;
}

double norm2(const ParamVector& v) {
  if (!v.all_finite()) throw InvalidInput("norm2: non-finite component");
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

double dot(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double distance(const ParamVector& a, const ParamVector& b) {
  require_same_size(a, b);
  if (a.size() == 1) return std::abs(a[0] - b[0]);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

BoxDomain::BoxDomain(ParamVector lower, ParamVector upper)
    : lower_(std::move(lower)), upper_(std::move(upper)) {
  require_same_size(lower_, upper_);
  if (lower_.empty()) throw InvalidInput("BoxDomain needs dimension >= 1");
  volume_ = 1.0;
  for (std::size_t k = 0; k < lower_.size(); ++k) {
    if (!(lower_[k] < upper_[k])) {
      throw InvalidInput("BoxDomain: lower[" + std::to_string(k) + "] must be < upper");
    }
    volume_ *= upper_[k] - lower_[k];
  }
}

BoxDomain BoxDomain::interval(double a, double b) { return BoxDomain(ParamVector{a}, ParamVector{b}); }

BoxDomain BoxDomain::cube(std::size_t dim, double lo, double hi) {
  return BoxDomain(ParamVector::filled(dim, lo), ParamVector::filled(dim, hi));
}

bool BoxDomain::contains(const ParamVector& x) const { return contains_interior(x, 0.0); }

bool BoxDomain::contains_interior(const ParamVector& x, double margin) const {
  if (x.size() != dimension()) return false;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] >= lower_[k] + margin && x[k] <= upper_[k] - margin)) return false;
  }
  return true;
}

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double Rng::normal(double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(engine_);
}

std::size_t Rng::index(std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

void Rng::shuffle(std::span<std::size_t> values) {
  // Fisher-Yates on our own draws; std::shuffle's sequence is library specific.
  for (std::size_t i = values.size(); i > 1; --i) {
    std::swap(values[i - 1], values[index(i)]);
  }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

ParamVector random_unit_vector(std::size_t dim, Rng& rng) {
  for (;;) {
    ParamVector u = ParamVector::zeros(dim);
    double sq = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      u[i] = rng.normal();
      sq += u[i] * u[i];
    }
    if (sq > 0.0) return u * (1.0 / std::sqrt(sq));
  }
}

ParamVector normalized_gradient(const ParamVector& g, Rng& rng) {
  const double n = norm2(g);
  if (n > 0.0) return g * (1.0 / n);
  return random_unit_vector(g.size(), rng);
}

void History::append(EvalRecord record) {
  if (!std::isfinite(record.value)) throw InvalidInput("History: non-finite objective value");
  if (record.value < 0.0) {
    throw InvalidInput("History: negative objective value violates f >= 0");
  }
  if (!records_.empty() && record.point.size() != dimension()) {
    throw InvalidInput("History: record dimension does not match history");
  }
  if (record.gradient && record.gradient->size() != record.point.size()) {
    throw InvalidInput("History: gradient dimension does not match point");
  }
  if (records_.empty() || record.value < running_min_) {
    running_min_ = record.value;
    argmin_ = records_.size();
  }
  records_.push_back(std::move(record));
}

std::size_t History::dimension() const noexcept {
  return records_.empty() ? 0 : records_.front().point.size();
}

double History::running_min() const {
  if (records_.empty()) throw ContractError("History: running_min of empty history");
  return running_min_;
}

std::size_t History::argmin_index() const {
  if (records_.empty()) throw ContractError("History: argmin of empty history");
  return argmin_;
}

History append_record(History h, EvalRecord r) {
  h.append(std::move(r));
  return h;
}

void SolverConfig::validate() const {
  if (!(lipschitz_L >= 0.0) || !std::isfinite(lipschitz_L)) throw ConfigError("L must be >= 0");
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must lie in [0, 1)");
  if (!(momentum_mu >= 0.0 && momentum_mu <= 1.0)) throw ConfigError("momentum must lie in [0, 1]");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be >= 0");
  if (!(rho_increment > 0.0)) throw ConfigError("rho_increment must be > 0");
  if (!(rho_cap >= rho && rho_cap < 1.0)) throw ConfigError("rho_cap must lie in [rho, 1)");
  if (!(lipschitz_growth > 0.0)) throw ConfigError("lipschitz_growth must be > 0");
  if (max_outer_iters == 0) throw ConfigError("max_outer_iters must be >= 1");
}

}  // namespace bpgrad
