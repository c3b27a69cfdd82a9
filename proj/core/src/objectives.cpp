#include "bpgrad/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "bpgrad/errors.hpp"

namespace bpgrad {

namespace {

constexpr double kInvPhi = 0.6180339887498948482;

double golden_section_min(const std::function<double(double)>& fn, double lo, double hi,
                          double tol) {
  double c = hi - kInvPhi * (hi - lo);
  double d = lo + kInvPhi * (hi - lo);
  double fc = fn(c);
  double fd = fn(d);
  while (hi - lo > tol) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - kInvPhi * (hi - lo);
      fc = fn(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + kInvPhi * (hi - lo);
      fd = fn(d);
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

void Objective::check_domain(const ParamVector& x) const {
  if (x.size() != dimension()) throw InvalidInput(name() + ": dimension mismatch");
  if (!x.all_finite()) throw InvalidInput(name() + ": non-finite point");
  if (!domain().contains(x)) throw DomainError(name() + ": point outside the domain");
}

double Objective::value(const ParamVector& x) const {
  check_domain(x);
  return value_unchecked(x);
}

ParamVector Objective::gradient(const ParamVector& x) const {
  check_domain(x);
  return gradient_unchecked(x);
}

ScalarMinimum grid_minimize_1d(const std::function<double(double)>& fn, double a, double b,
                               std::size_t samples, double tol) {
  if (!(a < b)) throw InvalidInput("grid_minimize_1d: empty interval");
  samples = std::max<std::size_t>(samples, 3);
  const double step = (b - a) / static_cast<double>(samples - 1);
  std::size_t best = 0;
  double best_value = fn(a);
  for (std::size_t i = 1; i < samples; ++i) {
    const double x = i + 1 == samples ? b : a + step * static_cast<double>(i);
    const double v = fn(x);
    if (v < best_value) {
      best_value = v;
      best = i;
    }
  }
  const double lo = best == 0 ? a : a + step * static_cast<double>(best - 1);
  const double hi = best + 1 >= samples ? b : a + step * static_cast<double>(best + 1);
  const double x_ref = golden_section_min(fn, lo, hi, tol);
  const double v_ref = fn(x_ref);
  if (v_ref < best_value) return {x_ref, v_ref};
  return {best + 1 == samples ? b : a + step * static_cast<double>(best), best_value};
}

double derivative_bound_1d(const Objective& obj, std::size_t samples) {
  if (obj.dimension() != 1) throw InvalidInput("derivative_bound_1d needs a 1D objective");
  const double a = obj.domain().lower()[0];
  const double b = obj.domain().upper()[0];
  auto neg_abs = [&](double x) { return -std::abs(obj.gradient(ParamVector{x})[0]); };
  return -grid_minimize_1d(neg_abs, a, b, samples).value;
}

SinusoidalObjective::SinusoidalObjective(double offset, double a, double b, std::string name)
    : offset_(offset), domain_(BoxDomain::interval(a, b)), name_(std::move(name)) {
  const ScalarMinimum m = grid_minimize_1d([this](double x) { return at(x); }, a, b);
  if (m.value < 0.0) {
    throw InvalidInput(name_ + ": offset leaves f negative on the domain (min " +
                       std::to_string(m.value) + ")");
  }
  global_ = KnownGlobal{ParamVector{m.x}, m.value};
}

double SinusoidalObjective::at(double x) const { return x * std::sin(x) + offset_; }

double SinusoidalObjective::derivative(double x) const { return std::sin(x) + x * std::cos(x); }

double SinusoidalObjective::value_unchecked(const ParamVector& x) const { return at(x[0]); }

ParamVector SinusoidalObjective::gradient_unchecked(const ParamVector& x) const {
  return ParamVector{derivative(x[0])};
}

SinusoidalObjective make_f1() { return SinusoidalObjective(4.815, 0.0, 8.0, "f1"); }
SinusoidalObjective make_f2() {
  return SinusoidalObjective(11.05, 0.0, 4.0 * std::numbers::pi, "f2");
}
SinusoidalObjective make_f3() {
  return SinusoidalObjective(15.0, 0.0, 4.0 * std::numbers::pi, "f3");
}

SinusoidalObjective make_sinusoid(const std::string& which) {
  if (which == "f1") return make_f1();
  if (which == "f2") return make_f2();
  if (which == "f3") return make_f3();
  throw ConfigError("unknown 1D function '" + which + "' (expected f1, f2 or f3)");
}

QuadraticObjective::QuadraticObjective(std::size_t dim, double offset, double half_width)
    : offset_(offset), domain_(BoxDomain::cube(dim, -half_width, half_width)) {
  if (offset < 0.0) throw InvalidInput("quadratic: offset must be >= 0");
}

std::optional<KnownGlobal> QuadraticObjective::known_global() const {
  return KnownGlobal{ParamVector::zeros(dimension()), offset_};
}

double QuadraticObjective::value_unchecked(const ParamVector& x) const {
  return dot(x, x) + offset_;
}

ParamVector QuadraticObjective::gradient_unchecked(const ParamVector& x) const { return 2.0 * x; }

QuadraticObjective quadratic_objective(std::size_t dim, double offset, double half_width) {
  if (dim == 0) throw InvalidInput("quadratic: dim must be >= 1");
  return QuadraticObjective(dim, offset, half_width);
}

LinearObjective1D::LinearObjective1D(double slope, double intercept, double a, double b)
    : slope_(slope), intercept_(intercept), domain_(BoxDomain::interval(a, b)) {
  if (std::min(slope * a + intercept, slope * b + intercept) < 0.0) {
    throw InvalidInput("linear: objective negative on the domain");
  }
}

double LinearObjective1D::value_unchecked(const ParamVector& x) const {
  return slope_ * x[0] + intercept_;
}

ParamVector LinearObjective1D::gradient_unchecked(const ParamVector&) const {
  return ParamVector{slope_};
}

ConstantObjective::ConstantObjective(BoxDomain domain, double value)
    : domain_(std::move(domain)), value_(value) {
  if (value < 0.0) throw InvalidInput("constant: value must be >= 0");
}

ParamVector ConstantObjective::gradient_unchecked(const ParamVector& x) const {
  return ParamVector::zeros(x.size());
}

ParamVector finite_diff_grad(const Objective& obj, const ParamVector& x, double h) {
  if (!(h > 0.0)) throw InvalidInput("finite_diff_grad: h must be > 0");
  if (!obj.domain().contains_interior(x, h)) {
    throw DomainError("finite_diff_grad: point closer than h to the domain boundary");
  }
  ParamVector g = ParamVector::zeros(x.size());
  ParamVector probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    probe[k] = x[k] + h;
    const double up = obj.value(probe);
    probe[k] = x[k] - h;
    const double down = obj.value(probe);
    probe[k] = x[k];
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

double StochasticObjective::full_value(const ParamVector& x) const {
  std::vector<std::size_t> all(sample_count());
  std::iota(all.begin(), all.end(), std::size_t{0});
  ParamVector scratch;
  return loss_and_grad(x, all, scratch);
}

double DeterministicAdapter::loss_and_grad(const ParamVector& x, std::span<const std::size_t>,
                                           ParamVector& grad) const {
  const double v = obj_->value(x);
  grad = obj_->gradient(x);
  return v;
}

}  // namespace bpgrad
