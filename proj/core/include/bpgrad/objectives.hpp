#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "bpgrad/types.hpp"

namespace bpgrad {

struct KnownGlobal {
  ParamVector point;
  double value = 0.0;
};

/// Non-negative, differentiable objective on a box. `value` and `gradient`
/// reject points outside the domain with DomainError; there is no clamping.
class Objective {
 public:
  virtual ~Objective() = default;

  [[nodiscard]] virtual const BoxDomain& domain() const = 0;
  [[nodiscard]] std::size_t dimension() const { return domain().dimension(); }
  [[nodiscard]] virtual std::string name() const = 0;
  [[nodiscard]] virtual std::optional<KnownGlobal> known_global() const { return std::nullopt; }

  [[nodiscard]] double value(const ParamVector& x) const;
  [[nodiscard]] ParamVector gradient(const ParamVector& x) const;

 protected:
  [[nodiscard]] virtual double value_unchecked(const ParamVector& x) const = 0;
  [[nodiscard]] virtual ParamVector gradient_unchecked(const ParamVector& x) const = 0;

 private:
  void check_domain(const ParamVector& x) const;
};

/// f(x) = x sin(x) + offset on [a, b].
class SinusoidalObjective final : public Objective {
 public:
  /// Throws InvalidInput when f dips below zero anywhere on the domain
  /// (checked on the dense oracle grid).
  SinusoidalObjective(double offset, double a, double b, std::string name = "sinusoidal");

  [[nodiscard]] const BoxDomain& domain() const override { return domain_; }
  [[nodiscard]] std::string name() const override { return name_; }
  [[nodiscard]] std::optional<KnownGlobal> known_global() const override { return global_; }

  [[nodiscard]] double offset() const noexcept { return offset_; }
  [[nodiscard]] double at(double x) const;
  [[nodiscard]] double derivative(double x) const;

 protected:
  [[nodiscard]] double value_unchecked(const ParamVector& x) const override;
  [[nodiscard]] ParamVector gradient_unchecked(const ParamVector& x) const override;

 private:
  double offset_;
  BoxDomain domain_;
  std::string name_;
  KnownGlobal global_;
};

/// x sin x + 4.815 on [0, 8]: a single basin.
SinusoidalObjective make_f1();
/// x sin x + 11.05 on [0, 4pi]: global minimum value close to zero.
SinusoidalObjective make_f2();
/// x sin x + 15 on [0, 4pi].
SinusoidalObjective make_f3();
/// Lookup by "f1" / "f2" / "f3"; throws ConfigError otherwise.
SinusoidalObjective make_sinusoid(const std::string& which);

/// f(x) = ||x||^2 + offset on [-half_width, half_width]^dim.
class QuadraticObjective final : public Objective {
 public:
  QuadraticObjective(std::size_t dim, double offset, double half_width = 1.0);

  [[nodiscard]] const BoxDomain& domain() const override { return domain_; }
  [[nodiscard]] std::string name() const override { return "quadratic"; }
  [[nodiscard]] std::optional<KnownGlobal> known_global() const override;

 protected:
  [[nodiscard]] double value_unchecked(const ParamVector& x) const override;
  [[nodiscard]] ParamVector gradient_unchecked(const ParamVector& x) const override;

 private:
  double offset_;
  BoxDomain domain_;
};

QuadraticObjective quadratic_objective(std::size_t dim, double offset, double half_width = 1.0);

/// f(x) = slope * x + intercept on [a, b]; must stay non-negative.
class LinearObjective1D final : public Objective {
 public:
  LinearObjective1D(double slope, double intercept, double a, double b);

  [[nodiscard]] const BoxDomain& domain() const override { return domain_; }
  [[nodiscard]] std::string name() const override { return "linear"; }

 protected:
  [[nodiscard]] double value_unchecked(const ParamVector& x) const override;
  [[nodiscard]] ParamVector gradient_unchecked(const ParamVector& x) const override;

 private:
  double slope_;
  double intercept_;
  BoxDomain domain_;
};

class ConstantObjective final : public Objective {
 public:
  ConstantObjective(BoxDomain domain, double value);

  [[nodiscard]] const BoxDomain& domain() const override { return domain_; }
  [[nodiscard]] std::string name() const override { return "constant"; }

 protected:
  [[nodiscard]] double value_unchecked(const ParamVector&) const override { return value_; }
  [[nodiscard]] ParamVector gradient_unchecked(const ParamVector& x) const override;

 private:
  BoxDomain domain_;
  double value_;
};

/// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h. Throws DomainError
/// when x is not at least h inside the domain.
ParamVector finite_diff_grad(const Objective& obj, const ParamVector& x, double h);

struct ScalarMinimum {
  double x = 0.0;
  double value = 0.0;
};

/// Dense-grid scan of `fn` over [a, b] (`samples` points, endpoints included)
/// followed by golden-section refinement inside the best grid bracket.
ScalarMinimum grid_minimize_1d(const std::function<double(double)>& fn, double a, double b,
                               std::size_t samples = 100000, double tol = 1e-12);

/// sup |f'| on a 1D objective's domain via the same grid + refinement scheme.
double derivative_bound_1d(const Objective& obj, std::size_t samples = 100000);

/// Objective estimated from subsets of samples (mini-batches). Deterministic
/// objectives appear as a single-sample objective.
class StochasticObjective {
 public:
  virtual ~StochasticObjective() = default;

  [[nodiscard]] virtual std::size_t dimension() const = 0;
  [[nodiscard]] virtual std::size_t sample_count() const = 0;
  /// Mean objective over `batch`; `grad` receives the matching gradient.
  virtual double loss_and_grad(const ParamVector& x, std::span<const std::size_t> batch,
                               ParamVector& grad) const = 0;
  /// Objective over every sample.
  [[nodiscard]] virtual double full_value(const ParamVector& x) const;
};

/// Views a deterministic Objective through the StochasticObjective interface.
class DeterministicAdapter final : public StochasticObjective {
 public:
  explicit DeterministicAdapter(const Objective& obj) : obj_(&obj) {}

  [[nodiscard]] std::size_t dimension() const override { return obj_->dimension(); }
  [[nodiscard]] std::size_t sample_count() const override { return 1; }
  double loss_and_grad(const ParamVector& x, std::span<const std::size_t> batch,
                       ParamVector& grad) const override;
  [[nodiscard]] double full_value(const ParamVector& x) const override { return obj_->value(x); }
  [[nodiscard]] const Objective& objective() const noexcept { return *obj_; }

 private:
  const Objective* obj_;
};

}  // namespace bpgrad
