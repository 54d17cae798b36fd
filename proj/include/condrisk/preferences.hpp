#pragma once

#include <Eigen/Dense>

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "condrisk/prob_space.hpp"

namespace condrisk {

/// Strictly increasing, strictly concave utility on the real line.
///
/// Built-in families:
///   exponential(a):     -exp(-a x), or 1 - exp(-a x) when shifted
///   rational_power(p):  p x / (x + 1) for x >= 0, 1 - |x - 1|^p for x < 0
///   arctan_power(p):    p atan(x)     for x >= 0, 1 - |x - 1|^p for x < 0
/// plus user supplied callables (see custom()).
class UnivariateUtility {
 public:
  enum class Kind { exponential, rational_power, arctan_power, custom };

  static UnivariateUtility exponential(double alpha, bool shifted = false);
  static UnivariateUtility rational_power(double p);
  static UnivariateUtility arctan_power(double p);

  /// Wraps a user utility. `second` may be empty, in which case the second
  /// derivative is taken by central differences of `derivative`. Runs a
  /// monotonicity/concavity/derivative self-test on [-10, 10] and throws
  /// InvariantError when it fails.
  static UnivariateUtility custom(std::function<double(double)> value,
                                  std::function<double(double)> derivative,
                                  std::function<double(double)> second = {},
                                  double supremum = std::numeric_limits<double>::infinity());

  Kind kind() const noexcept { return kind_; }
  /// alpha for exponential, p for the power families, NaN for custom.
  double parameter() const noexcept { return param_; }
  bool shifted() const noexcept { return shifted_; }

  double value(double x) const;
  double derivative(double x) const;
  double second_derivative(double x) const;
  /// sup over the real line (may be +inf for custom utilities).
  double supremum() const;
  /// The unique x with u'(x) = v, for v in the range of u'.
  double inverse_derivative(double v) const;

 private:
  UnivariateUtility(Kind kind, double param, bool shifted) : kind_(kind), param_(param), shifted_(shifted) {}

  Kind kind_;
  double param_;
  bool shifted_ = false;
  std::function<double(double)> value_;
  std::function<double(double)> deriv_;
  std::function<double(double)> second_;
  double sup_ = std::numeric_limits<double>::infinity();
};

/// The interaction term: either zero or x -> u(sum_j w_j x^j) with u
/// bounded above and w >= 0. Concave, nondecreasing and bounded above.
class LambdaAggregator {
 public:
  static LambdaAggregator zero() { return LambdaAggregator(); }
  static LambdaAggregator composite(UnivariateUtility u, Eigen::VectorXd weights);

  bool is_zero() const noexcept { return !u_.has_value(); }
  const UnivariateUtility& utility() const { return *u_; }
  const Eigen::VectorXd& weights() const noexcept { return weights_; }

  double value(const Eigen::VectorXd& x) const;
  void add_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;
  void add_hessian(const Eigen::VectorXd& x, Eigen::MatrixXd& hess) const;
  double supremum() const;

 private:
  std::optional<UnivariateUtility> u_;
  Eigen::VectorXd weights_;
};

/// Multivariate utility U(x) = sum_j u_j(x^j) + Lambda(x).
class Aggregator {
 public:
  Aggregator(std::vector<UnivariateUtility> utilities, LambdaAggregator lambda = LambdaAggregator::zero());

  /// N raw exponential utilities -exp(-alpha_j x), no interaction term.
  static Aggregator exponential(const Eigen::VectorXd& alphas);

  Index agents() const noexcept { return static_cast<Index>(utilities_.size()); }
  const std::vector<UnivariateUtility>& utilities() const noexcept { return utilities_; }
  const UnivariateUtility& utility(Index j) const { return utilities_[static_cast<std::size_t>(j)]; }
  const LambdaAggregator& lambda() const noexcept { return lambda_; }

  /// Lambda == 0, so U is a sum of one-dimensional terms.
  bool separable() const noexcept { return lambda_.is_zero(); }
  /// The alphas when every u_j is a raw exponential and Lambda == 0.
  std::optional<Eigen::VectorXd> exponential_alphas() const;

  double value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const;
  double supremum() const;

 private:
  std::vector<UnivariateUtility> utilities_;
  LambdaAggregator lambda_;
};

/// E_P[U(X + Y) | block] restricted to one block's atoms, for a matrix whose
/// columns are the block's atoms and `weights` the conditional probabilities.
double expected_utility(const Aggregator& u, const Eigen::MatrixXd& positions, const Eigen::VectorXd& weights);

/// E_P[U(Z) | G] as a G-measurable random variable.
RandomVariable cond_expected_utility(const ScenarioSpace& space, const Aggregator& u, const RandomVector& z,
                                     const SigmaPartition& g);

/// Convex conjugate of the exponential aggregate:
/// V(y) = sum_j (y_j/a_j) log(y_j/a_j) - y_j/a_j, y > 0.
double conjugate_V(const Eigen::VectorXd& alphas, const Eigen::VectorXd& y);

struct GrowthBound {
  double a_coef;
  double b_coef;
};

/// Coefficients with U(x) <= a sum_j x^j + b for all x. With a = max_j u_j'(0),
/// b = sum_j sup_x (u_j(x) - a x) + sup Lambda, every supremum attained at
/// x_j = (u_j')^{-1}(a) <= 0. Certified on a sampling grid; throws
/// InvariantError if certification fails.
GrowthBound growth_bound(const Aggregator& u);

/// First sampled point in [lo, hi]^N violating U(x) <= a sum x + b, if any.
std::optional<Eigen::VectorXd> find_growth_violation(const Aggregator& u, double a_coef, double b_coef,
                                                     double lo = -10.0, double hi = 10.0);

}  // namespace condrisk
