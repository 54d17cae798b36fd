#include "condrisk/preferences.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace condrisk {

namespace {

// Left branch shared by the two power families: 1 - (1 - x)^p for x < 0.
double power_left_value(double p, double x) { return 1.0 - std::pow(1.0 - x, p); }
double power_left_deriv(double p, double x) { return p * std::pow(1.0 - x, p - 1.0); }
double power_left_second(double p, double x) { return -p * (p - 1.0) * std::pow(1.0 - x, p - 2.0); }

void require_power(double p, const char* name) {
  if (!(p > 1.0) || !std::isfinite(p)) throw SchemaError(std::string(name) + ": parameter p must exceed 1");
}

}  // namespace

UnivariateUtility UnivariateUtility::exponential(double alpha, bool shifted) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw SchemaError("exponential utility: alpha must be positive");
  return UnivariateUtility(Kind::exponential, alpha, shifted);
}

UnivariateUtility UnivariateUtility::rational_power(double p) {
  require_power(p, "rational_power utility");
  return UnivariateUtility(Kind::rational_power, p, false);
}

UnivariateUtility UnivariateUtility::arctan_power(double p) {
  require_power(p, "arctan_power utility");
  return UnivariateUtility(Kind::arctan_power, p, false);
}

UnivariateUtility UnivariateUtility::custom(std::function<double(double)> value,
                                            std::function<double(double)> derivative,
                                            std::function<double(double)> second, double supremum) {
  if (!value || !derivative) throw SchemaError("custom utility: value and derivative are required");
  UnivariateUtility u(Kind::custom, std::numeric_limits<double>::quiet_NaN(), false);
  u.value_ = std::move(value);
  u.deriv_ = std::move(derivative);
  u.second_ = std::move(second);
  u.sup_ = supremum;

  constexpr int kSamples = 401;
  double prev_deriv = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kSamples; ++i) {
    const double x = -10.0 + 20.0 * i / (kSamples - 1);
    const double d = u.deriv_(x);
    if (!(d > 0.0)) throw InvariantError("custom utility: derivative is not positive at " + std::to_string(x));
    if (!(d < prev_deriv)) throw InvariantError("custom utility: derivative is not decreasing near " + std::to_string(x));
    prev_deriv = d;
    const double h = 1e-5;
    const double fd = (u.value_(x + h) - u.value_(x - h)) / (2 * h);
    if (std::abs(fd - d) > 1e-4 * std::max(1.0, std::abs(d))) {
      throw InvariantError("custom utility: derivative disagrees with value at " + std::to_string(x));
    }
    if (u.value_(x) > supremum) throw InvariantError("custom utility: value exceeds declared supremum");
  }
  return u;
}

double UnivariateUtility::value(double x) const {
  switch (kind_) {
    case Kind::exponential:
      return (shifted_ ? 1.0 : 0.0) - std::exp(-param_ * x);
    case Kind::rational_power:
      return x >= 0.0 ? param_ * x / (x + 1.0) : power_left_value(param_, x);
    case Kind::arctan_power:
      return x >= 0.0 ? param_ * std::atan(x) : power_left_value(param_, x);
    case Kind::custom:
      return value_(x);
  }
  return 0.0;
}

double UnivariateUtility::derivative(double x) const {
  switch (kind_) {
    case Kind::exponential:
      return param_ * std::exp(-param_ * x);
    case Kind::rational_power:
      return x >= 0.0 ? param_ / ((x + 1.0) * (x + 1.0)) : power_left_deriv(param_, x);
    case Kind::arctan_power:
      return x >= 0.0 ? param_ / (1.0 + x * x) : power_left_deriv(param_, x);
    case Kind::custom:
      return deriv_(x);
  }
  return 0.0;
}

double UnivariateUtility::second_derivative(double x) const {
  switch (kind_) {
    case Kind::exponential:
      return -param_ * param_ * std::exp(-param_ * x);
    case Kind::rational_power:
      return x >= 0.0 ? -2.0 * param_ / std::pow(x + 1.0, 3) : power_left_second(param_, x);
    case Kind::arctan_power:
      return x >= 0.0 ? -2.0 * param_ * x / std::pow(1.0 + x * x, 2) : power_left_second(param_, x);
    case Kind::custom: {
      if (second_) return second_(x);
      const double h = 1e-5 * std::max(1.0, std::abs(x));
      return (deriv_(x + h) - deriv_(x - h)) / (2 * h);
    }
  }
  return 0.0;
}

double UnivariateUtility::supremum() const {
  switch (kind_) {
    case Kind::exponential:
      return shifted_ ? 1.0 : 0.0;
    case Kind::rational_power:
      return param_;
    case Kind::arctan_power:
      return param_ * std::numbers::pi / 2.0;
    case Kind::custom:
      return sup_;
  }
  return 0.0;
}

double UnivariateUtility::inverse_derivative(double v) const {
  if (!(v > 0.0)) throw InvariantError("inverse_derivative: marginal utility must be positive");
  switch (kind_) {
    case Kind::exponential:
      return -std::log(v / param_) / param_;
    case Kind::rational_power:
      if (v <= param_) return std::sqrt(param_ / v) - 1.0;
      return 1.0 - std::pow(v / param_, 1.0 / (param_ - 1.0));
    case Kind::arctan_power:
      if (v <= param_) return std::sqrt(param_ / v - 1.0);
      return 1.0 - std::pow(v / param_, 1.0 / (param_ - 1.0));
    case Kind::custom:
      break;
  }
  // Bracket then bisect: u' is strictly decreasing.
  double lo = -1.0;
  double hi = 1.0;
  for (int i = 0; i < 200 && deriv_(lo) < v; ++i) lo *= 2.0;
  for (int i = 0; i < 200 && deriv_(hi) > v; ++i) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (deriv_(mid) > v) lo = mid; else hi = mid;
  }
  return 0.5 * (lo + hi);
}

LambdaAggregator LambdaAggregator::composite(UnivariateUtility u, Eigen::VectorXd weights) {
  if (!std::isfinite(u.supremum())) throw InvariantError("Lambda aggregator: inner utility must be bounded above");
  if ((weights.array() < 0.0).any() || !weights.allFinite()) {
    throw SchemaError("Lambda aggregator: weights must be finite and nonnegative");
  }
  LambdaAggregator l;
  l.u_ = std::move(u);
  l.weights_ = std::move(weights);
  return l;
}

double LambdaAggregator::value(const Eigen::VectorXd& x) const {
  return is_zero() ? 0.0 : u_->value(weights_.dot(x));
}

void LambdaAggregator::add_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  if (is_zero()) return;
  grad += u_->derivative(weights_.dot(x)) * weights_;
}

void LambdaAggregator::add_hessian(const Eigen::VectorXd& x, Eigen::MatrixXd& hess) const {
  if (is_zero()) return;
  hess += u_->second_derivative(weights_.dot(x)) * weights_ * weights_.transpose();
}

double LambdaAggregator::supremum() const {
  if (is_zero()) return 0.0;
  if ((weights_.array() > 0.0).any()) return u_->supremum();
  return u_->value(0.0);
}

Aggregator::Aggregator(std::vector<UnivariateUtility> utilities, LambdaAggregator lambda)
    : utilities_(std::move(utilities)), lambda_(std::move(lambda)) {
  if (utilities_.empty()) throw SchemaError("Aggregator: at least one agent is required");
  if (!lambda_.is_zero() && lambda_.weights().size() != agents()) {
    throw SchemaError("Aggregator: Lambda weight count differs from agent count");
  }
}

Aggregator Aggregator::exponential(const Eigen::VectorXd& alphas) {
  std::vector<UnivariateUtility> us;
  for (Index j = 0; j < alphas.size(); ++j) us.push_back(UnivariateUtility::exponential(alphas(j)));
  return Aggregator(std::move(us));
}

std::optional<Eigen::VectorXd> Aggregator::exponential_alphas() const {
  if (!separable()) return std::nullopt;
  Eigen::VectorXd alphas(agents());
  for (Index j = 0; j < agents(); ++j) {
    const auto& u = utility(j);
    if (u.kind() != UnivariateUtility::Kind::exponential || u.shifted()) return std::nullopt;
    alphas(j) = u.parameter();
  }
  return alphas;
}

double Aggregator::value(const Eigen::VectorXd& x) const {
  double total = 0.0;
  for (Index j = 0; j < agents(); ++j) total += utility(j).value(x(j));
  return total + lambda_.value(x);
}

Eigen::VectorXd Aggregator::gradient(const Eigen::VectorXd& x) const {
  Eigen::VectorXd g(agents());
  for (Index j = 0; j < agents(); ++j) g(j) = utility(j).derivative(x(j));
  lambda_.add_gradient(x, g);
  return g;
}

Eigen::MatrixXd Aggregator::hessian(const Eigen::VectorXd& x) const {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(agents(), agents());
  for (Index j = 0; j < agents(); ++j) h(j, j) = utility(j).second_derivative(x(j));
  lambda_.add_hessian(x, h);
  return h;
}

double Aggregator::supremum() const {
  double total = lambda_.supremum();
  for (const auto& u : utilities_) total += u.supremum();
  return total;
}

double expected_utility(const Aggregator& u, const Eigen::MatrixXd& positions, const Eigen::VectorXd& weights) {
  double acc = 0.0;
  for (Index k = 0; k < positions.cols(); ++k) acc += weights(k) * u.value(positions.col(k));
  return acc;
}

RandomVariable cond_expected_utility(const ScenarioSpace& space, const Aggregator& u, const RandomVector& z,
                                     const SigmaPartition& g) {
  if (z.rows() != u.agents()) throw SchemaError("cond_expected_utility: agent count mismatch");
  RandomVariable pointwise(z.cols());
  for (Index k = 0; k < z.cols(); ++k) pointwise(k) = u.value(z.col(k));
  return cond_exp(space, pointwise, g);
}

double conjugate_V(const Eigen::VectorXd& alphas, const Eigen::VectorXd& y) {
  if (alphas.size() != y.size()) throw SchemaError("conjugate_V: dimension mismatch");
  double total = 0.0;
  for (Index j = 0; j < y.size(); ++j) {
    if (!(alphas(j) > 0.0)) throw SchemaError("conjugate_V: alphas must be positive");
    if (!(y(j) > 0.0)) throw InvariantError("conjugate_V: arguments must be positive");
    const double r = y(j) / alphas(j);
    total += r * std::log(r) - r;
  }
  return total;
}

GrowthBound growth_bound(const Aggregator& u) {
  double a = 0.0;
  for (const auto& uj : u.utilities()) a = std::max(a, uj.derivative(0.0));
  double b = u.lambda().supremum();
  for (const auto& uj : u.utilities()) {
    const double x = uj.inverse_derivative(a);
    b += uj.value(x) - a * x;
  }
  // Round-off slack for the certification below.
  b += 1e-12 * std::max(1.0, std::abs(b));
  if (auto bad = find_growth_violation(u, a, b)) {
    throw InvariantError("growth_bound: certification failed");
  }
  return {a, b};
}

std::optional<Eigen::VectorXd> find_growth_violation(const Aggregator& u, double a_coef, double b_coef, double lo,
                                                     double hi) {
  const Index n = u.agents();
  auto violates = [&](const Eigen::VectorXd& x) {
    return u.value(x) > a_coef * x.sum() + b_coef + 1e-12 * std::max(1.0, std::abs(b_coef));
  };
  if (n <= 3) {
    const int per_axis = n == 1 ? 2001 : (n == 2 ? 201 : 41);
    Eigen::VectorXi counter = Eigen::VectorXi::Zero(n);
    Eigen::VectorXd x(n);
    while (true) {
      for (Index j = 0; j < n; ++j) x(j) = lo + (hi - lo) * counter(j) / (per_axis - 1);
      if (violates(x)) return x;
      Index j = 0;
      while (j < n && ++counter(j) == per_axis) counter(j++) = 0;
      if (j == n) break;
    }
    return std::nullopt;
  }
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Eigen::VectorXd x(n);
  for (int s = 0; s < 20000; ++s) {
    for (Index j = 0; j < n; ++j) x(j) = dist(rng);
    if (violates(x)) return x;
  }
  return std::nullopt;
}

}  // namespace condrisk
