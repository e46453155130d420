#include "jd2p/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace jd2p {

namespace {

std::gamma_distribution<double> make_gamma(double shape) {
  if (std::isfinite(shape)) return std::gamma_distribution<double>(shape, 1.0 / shape);
  return std::gamma_distribution<double>(1.0, 1.0);
}

// Series expansion, valid for x < a + 1.
double lower_gamma_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 10000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction for Q(a, x) (modified Lentz), valid for x >= a + 1.
double upper_gamma_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-17) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

ChannelModel::ChannelModel(double shape, std::uint64_t seed)
    : shape_(shape), rng_(seed), dist_(make_gamma(shape)) {
  if (!(shape > 0.0)) throw std::invalid_argument("channel: shape must be positive");
}

ChannelModel ChannelModel::deterministic() {
  return ChannelModel(std::numeric_limits<double>::infinity(), 0);
}

bool ChannelModel::is_deterministic() const { return !std::isfinite(shape_); }

double ChannelModel::sample_gain() {
  if (is_deterministic()) return 1.0;
  return dist_(rng_);
}

double inverse_mean_gain(double shape) {
  if (!std::isfinite(shape)) return 1.0;
  if (!(shape > 1.0)) {
    throw std::domain_error("inverse_mean_gain: nu diverges for shape <= 1");
  }
  return shape / (shape - 1.0);
}

double inverse_mean_gain(const ChannelModel& channel) {
  return inverse_mean_gain(channel.shape());
}

ClassGaussian fit_class_gaussian(const Eigen::MatrixXd& samples, int class_id, double ridge) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index k = samples.cols();
  if (n < 2) throw std::invalid_argument("fit_class_gaussian: need at least 2 samples");
  if (k < 1) throw std::invalid_argument("fit_class_gaussian: empty feature vectors");

  ClassGaussian g;
  g.class_id = class_id;
  g.mu = samples.colwise().mean().transpose();
  const Eigen::MatrixXd centered = samples.rowwise() - g.mu.transpose();
  g.sigma = (centered.transpose() * centered) / static_cast<double>(n - 1);
  g.sigma = 0.5 * (g.sigma + g.sigma.transpose());

  if (ridge > 0.0) {
    const double trace = g.sigma.trace();
    const double scale = trace > 0.0 ? trace / static_cast<double>(k) : 1.0;
    g.sigma.diagonal().array() += ridge * scale;
  }

  Eigen::LDLT<Eigen::MatrixXd> ldlt(g.sigma);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
    throw std::runtime_error("fit_class_gaussian: covariance is not positive definite");
  }
  g.sigma_inverse = ldlt.solve(Eigen::MatrixXd::Identity(k, k));
  g.sigma_inverse = 0.5 * (g.sigma_inverse + g.sigma_inverse.transpose());

  const double residual =
      (g.sigma_inverse * g.sigma - Eigen::MatrixXd::Identity(k, k)).cwiseAbs().maxCoeff();
  if (!(residual <= 1e-6)) {
    throw std::runtime_error("fit_class_gaussian: covariance inverse check failed (residual " +
                             std::to_string(residual) + ")");
  }
  return g;
}

double mahalanobis(const ClassGaussian& g, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != g.mu.size()) throw std::invalid_argument("mahalanobis: dimension mismatch");
  const Eigen::VectorXd diff = x - g.mu;
  return std::sqrt(std::max(0.0, diff.dot(g.sigma_inverse * diff)));
}

double regularized_lower_gamma(double a, double x) {
  if (!(a > 0.0)) throw std::domain_error("regularized_lower_gamma: a must be positive");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return lower_gamma_series(a, x);
  return 1.0 - upper_gamma_fraction(a, x);
}

double chi2_cdf(double r, int dof) {
  if (dof < 1) throw std::domain_error("chi2_cdf: dof must be >= 1");
  return regularized_lower_gamma(0.5 * dof, 0.5 * r);
}

double chi2_quantile(double p, int dof) {
  if (!(p > 0.0 && p < 1.0)) throw std::domain_error("chi2_quantile: p must lie in (0, 1)");
  if (dof < 1) throw std::domain_error("chi2_quantile: dof must be >= 1");

  double lo = 0.0;
  double hi = std::max(1.0, static_cast<double>(dof));
  while (chi2_cdf(hi, dof) < p) {
    lo = hi;
    hi *= 2.0;
  }
  // Bisect until the bracket collapses to adjacent doubles.
  for (int i = 0; i < 2000; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (chi2_cdf(mid, dof) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double binomial_moment(std::int64_t n, double q, int order) {
  if (n < 0) throw std::invalid_argument("binomial_moment: n must be >= 0");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("binomial_moment: q outside [0, 1]");
  if (order < 0) throw std::invalid_argument("binomial_moment: negative order");
  if (n == 0 || q == 0.0) return order == 0 ? 1.0 : 0.0;
  if (q == 1.0) return std::pow(static_cast<double>(n), order);

  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  const double lg_n1 = std::lgamma(static_cast<double>(n) + 1.0);
  double sum = 0.0;
  for (std::int64_t j = 1; j <= n; ++j) {
    const double jd = static_cast<double>(j);
    const double log_pmf = lg_n1 - std::lgamma(jd + 1.0) -
                           std::lgamma(static_cast<double>(n - j) + 1.0) + jd * log_q +
                           static_cast<double>(n - j) * log_1mq;
    sum += std::pow(jd, order) * std::exp(log_pmf);
  }
  return sum;
}

double moment_bound(double mean, int order) { return std::pow(mean + 0.5 * order, order); }

}  // namespace jd2p
