#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace jd2p {

/// Gamma block-fading channel with unit mean gain: shape = rate = beta.
///
/// A non-finite shape gives the deterministic limit (every gain is exactly 1),
/// used for analytic cross-checks. The RNG is the only mutable state; one
/// simulation thread owns a channel.
class ChannelModel {
 public:
  explicit ChannelModel(double shape, std::uint64_t seed = 0);

  static ChannelModel deterministic();

  double shape() const { return shape_; }
  double rate() const { return shape_; }
  bool is_deterministic() const;

  /// One i.i.d. gain draw.
  double sample_gain();

 private:
  double shape_;
  std::mt19937_64 rng_;
  std::gamma_distribution<double> dist_;
};

/// E[1/h] = beta / (beta - 1). Throws std::domain_error for shape <= 1.
double inverse_mean_gain(double shape);
double inverse_mean_gain(const ChannelModel& channel);

/// One Gaussian per class, with ridge regularisation for invertibility.
struct ClassGaussian {
  int class_id = 0;
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;          // includes the ridge
  Eigen::MatrixXd sigma_inverse;

  int dim() const { return static_cast<int>(mu.size()); }
};

inline constexpr double kDefaultRidge = 1e-6;

/// Sample mean and (n-1) covariance of the rows of `samples`, plus
/// ridge * (trace/k) * I. When the covariance is identically zero the ridge is
/// applied as ridge * I. ridge = 0 disables regularisation (the covariance must
/// then be non-singular).
ClassGaussian fit_class_gaussian(const Eigen::MatrixXd& samples, int class_id,
                                 double ridge = kDefaultRidge);

double mahalanobis(const ClassGaussian& g, const Eigen::Ref<const Eigen::VectorXd>& x);

/// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
double regularized_lower_gamma(double a, double x);

double chi2_cdf(double r, int dof);

/// Inverse chi-square CDF by bisection on chi2_cdf.
double chi2_quantile(double p, int dof);

/// Exact E[X^order] for X ~ Binomial(n, q), summed over every outcome.
double binomial_moment(std::int64_t n, double q, int order);

/// (mean + order/2)^order, the moment upper bound used by the prefetch policy.
double moment_bound(double mean, int order);

}  // namespace jd2p
