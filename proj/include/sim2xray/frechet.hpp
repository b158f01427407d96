#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace sim2xray {

// Gaussian fit of an embedded image set.
struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t count = 0;

  Eigen::Index dim() const { return mean.size(); }
  // Throws unless cov is square/symmetric, matches mean and count >= 2.
  void validate() const;
};

// Mean and unbiased (count - 1) covariance of the rows of `features`.
FeatureStats compute_stats(const Eigen::MatrixXd& features);

// Square root of a symmetric PSD matrix; negative eigenvalues are clipped to 0.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m);

// ||mu_a - mu_b||^2 + Tr(cov_a + cov_b - 2 (cov_a cov_b)^{1/2}), clipped at 0.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

}  // namespace sim2xray
