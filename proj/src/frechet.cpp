#include "sim2xray/frechet.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Eigenvalues>

#include "sim2xray/errors.hpp"

namespace sim2xray {

void FeatureStats::validate() const {
  if (count < 2) throw ShapeError("feature statistics need at least 2 samples");
  if (cov.rows() != cov.cols() || cov.rows() != mean.size()) {
    throw ShapeError("covariance shape does not match the mean vector");
  }
  if (!mean.allFinite() || !cov.allFinite()) throw NumericError("non-finite feature statistics");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw NumericError("covariance is not symmetric");
  }
}

FeatureStats compute_stats(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) {
    throw ShapeError("need at least 2 embeddings, got " + std::to_string(features.rows()));
  }
  FeatureStats stats;
  stats.count = static_cast<std::size_t>(features.rows());
  stats.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - stats.mean.transpose();
  stats.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  stats.cov = 0.5 * (stats.cov + stats.cov.transpose());
  return stats;
}

namespace {

std::optional<Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>> eigen_of(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(0.5 * (m + m.transpose()));
  if (solver.info() != Eigen::Success || !solver.eigenvalues().allFinite()) return std::nullopt;
  return solver;
}

// Tr((A B)^{1/2}) for symmetric PSD A, B, via the similar matrix A^{1/2} B A^{1/2}.
std::optional<double> trace_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const auto ea = eigen_of(a);
  if (!ea) return std::nullopt;
  const Eigen::VectorXd roots = ea->eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a = ea->eigenvectors() * roots.asDiagonal() * ea->eigenvectors().transpose();
  const auto em = eigen_of(sqrt_a * b * sqrt_a);
  if (!em) return std::nullopt;
  return em->eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

}  // namespace

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw ShapeError("matrix square root needs a square matrix");
  const auto e = eigen_of(m);
  if (!e) throw NumericError("eigendecomposition failed");
  const Eigen::VectorXd roots = e->eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return e->eigenvectors() * roots.asDiagonal() * e->eigenvectors().transpose();
}

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  a.validate();
  b.validate();
  if (a.dim() != b.dim()) {
    throw ShapeError("feature dimensions differ: " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  const double mean_term = (a.mean - b.mean).squaredNorm();
  auto cross = trace_sqrt_product(a.cov, b.cov);
  double trace_a = a.cov.trace();
  double trace_b = b.cov.trace();
  if (!cross) {
    const Eigen::MatrixXd reg = 1e-6 * Eigen::MatrixXd::Identity(a.dim(), a.dim());
    cross = trace_sqrt_product(a.cov + reg, b.cov + reg);
    if (!cross) throw NumericError("matrix square root failed after regularization");
    trace_a += 1e-6 * static_cast<double>(a.dim());
    trace_b += 1e-6 * static_cast<double>(b.dim());
  }
  return std::max(0.0, mean_term + trace_a + trace_b - 2.0 * *cross);
}

}  // namespace sim2xray
