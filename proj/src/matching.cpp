#include "sim2xray/matching.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sim2xray/errors.hpp"

namespace sim2xray {

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss.alpha", "must lie in [0, 1]");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("loss.lambda", "must be >= 0");
  double total = 0.0;
  for (double w : block_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss.block_weights", "weights must be >= 0");
    total += w;
  }
  if (!block_weights.empty() && total <= 0.0) {
    throw ConfigError("loss.block_weights", "weights must not all be zero");
  }
}

namespace {

// Fixed summation order, so dot(a_i, b_j) and dot(b_j, a_i) agree bitwise.
double dot_rows(const TokenMatrix& a, Eigen::Index i, const TokenMatrix& b, Eigen::Index j) {
  const double* pa = a.data() + i * a.cols();
  const double* pb = b.data() + j * b.cols();
  double s = 0.0;
  for (Eigen::Index k = 0; k < a.cols(); ++k) s += pa[k] * pb[k];
  return s;
}

TokenMatrix pairwise_dots(const TokenMatrix& queries, const TokenMatrix& keys) {
  TokenMatrix out(queries.rows(), keys.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i)
    for (Eigen::Index j = 0; j < keys.rows(); ++j) out(i, j) = dot_rows(queries, i, keys, j);
  return out;
}

void check_tokens(const TokenSet& set) {
  if (set.n() < 1 || set.d() < 1) throw ShapeError("token set must hold at least one token of positive dimension");
  require_finite(set);
}

double clamp_cos(double c) { return std::clamp(c, -1.0, 1.0); }

// cos(a, b) with both squared norms clamped below at eps^2. Exact 1 for a == b.
struct CosineTerms {
  double dot, aa, bb, denom, cos;
};

CosineTerms cosine_terms(const double* a, const double* b, Eigen::Index len) {
  CosineTerms t{0.0, 0.0, 0.0, 0.0, 0.0};
  for (Eigen::Index k = 0; k < len; ++k) {
    t.dot += a[k] * b[k];
    t.aa += a[k] * a[k];
    t.bb += b[k] * b[k];
  }
  constexpr double eps2 = kCosineEps * kCosineEps;
  t.denom = std::sqrt(std::max(t.aa, eps2) * std::max(t.bb, eps2));
  t.cos = t.dot / t.denom;
  return t;
}

// d cos / d a written into out (length len).
void cosine_grad(const CosineTerms& t, const double* a, const double* b, Eigen::Index len, double scale,
                 double* out) {
  constexpr double eps2 = kCosineEps * kCosineEps;
  const bool a_clamped = t.aa < eps2;
  for (Eigen::Index k = 0; k < len; ++k) {
    double g = b[k] / t.denom;
    if (!a_clamped) g -= t.cos * a[k] / t.aa;
    out[k] += scale * g;
  }
}

void check_same_shape(const MatchMatrix& a, const MatchMatrix& b) {
  if (a.values.rows() != b.values.rows() || a.values.cols() != b.values.cols()) {
    throw ShapeError("match matrices differ in shape");
  }
  if (a.values.size() == 0) throw ShapeError("match matrix is empty");
}

std::vector<double> normalized_weights(const LossConfig& config, std::size_t blocks) {
  if (config.block_weights.empty()) return std::vector<double>(blocks, 1.0 / static_cast<double>(blocks));
  if (config.block_weights.size() != blocks) {
    throw ConfigError("loss.block_weights", "expected " + std::to_string(blocks) + " weights, got " +
                                                std::to_string(config.block_weights.size()));
  }
  double total = 0.0;
  for (double w : config.block_weights) total += w;
  std::vector<double> out;
  out.reserve(blocks);
  for (double w : config.block_weights) out.push_back(w / total);
  return out;
}

void check_stacks(const FeatureStack& x, const FeatureStack& yhat) {
  x.validate();
  yhat.validate();
  if (x.size() != yhat.size()) throw ShapeError("feature stacks hold a different number of blocks");
  if (x.sets.front().n() != yhat.sets.front().n() || x.sets.front().d() != yhat.sets.front().d()) {
    throw ShapeError("feature stacks differ in token count or dimension");
  }
}

}  // namespace

MatchMatrix self_domain_matrix(const TokenSet& tokens, MatchKind kind) {
  check_tokens(tokens);
  return MatchMatrix{pairwise_dots(tokens.tokens, tokens.tokens), kind};
}

std::pair<MatchMatrix, MatchMatrix> cross_domain_matrices(const TokenSet& tokens_x,
                                                          const TokenSet& tokens_yhat) {
  check_tokens(tokens_x);
  check_tokens(tokens_yhat);
  if (tokens_x.n() != tokens_yhat.n() || tokens_x.d() != tokens_yhat.d()) {
    throw ShapeError("cross-domain matching needs equal token count and dimension");
  }
  return {MatchMatrix{pairwise_dots(tokens_x.tokens, tokens_yhat.tokens), MatchKind::cross_x},
          MatchMatrix{pairwise_dots(tokens_yhat.tokens, tokens_x.tokens), MatchKind::cross_yhat}};
}

double matrix_distance(const MatchMatrix& a, const MatchMatrix& b, DistanceMode mode) {
  check_same_shape(a, b);
  if (mode == DistanceMode::flattened_cosine) {
    const auto t = cosine_terms(a.values.data(), b.values.data(), a.values.size());
    return 1.0 - clamp_cos(t.cos);
  }
  const auto rows = a.values.rows();
  const auto cols = a.values.cols();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto t = cosine_terms(a.values.data() + i * cols, b.values.data() + i * cols, cols);
    sum += 1.0 - clamp_cos(t.cos);
  }
  return sum / static_cast<double>(rows);
}

DistanceGradient matrix_distance_gradient(const MatchMatrix& a, const MatchMatrix& b, DistanceMode mode) {
  check_same_shape(a, b);
  const auto rows = a.values.rows();
  const auto cols = a.values.cols();
  DistanceGradient g;
  g.d_a = TokenMatrix::Zero(rows, cols);
  g.d_b = TokenMatrix::Zero(rows, cols);
  if (mode == DistanceMode::flattened_cosine) {
    const auto len = a.values.size();
    auto t = cosine_terms(a.values.data(), b.values.data(), len);
    g.value = 1.0 - clamp_cos(t.cos);
    cosine_grad(t, a.values.data(), b.values.data(), len, -1.0, g.d_a.data());
    std::swap(t.aa, t.bb);
    cosine_grad(t, b.values.data(), a.values.data(), len, -1.0, g.d_b.data());
    return g;
  }
  const double scale = -1.0 / static_cast<double>(rows);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double* ra = a.values.data() + i * cols;
    const double* rb = b.values.data() + i * cols;
    auto t = cosine_terms(ra, rb, cols);
    sum += 1.0 - clamp_cos(t.cos);
    cosine_grad(t, ra, rb, cols, scale, g.d_a.data() + i * cols);
    std::swap(t.aa, t.bb);
    cosine_grad(t, rb, ra, cols, scale, g.d_b.data() + i * cols);
  }
  g.value = sum / static_cast<double>(rows);
  return g;
}

double self_loss(const FeatureStack& stack_x, const FeatureStack& stack_yhat, const LossConfig& config) {
  check_stacks(stack_x, stack_yhat);
  const auto weights = normalized_weights(config, stack_x.size());
  double total = 0.0;
  for (std::size_t b = 0; b < stack_x.size(); ++b) {
    const auto mx = self_domain_matrix(stack_x.sets[b], MatchKind::self_x);
    const auto my = self_domain_matrix(stack_yhat.sets[b], MatchKind::self_yhat);
    total += weights[b] * matrix_distance(mx, my, config.distance);
  }
  return total;
}

double cross_loss(const FeatureStack& stack_x, const FeatureStack& stack_yhat, const LossConfig& config) {
  check_stacks(stack_x, stack_yhat);
  const auto weights = normalized_weights(config, stack_x.size());
  double total = 0.0;
  for (std::size_t b = 0; b < stack_x.size(); ++b) {
    const auto [mx, my] = cross_domain_matrices(stack_x.sets[b], stack_yhat.sets[b]);
    total += weights[b] * matrix_distance(mx, my, config.distance);
  }
  return total;
}

LossReport semantic_loss(const FeatureStack& stack_x, const FeatureStack& stack_yhat, const LossConfig& config) {
  config.validate();
  LossReport report;
  report.l_self = self_loss(stack_x, stack_yhat, config);
  report.l_cross = cross_loss(stack_x, stack_yhat, config);
  report.l_sem = blend_semantic(config.alpha, report.l_self, report.l_cross);
  return report;
}

SemanticGradient semantic_loss_gradient(const FeatureStack& stack_x, const FeatureStack& stack_yhat,
                                        const LossConfig& config) {
  config.validate();
  check_stacks(stack_x, stack_yhat);
  const auto weights = normalized_weights(config, stack_x.size());
  SemanticGradient out;
  for (std::size_t b = 0; b < stack_x.size(); ++b) {
    const TokenMatrix& s = stack_x.sets[b].tokens;
    const TokenMatrix& t = stack_yhat.sets[b].tokens;

    const auto self_x = self_domain_matrix(stack_x.sets[b], MatchKind::self_x);
    const auto self_y = self_domain_matrix(stack_yhat.sets[b], MatchKind::self_yhat);
    const auto gs = matrix_distance_gradient(self_x, self_y, config.distance);
    // B = T T^T  =>  dL/dT = (G + G^T) T
    TokenMatrix d_self = weights[b] * ((gs.d_b + gs.d_b.transpose()) * t);

    const auto [cross_x, cross_y] = cross_domain_matrices(stack_x.sets[b], stack_yhat.sets[b]);
    const auto gc = matrix_distance_gradient(cross_x, cross_y, config.distance);
    // A = S T^T  =>  dL/dT = G_A^T S ;  B = T S^T  =>  dL/dT = G_B S
    TokenMatrix d_cross = weights[b] * (gc.d_a.transpose() * s + gc.d_b * s);

    out.report.l_self += weights[b] * gs.value;
    out.report.l_cross += weights[b] * gc.value;
    out.d_sem.push_back(config.alpha * d_self + (1.0 - config.alpha) * d_cross);
    out.d_self.push_back(std::move(d_self));
    out.d_cross.push_back(std::move(d_cross));
  }
  out.report.l_sem = blend_semantic(config.alpha, out.report.l_self, out.report.l_cross);
  return out;
}

}  // namespace sim2xray
