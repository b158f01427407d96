#pragma once

#include <utility>
#include <vector>

#include "sim2xray/features.hpp"

namespace sim2xray {

enum class MatchKind { self_x, self_yhat, cross_x, cross_yhat };

// n x n relation matrix; row i collects token i matched against all tokens.
struct MatchMatrix {
  TokenMatrix values;
  MatchKind kind = MatchKind::self_x;
};

enum class DistanceMode {
  row_cosine,        // mean over rows of 1 - cos(a_i, b_i)
  flattened_cosine,  // 1 - cos(vec a, vec b)
};

// Norms below this are clamped before dividing.
inline constexpr double kCosineEps = 1e-8;

struct LossConfig {
  double alpha = 0.5;
  double lambda = 8.0;
  // Optional per-block weights; empty means the uniform 1/N mean. Normalized to sum 1.
  std::vector<double> block_weights;
  DistanceMode distance = DistanceMode::row_cosine;

  void validate() const;
};

struct LossReport {
  double l_self = 0.0;
  double l_cross = 0.0;
  double l_sem = 0.0;
  double l_d = 0.0;
  double l_g = 0.0;
};

// Entry (i, j) = s_i . s_j. Symmetric.
MatchMatrix self_domain_matrix(const TokenSet& tokens, MatchKind kind = MatchKind::self_x);

// first:  row i = x_i . yhat_*   (u_{s_i})
// second: row i = yhat_i . x_*   (u_{t_i}); exactly the transpose of first.
std::pair<MatchMatrix, MatchMatrix> cross_domain_matrices(const TokenSet& tokens_x,
                                                          const TokenSet& tokens_yhat);

// Cosine distance between matching matrices, in [0, 2].
double matrix_distance(const MatchMatrix& a, const MatchMatrix& b,
                       DistanceMode mode = DistanceMode::row_cosine);

// Gradient of matrix_distance with respect to both arguments.
struct DistanceGradient {
  double value = 0.0;
  TokenMatrix d_a;
  TokenMatrix d_b;
};
DistanceGradient matrix_distance_gradient(const MatchMatrix& a, const MatchMatrix& b,
                                          DistanceMode mode = DistanceMode::row_cosine);

double self_loss(const FeatureStack& stack_x, const FeatureStack& stack_yhat,
                 const LossConfig& config = {});
double cross_loss(const FeatureStack& stack_x, const FeatureStack& stack_yhat,
                  const LossConfig& config = {});

inline double blend_semantic(double alpha, double l_self, double l_cross) {
  return alpha * l_self + (1.0 - alpha) * l_cross;
}

// Fills l_self, l_cross and l_sem = alpha * l_self + (1 - alpha) * l_cross.
LossReport semantic_loss(const FeatureStack& stack_x, const FeatureStack& stack_yhat,
                         const LossConfig& config);

// Semantic loss together with its gradients with respect to the yhat tokens,
// one matrix per block (n x d), for each of the three terms.
struct SemanticGradient {
  LossReport report;
  std::vector<TokenMatrix> d_self;
  std::vector<TokenMatrix> d_cross;
  std::vector<TokenMatrix> d_sem;
};
SemanticGradient semantic_loss_gradient(const FeatureStack& stack_x, const FeatureStack& stack_yhat,
                                        const LossConfig& config);

}  // namespace sim2xray
