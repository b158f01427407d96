#pragma once

#include <vector>

#include <Eigen/Core>

namespace sim2xray {

using TokenMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// The n patch tokens (rows) of one image at one extractor block.
struct TokenSet {
  TokenMatrix tokens;
  int block_id = 0;

  Eigen::Index n() const { return tokens.rows(); }
  Eigen::Index d() const { return tokens.cols(); }
};

// Token sets from the selected extractor blocks, shallow to deep.
struct FeatureStack {
  std::vector<TokenSet> sets;

  std::size_t size() const { return sets.size(); }
  std::vector<int> block_ids() const;
  const TokenSet& deepest() const { return sets.back(); }

  // Throws ShapeError unless N >= 1, ids strictly increase and every set
  // shares n and d.
  void validate() const;
};

// Throws NumericError on any non-finite entry.
void require_finite(const TokenSet& set);

}  // namespace sim2xray
