#include "sim2xray/features.hpp"

#include <string>

#include "sim2xray/errors.hpp"

namespace sim2xray {

std::vector<int> FeatureStack::block_ids() const {
  std::vector<int> ids;
  ids.reserve(sets.size());
  for (const auto& s : sets) ids.push_back(s.block_id);
  return ids;
}

void FeatureStack::validate() const {
  if (sets.empty()) throw ShapeError("feature stack is empty");
  const auto n = sets.front().n();
  const auto d = sets.front().d();
  if (n < 1 || d < 1) throw ShapeError("token set has no tokens or zero dimension");
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i].n() != n || sets[i].d() != d) {
      throw ShapeError("token set " + std::to_string(i) + " has shape " + std::to_string(sets[i].n()) +
                       "x" + std::to_string(sets[i].d()) + ", expected " + std::to_string(n) + "x" +
                       std::to_string(d));
    }
    if (i > 0 && sets[i].block_id <= sets[i - 1].block_id) {
      throw ShapeError("block ids must be strictly increasing");
    }
  }
}

void require_finite(const TokenSet& set) {
  if (!set.tokens.allFinite()) {
    throw NumericError("non-finite token in block " + std::to_string(set.block_id));
  }
}

}  // namespace sim2xray
