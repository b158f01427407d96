#pragma once

#include <vector>

#include <torch/torch.h>

#include "sim2xray/matching.hpp"

namespace sim2xray {

// Batch semantic loss for the training graph.
//
// x_blocks and yhat_blocks hold one [B, n, d] tensor per selected block. The
// returned scalar is the batch mean of l_sem; its backward pass applies the
// analytic gradient from semantic_loss_gradient to the yhat tokens (x tokens
// are treated as constants). Batch means of l_self, l_cross and l_sem are
// written to `report` when given.
torch::Tensor semantic_loss_tensor(const std::vector<torch::Tensor>& x_blocks,
                                   const std::vector<torch::Tensor>& yhat_blocks, const std::vector<int>& block_ids,
                                   const LossConfig& config, LossReport* report = nullptr);

}  // namespace sim2xray
