#include "sim2xray/semantic_autograd.hpp"

#include "sim2xray/errors.hpp"
#include "sim2xray/torch_bridge.hpp"

namespace sim2xray {

namespace {

using torch::autograd::AutogradContext;
using torch::autograd::variable_list;

struct SemanticLossFunction : public torch::autograd::Function<SemanticLossFunction> {
  // yhat, x: [N, B, n, d]
  static torch::Tensor forward(AutogradContext* ctx, const torch::Tensor& yhat, const torch::Tensor& x,
                               const std::vector<int>& block_ids, const LossConfig& config, LossReport* report) {
    const auto blocks = yhat.size(0);
    const auto batch = yhat.size(1);
    const std::vector<torch::Tensor> yhat_blocks = yhat.detach().unbind(0);
    const std::vector<torch::Tensor> x_blocks = x.detach().unbind(0);

    auto grad = torch::zeros(yhat.sizes(), torch::kFloat64);
    LossReport mean;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    for (std::int64_t b = 0; b < batch; ++b) {
      const auto sx = to_feature_stack(x_blocks, block_ids, b);
      const auto sy = to_feature_stack(yhat_blocks, block_ids, b);
      const auto g = semantic_loss_gradient(sx, sy, config);
      mean.l_self += g.report.l_self * inv_batch;
      mean.l_cross += g.report.l_cross * inv_batch;
      for (std::int64_t k = 0; k < blocks; ++k) {
        const auto& d = g.d_sem[static_cast<std::size_t>(k)];
        grad[k][b].copy_(torch::from_blob(const_cast<double*>(d.data()), {d.rows(), d.cols()}, torch::kFloat64) *
                         inv_batch);
      }
    }
    mean.l_sem = blend_semantic(config.alpha, mean.l_self, mean.l_cross);
    if (!std::isfinite(mean.l_sem)) throw NumericError("non-finite semantic loss");
    if (report) {
      report->l_self = mean.l_self;
      report->l_cross = mean.l_cross;
      report->l_sem = mean.l_sem;
    }
    ctx->save_for_backward({grad.to(yhat.scalar_type())});
    return torch::tensor(mean.l_sem, torch::TensorOptions().dtype(yhat.scalar_type()));
  }

  static variable_list backward(AutogradContext* ctx, variable_list grad_output) {
    const auto grad = ctx->get_saved_variables()[0];
    return {grad * grad_output[0], torch::Tensor(), torch::Tensor(), torch::Tensor(), torch::Tensor()};
  }
};

}  // namespace

torch::Tensor semantic_loss_tensor(const std::vector<torch::Tensor>& x_blocks,
                                   const std::vector<torch::Tensor>& yhat_blocks, const std::vector<int>& block_ids,
                                   const LossConfig& config, LossReport* report) {
  if (x_blocks.size() != yhat_blocks.size() || x_blocks.size() != block_ids.size() || x_blocks.empty()) {
    throw ShapeError("semantic loss needs one x and one yhat token tensor per block");
  }
  config.validate();
  return SemanticLossFunction::apply(torch::stack(yhat_blocks), torch::stack(x_blocks), block_ids, config, report);
}

}  // namespace sim2xray
