#include "addgcn/optim.hpp"

namespace addgcn {

GroupRates lr_schedule(std::size_t epoch, GroupRates base, std::span<const std::size_t> steps, double gamma) {
  for (auto s : steps) {
    if (epoch >= s) {
      base.head *= gamma;
      base.features *= gamma;
    }
  }
  return base;
}

void sgd_step(std::span<float> param, std::span<const float> grad, std::span<float> velocity, float lr,
              float momentum, float weight_decay) {
  if (param.size() != grad.size() || param.size() != velocity.size()) {
    throw ContractError("sgd_step: parameter, gradient and velocity sizes differ (" + std::to_string(param.size()) +
                        ", " + std::to_string(grad.size()) + ", " + std::to_string(velocity.size()) + ")");
  }
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + (grad[i] + weight_decay * param[i]);
    param[i] -= lr * velocity[i];
  }
}

Sgd::Sgd(std::vector<NamedParameter> params, double momentum, double weight_decay)
    : params_(std::move(params)),
      momentum_(static_cast<float>(momentum)),
      weight_decay_(static_cast<float>(weight_decay)) {
  for (const auto& p : params_) velocity_.emplace_back(p.tensor.numel(), 0.0f);
}

void Sgd::step(const GroupRates& rates) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    const float lr = static_cast<float>(params_[i].group == ParamGroup::head ? rates.head : rates.features);
    // A parameter the loss did not reach still decays and carries momentum.
    std::vector<float> zeros;
    std::span<const float> g = t.grad();
    if (!t.has_grad()) {
      zeros.assign(t.numel(), 0.0f);
      g = zeros;
    }
    sgd_step(t.mutable_data(), g, velocity_[i], lr, momentum_, weight_decay_);
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace addgcn
