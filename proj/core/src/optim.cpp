#include "dsnet/optim.hpp"

#include <cmath>

#include "dsnet/error.hpp"

namespace dsnet::optim {

AdamState make_adam_state(const std::vector<model::NamedTensor>& params, double learning_rate) {
  AdamState s;
  s.learning_rate = learning_rate;
  for (const auto& p : params) {
    s.m.emplace_back(p.tensor.numel(), 0.0);
    s.v.emplace_back(p.tensor.numel(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<model::NamedTensor>& params, AdamState& state, const AdamHyper& hyper) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].tensor.numel() || state.v[i].size() != params[i].tensor.numel()) {
      throw ShapeError("adam_step: moment buffer shape mismatch for '" + params[i].name + "'");
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].tensor;
    if (!p.has_grad()) continue;
    const auto grad = p.grad();
    auto w = p.data_mut();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * grad[j];
      v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

std::vector<NamedArray> adam_records(const std::vector<model::NamedTensor>& params, const AdamState& state) {
  std::vector<NamedArray> out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    out.push_back({"adam.m/" + params[i].name, params[i].tensor.shape(), state.m[i]});
    out.push_back({"adam.v/" + params[i].name, params[i].tensor.shape(), state.v[i]});
  }
  out.push_back({"adam.step", {1}, {static_cast<double>(state.step)}});
  out.push_back({"adam.learning_rate", {1}, {state.learning_rate}});
  return out;
}

double PlateauScheduler::update(double val_loss, double learning_rate) {
  if (val_loss < best_) {
    best_ = val_loss;
    bad_epochs_ = 0;
    return learning_rate;
  }
  if (++bad_epochs_ >= patience_) {
    bad_epochs_ = 0;
    return learning_rate * factor_;
  }
  return learning_rate;
}

}  // namespace dsnet::optim
