#include "dsnet/losses.hpp"

#include <cmath>

#include "dsnet/error.hpp"
#include "dsnet/ops.hpp"

namespace dsnet::losses {

Tensor orthogonality_loss(Graph& g, const Tensor& z_er, const Tensor& z_ei, double eps) {
  if (z_er.rank() != 2 || z_er.shape() != z_ei.shape()) {
    throw ShapeError("orthogonality_loss: need two N×D matrices of equal shape");
  }
  if (z_er.dim(0) < 2) throw ValidationError("orthogonality_loss: batch size must be at least 2");
  Tensor cross = ops::matmul(g, ops::zscore_columns(g, z_er, eps), ops::zscore_columns(g, z_ei, eps), true);
  return ops::square_sum(g, cross);
}

Tensor reconstruction_loss(Graph& g, const Tensor& h, const Tensor& h_hat) {
  if (h.rank() != 2 || h.shape() != h_hat.shape()) {
    throw ShapeError("reconstruction_loss: shape mismatch " + shape_str(h.shape()) + " vs " +
                     shape_str(h_hat.shape()));
  }
  return ops::scale(g, ops::square_sum(g, ops::sub(g, h, h_hat)), 1.0 / static_cast<double>(h.dim(0)));
}

double kl_divergence(std::span<const double> p, std::span<const double> q, double eps) {
  if (p.size() != q.size() || p.empty()) throw ShapeError("kl_divergence: distributions differ in length");
  double sp = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || q[i] < 0.0) throw ValidationError("kl_divergence: negative probability");
    sp += p[i];
    sq += q[i];
  }
  if (std::abs(sp - 1.0) > 1e-6 || std::abs(sq - 1.0) > 1e-6) {
    throw ValidationError("kl_divergence: inputs must each sum to 1");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    kl += p[i] * (std::log(std::max(p[i], eps)) - std::log(std::max(q[i], eps)));
  }
  return kl;
}

Tensor calibration_loss(Graph& g, const Tensor& z_ei, const Tensor& h_n, double temperature) {
  if (z_ei.rank() != 2 || z_ei.shape() != h_n.shape()) {
    throw ShapeError("calibration_loss: shape mismatch " + shape_str(z_ei.shape()) + " vs " +
                     shape_str(h_n.shape()));
  }
  if (!(temperature > 0.0)) throw ValidationError("calibration_loss: temperature must be positive");
  const double inv_t = 1.0 / temperature;
  Tensor p = ops::softmax(g, inv_t == 1.0 ? z_ei : ops::scale(g, z_ei, inv_t), 1);
  Tensor q = ops::softmax(g, inv_t == 1.0 ? h_n : ops::scale(g, h_n, inv_t), 1);
  Tensor both = ops::add(g, ops::kl_rows(g, p, q, kLogEps), ops::kl_rows(g, q, p, kLogEps));
  return ops::scale(g, ops::sum(g, both), 0.5 / static_cast<double>(z_ei.dim(0)));
}

Tensor task_loss(Graph& g, const Tensor& probs, std::span<const int> labels) {
  return ops::nll(g, probs, labels, kLogEps);
}

LossBundle combine(Graph& g, Tensor task, Tensor orth, Tensor recon, Tensor calib, const LossWeights& w) {
  if (w.alpha < 0.0 || w.beta < 0.0 || w.gamma < 0.0) throw ValidationError("loss weights must be nonnegative");
  LossBundle b{task, orth, recon, calib, {}};
  Tensor total = ops::add(g, task, ops::scale(g, orth, w.alpha));
  total = ops::add(g, total, ops::scale(g, recon, w.beta));
  b.total = ops::add(g, total, ops::scale(g, calib, w.gamma));
  return b;
}

LossBundle total_loss(Graph& g, const model::ForwardBundle& fwd, std::span<const int> labels,
                      const LossOptions& options) {
  Tensor task = task_loss(g, fwd.probs, labels);
  if (!fwd.z_er.defined()) {
    LossBundle b{task, Tensor::scalar(0.0), Tensor::scalar(0.0), Tensor::scalar(0.0), task};
    return b;
  }
  return combine(g, task, orthogonality_loss(g, fwd.z_er, fwd.z_ei), reconstruction_loss(g, fwd.h, fwd.h_hat),
                 calibration_loss(g, fwd.z_ei, fwd.h_n, options.softmax_temperature), options.weights);
}

}  // namespace dsnet::losses
