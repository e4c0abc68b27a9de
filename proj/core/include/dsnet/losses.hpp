#pragma once

#include <span>

#include "dsnet/graph.hpp"
#include "dsnet/model.hpp"
#include "dsnet/tensor.hpp"

namespace dsnet::losses {

inline constexpr double kZscoreEps = 1e-5;
inline constexpr double kLogEps = 1e-10;

struct LossWeights {
  double alpha = 1.0;  // orthogonality
  double beta = 1.0;   // reconstruction
  double gamma = 1.0;  // neutral calibration
};

struct LossOptions {
  LossWeights weights;
  double softmax_temperature = 1.0;
};

struct LossBundle {
  Tensor task;
  Tensor orth;
  Tensor recon;
  Tensor calib;
  Tensor total;
};

// ‖zscore(Z_er)ᵀ · zscore(Z_ei)‖²_F with per-column population z-scores.
Tensor orthogonality_loss(Graph& g, const Tensor& z_er, const Tensor& z_ei, double eps = kZscoreEps);

// (1/N) Σ_i ‖h_i − ĥ_i‖²
Tensor reconstruction_loss(Graph& g, const Tensor& h, const Tensor& h_hat);

// Σ p_i ln(p_i / q_i) for two distributions summing to 1 ± 1e-6.
double kl_divergence(std::span<const double> p, std::span<const double> q, double eps = kLogEps);

// Row-wise softmax of both matrices, symmetric KL per row, batch mean.
Tensor calibration_loss(Graph& g, const Tensor& z_ei, const Tensor& h_n, double temperature = 1.0);

// Mean cross-entropy of probabilities against integer labels.
Tensor task_loss(Graph& g, const Tensor& probs, std::span<const int> labels);

// total = task + α·orth + β·recon + γ·calib
LossBundle combine(Graph& g, Tensor task, Tensor orth, Tensor recon, Tensor calib, const LossWeights& w);

// All four terms from one forward pass. A baseline bundle (no projections)
// yields zero regularizers and total = task.
LossBundle total_loss(Graph& g, const model::ForwardBundle& fwd, std::span<const int> labels,
                      const LossOptions& options);

}  // namespace dsnet::losses
