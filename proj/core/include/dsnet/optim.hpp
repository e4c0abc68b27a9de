#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "dsnet/checkpoint.hpp"
#include "dsnet/model.hpp"

namespace dsnet::optim {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
  double learning_rate = 1e-3;
};

AdamState make_adam_state(const std::vector<model::NamedTensor>& params, double learning_rate);

// One bias-corrected Adam update using each parameter's accumulated grad.
// Parameters without a grad buffer are treated as having zero gradient.
void adam_step(const std::vector<model::NamedTensor>& params, AdamState& state, const AdamHyper& hyper = {});

// Moment buffers as checkpoint optimizer records ("adam.m/<name>", ...).
std::vector<NamedArray> adam_records(const std::vector<model::NamedTensor>& params, const AdamState& state);

/// Multiplies the learning rate by `factor` once the best validation loss has
/// gone `patience` consecutive epochs without strictly improving, then starts
/// counting again.
class PlateauScheduler {
 public:
  PlateauScheduler(std::size_t patience, double factor) : patience_(patience), factor_(factor) {}

  // Returns the (possibly reduced) learning rate.
  double update(double val_loss, double learning_rate);

  std::size_t bad_epochs() const { return bad_epochs_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double factor_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_epochs_ = 0;
};

}  // namespace dsnet::optim
