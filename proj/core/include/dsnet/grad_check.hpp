#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "dsnet/graph.hpp"
#include "dsnet/tensor.hpp"

namespace dsnet {

struct GradCheckOptions {
  double step = 1e-6;
  // Check at most this many evenly spaced elements per input; 0 checks all.
  std::size_t max_elements_per_input = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_element = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. `f` must be a pure function of the current input values.
/// The error of one element is |a - n| / max(1e-8, |a| + |n|).
GradCheckReport grad_check(const std::function<Tensor(Graph&)>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace dsnet
