#include "dsnet/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "dsnet/error.hpp"

namespace dsnet {

GradCheckReport grad_check(const std::function<Tensor(Graph&)>& f, std::vector<Tensor> inputs,
                           const GradCheckOptions& options) {
  for (auto& t : inputs) {
    if (!t.requires_grad()) throw ValidationError("grad_check: every input must require grad");
    t.zero_grad();
  }
  {
    Graph g;
    Tensor loss = f(g);
    g.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& t : inputs) {
    auto gr = t.grad_mut();
    analytic.emplace_back(gr.begin(), gr.end());
  }

  auto evaluate = [&f]() {
    Graph g(false);
    return f(g).item();
  };

  GradCheckReport report;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto values = inputs[ti].data_mut();
    const std::size_t n = values.size();
    std::size_t stride = 1;
    if (options.max_elements_per_input > 0 && n > options.max_elements_per_input) {
      stride = (n + options.max_elements_per_input - 1) / options.max_elements_per_input;
    }
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = evaluate();
      values[i] = saved - options.step;
      const double down = evaluate();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[ti][i];
      const double err = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_input = ti;
        report.worst_element = i;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace dsnet
