#include "dsnet/graph.hpp"

#include "dsnet/error.hpp"

namespace dsnet {

bool Graph::tracks(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void Graph::record(std::string op, std::vector<Tensor> inputs, Tensor output,
                   std::function<void()> backward) {
  if (backward_done_) throw Error("graph already consumed by backward(); build a new graph");
  output.set_requires_grad(true);
  nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(output), std::move(backward)});
}

void Graph::backward(Tensor loss) {
  if (backward_done_) throw Error("backward() called twice on the same graph");
  if (!recording_) throw Error("backward() on a non-recording graph");
  if (loss.numel() != 1) throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  if (!loss.requires_grad()) throw Error("loss does not depend on any tensor that requires grad");
  backward_done_ = true;
  loss.grad_mut()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
  // Release saved activations; parameter grads live on in the leaves.
  nodes_.clear();
}

}  // namespace dsnet
