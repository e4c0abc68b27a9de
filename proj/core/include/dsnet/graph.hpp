#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dsnet/tensor.hpp"

namespace dsnet {

/// Tape of op records for one forward pass.
///
/// Ops append nodes in execution order, which is a topological order of the
/// dataflow. backward() walks the tape exactly once, in reverse, and
/// accumulates into the `grad` buffer of every tensor that requires grad.
/// A non-recording graph (inference) never stores nodes.
class Graph {
 public:
  struct Node {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  explicit Graph(bool recording = true) : recording_(recording) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const { return recording_; }

  // True if `output` of an op over `inputs` must be tracked.
  bool tracks(std::initializer_list<const Tensor*> inputs) const;

  void record(std::string op, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward);

  // Seeds d(loss)/d(loss) = 1 and runs every node's backward in reverse.
  void backward(Tensor loss);

  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
  bool recording_;
  bool backward_done_ = false;
};

}  // namespace dsnet
