#pragma once

#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "stc/tensor.hpp"

namespace stc {

// Reverse-mode autodiff tape. Ops append nodes in execution order, which is a
// valid topological order by construction; backward sweeps it in reverse.
//
// Leaf tensors (requires_grad) are registered on first use and keyed by their
// shared gradient buffer, so every copy of a parameter maps to one node.
// backward() accumulates into leaf .grad() buffers; callers zero them
// explicitly between optimizer steps.
//
// A tape and its tensors belong to one thread of execution; distinct tapes
// may run in parallel.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::span<const double>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Returns the node id for an op input: its producing node, a (possibly new)
  // leaf node if it requires grad, or -1 for a constant.
  int input_node(const Tensor& t);

  // Records an op that produced `out` from the given input nodes. `fn`
  // receives the output gradient and accumulates into input node buffers via
  // grad_buffer().
  void record(Tensor& out, std::vector<int> inputs, BackwardFn fn);

  // True if t was produced by this tape or is a gradient-carrying leaf.
  bool tracked(const Tensor& t) const {
    return (t.tape_ == this && t.node_ >= 0) || t.requires_grad();
  }

  // Rejects tensors already owned by a different tape.
  void check_same_tape(const Tensor& t) const;

  void backward(const Tensor& loss);

  // Gradient of the last backward() at an intermediate tensor produced by
  // this tape (used by Grad-CAM and the instrumentation tests).
  std::span<const double> grad_of(const Tensor& t) const;

  std::span<double> grad_buffer(int node);

  size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    int64_t size = 0;
    std::vector<int> inputs;
    BackwardFn backward;  // empty for leaves
    std::vector<double> grad;
    bool seeded = false;
    std::shared_ptr<std::vector<double>> leaf_sink;
  };
  std::vector<Node> nodes_;
  std::unordered_map<const void*, int> leaf_ids_;
};

}  // namespace stc
