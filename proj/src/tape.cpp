#include "stc/tape.hpp"

#include "stc/kernels.hpp"

namespace stc {

void Tape::check_same_tape(const Tensor& t) const {
  if (t.tape_ != nullptr && t.tape_ != this)
    throw ValidationError("tape: input tensor belongs to a different tape");
}

int Tape::input_node(const Tensor& t) {
  check_same_tape(t);
  if (t.tape_ == this && t.node_ >= 0) return t.node_;
  if (!t.requires_grad()) return -1;
  const void* key = t.grad().data();
  auto it = leaf_ids_.find(key);
  if (it != leaf_ids_.end()) return it->second;
  Node leaf;
  leaf.size = t.numel();
  leaf.leaf_sink = t.grad_;
  nodes_.push_back(std::move(leaf));
  int id = static_cast<int>(nodes_.size()) - 1;
  leaf_ids_.emplace(key, id);
  return id;
}

void Tape::record(Tensor& out, std::vector<int> inputs, BackwardFn fn) {
  Node node;
  node.size = out.numel();
  node.inputs = std::move(inputs);
  node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  out.tape_ = this;
  out.node_ = static_cast<int>(nodes_.size()) - 1;
}

std::span<double> Tape::grad_buffer(int node) {
  Node& n = nodes_[node];
  if (n.grad.empty()) n.grad.assign(n.size, 0.0);
  n.seeded = true;
  return {n.grad.data(), n.grad.size()};
}

void Tape::backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ValidationError(strfmt("backward: loss must be scalar, got shape %s",
                                 loss.shape().str().c_str()));
  if (loss.tape_ != this || loss.node_ < 0)
    throw ValidationError("backward: loss is detached from this tape");
  for (auto& n : nodes_) {
    n.grad.clear();
    n.seeded = false;
  }
  grad_buffer(loss.node_)[0] = 1.0;
  for (int id = loss.node_; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.seeded) continue;
    if (n.backward) {
      n.backward(*this, {n.grad.data(), n.grad.size()});
    } else if (n.leaf_sink) {
      kernels::add(n.leaf_sink->data(), n.grad.data(), n.leaf_sink->data(), n.size);
    }
  }
}

std::span<const double> Tape::grad_of(const Tensor& t) const {
  if (t.tape_ != this || t.node_ < 0)
    throw ValidationError("grad_of: tensor was not produced by this tape");
  const Node& n = nodes_[t.node_];
  if (!n.seeded)
    throw ValidationError("grad_of: no gradient recorded; run backward first");
  return {n.grad.data(), n.grad.size()};
}

}  // namespace stc
