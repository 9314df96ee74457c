#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "wiflow/tensor.hpp"

namespace wiflow {

// Eager autodiff tape. Ops executed while a tape is active append one node
// each, in execution order, which is already a valid topological order; a
// single reverse walk in backward() therefore populates every reachable
// gradient. One tape per training step, one thread per tape.
template <typename Scalar>
class Tape {
 public:
  Tape() {
    prev_ = current_;
    current_ = this;
  }
  ~Tape() { current_ = prev_; }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current() { return current_; }

  void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

  std::size_t node_count() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and runs all recorded nodes in reverse order.
  // Gradients accumulate by summation on every tensor the graph reaches.
  // The tape is consumed: nodes are cleared afterwards.
  void backward(Tensor<Scalar> loss) {
    check(loss.defined() && loss.size() == 1,
          "backward requires a scalar loss, got " +
              (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    loss.grad_buffer()[0] += Scalar(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
  }

 private:
  std::vector<std::function<void()>> nodes_;
  Tape* prev_ = nullptr;
  static thread_local Tape* current_;
};

template <typename Scalar>
thread_local Tape<Scalar>* Tape<Scalar>::current_ = nullptr;

// True when the op producing a tensor from these inputs must be recorded.
template <typename Scalar>
bool tracked(const Tensor<Scalar>& t) {
  const Tape<Scalar>* tape = Tape<Scalar>::current();
  if (!tape) return false;
  return t.requires_grad() || t.tape_tag() == tape;
}

}  // namespace wiflow
