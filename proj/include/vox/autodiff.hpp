#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vox/rng.hpp"
#include "vox/tensor.hpp"

namespace vox::ad {

// Reverse-mode tape. Ops append nodes in execution order; backward replays
// the recorded closures in exact reverse order. One tape per forward pass.
struct Node {
  Tensor val;
  Tensor grad;
  std::function<void()> back;  // empty for leaves
};

using Var = std::shared_ptr<Node>;

class Tape {
 public:
  Var leaf(Tensor t) {
    auto n = std::make_shared<Node>();
    n->grad = Tensor(t.shape);
    n->val = std::move(t);
    nodes_.push_back(n);
    return n;
  }
  Var record(Tensor val, std::function<void()> back) {
    auto n = std::make_shared<Node>();
    n->grad = Tensor(val.shape);
    n->val = std::move(val);
    n->back = std::move(back);
    nodes_.push_back(n);
    return n;
  }
  void backward(const Var& loss);
  std::size_t size() const { return nodes_.size(); }

 private:
  std::vector<Var> nodes_;
};

// Elementwise / broadcast
Var add(Tape& t, const Var& a, const Var& b);
Var add_rowwise(Tape& t, const Var& a, const Var& row);  // row broadcast over rows of a
Var sub(Tape& t, const Var& a, const Var& b);
Var mul(Tape& t, const Var& a, const Var& b);
Var scale(Tape& t, const Var& a, double k);

// Linear algebra / shape
Var matmul(Tape& t, const Var& a, const Var& b);
Var transpose(Tape& t, const Var& a);
Var concat_cols(Tape& t, const Var& a, const Var& b);
Var concat_rows(Tape& t, const std::vector<Var>& parts);
Var slice_cols(Tape& t, const Var& a, std::size_t start, std::size_t len);
Var row(Tape& t, const Var& a, std::size_t r);
Var reshape(Tape& t, const Var& a, std::vector<std::size_t> shape);  // same element count

// Nonlinearities
Var sigmoid(Tape& t, const Var& a);
Var tanh_op(Tape& t, const Var& a);
Var relu(Tape& t, const Var& a);
Var softmax_rows(Tape& t, const Var& a);
Var dropout(Tape& t, const Var& a, double keep_prob, Rng& rng);

// Structured ops
Var conv1d(Tape& t, const Var& x, const Var& w, const Var& b);  // same padding
Var maxpool1d(Tape& t, const Var& x);                           // width 2, stride 1
Var embedding_lookup(Tape& t, const Var& table, const std::vector<int>& ids);
Var mean_over_time(Tape& t, const Var& x);       // T x C -> 1 x C
Var l2_normalize_rows(Tape& t, const Var& x);

// Losses (targets are constants)
Var softmax_cross_entropy(Tape& t, const Var& logits, const std::vector<int>& targets);
Var bce_with_logits(Tape& t, const Var& logits, const Tensor& targets);
Var l1_loss(Tape& t, const Var& pred, const Tensor& target);
Var masked_l1_loss(Tape& t, const Var& pred, const Tensor& target,
                   const std::vector<double>& frame_mask);

// Finite-difference gradient check. Builds a fresh forward pass per
// evaluation; returns max over all coordinates of |a-n| / max(1e-8, |a|+|n|).
using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;
double grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double eps);

}  // namespace vox::ad
