#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "symx/tensor.hpp"

namespace symx {

// Reverse-mode tape over whole-graph tensors. Every op appends a node holding
// the forward value and an adjoint closure; backward() runs the closures in
// reverse creation order, accumulating into per-node gradient buffers.
class Tape {
 public:
  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  explicit Tape(bool check_finite = false) : check_finite_(check_finite) {}

  Var input(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return input(std::move(value), false); }

  const Tensor& val(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const;  // valid after backward()

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var hadamard(Var a, Var b);
  Var div(Var a, Var b);  // elementwise
  Var scale(Var a, double s);
  Var add_scalar(Var a, double s);
  Var relu(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var sum(Var a);        // rank-0
  Var mean(Var a);       // rank-0
  Var rows_mean(Var a);  // N×d → N
  Var rows_var(Var a);   // population variance per row
  Var rows_dot(Var a, Var b);
  Var sub_cols(Var a, Var v);  // subtract length-N vector from every column
  Var div_cols(Var a, Var v);
  Var mul_rows(Var a, Var v);  // scale every row elementwise by a length-d vector
  Var add_rows(Var a, Var v);
  Var concat_cols(Var a, Var b);
  Var concat_rows(Var a, Var b);
  Var reshape(Var a, const std::vector<int>& shape);
  Var gather_rows(Var a, std::vector<int> idx);
  Var segment_sum(Var a, std::vector<int> seg, int num_segments);
  // Per-column softmax within each segment, numerically stabilized by the
  // per-segment maximum. Rows of empty segments simply do not appear.
  Var segment_softmax(Var logits, std::vector<int> seg, int num_segments);
  Var block_row_sums(Var a, int block);      // N×d → N×(d/block): sum over column blocks
  Var expand_cols_blocks(Var a, int times);  // N×h → N×(h·times): adjoint of the above

  // Seeds root (which must have exactly one element) with 1 and accumulates
  // adjoints. Leaves never reached keep zero gradients.
  void backward(Var root);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> back;  // empty for leaves and constant subtrees
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  bool check_finite_;

  Node& node(Var v);
  const Node& node(Var v) const;
  bool needs(Var v) const { return node(v).needs_grad; }
  Var push(Tensor value, bool req, std::function<void(Tape&)> back);
  Tensor& g(Var v) { return node(v).grad; }
};

// Central-difference gradient checker. `build` must deterministically map the
// registered parameter vars to a one-element loss. Returns the max over checked
// entries of |analytic − fd| / max(|analytic|, |fd|, 1e-12).
struct GradCheckOptions {
  double step = 1e-5;
  int max_entries_per_tensor = 0;  // 0 = every entry
  std::uint64_t sample_seed = 0;
  bool corrupt_one_adjoint = false;  // self-test hook: must make the check fail
};

double grad_check(const std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>& build,
                  const std::vector<Tensor>& params, const GradCheckOptions& opt = {});

}  // namespace symx
