#include "symx/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace symx {

namespace {

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw std::invalid_argument(std::string(op) + ": rank-2 tensor required");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

Tape::Node& Tape::node(Var v) {
  if (!v.valid() || v.id >= size()) throw std::logic_error("invalid tape var");
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= size()) throw std::logic_error("invalid tape var");
  return nodes_[v.id];
}

const Tensor& Tape::grad(Var v) const { return node(v).grad; }

Tape::Var Tape::push(Tensor value, bool req, std::function<void(Tape&)> back) {
  if (check_finite_ && !value.all_finite())
    throw std::runtime_error("non-finite tensor value on tape");
  Node n;
  n.value = std::move(value);
  n.needs_grad = req;
  if (req) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return {size() - 1};
}

Tape::Var Tape::input(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

Tape::Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  require_rank2(ta, "matmul");
  require_rank2(tb, "matmul");
  if (ta.cols() != tb.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Tensor out = Tensor::zeros({ta.rows(), tb.cols()});
  out.mat().noalias() = ta.mat() * tb.mat();
  int rid = size();  // id of the node about to be pushed
  return push(std::move(out), needs(a) || needs(b), [a, b, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    if (t.needs(a)) t.g(a).mat().noalias() += gr.mat() * t.val(b).mat().transpose();
    if (t.needs(b)) t.g(b).mat().noalias() += t.val(a).mat().transpose() * gr.mat();
  });
}

Tape::Var Tape::add(Var a, Var b) {
  require_same_shape(val(a), val(b), "add");
  Tensor out = Tensor::zeros_like(val(a));
  out.flat() = val(a).flat() + val(b).flat();
  int rid = size();
  return push(std::move(out), needs(a) || needs(b), [a, b, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    if (t.needs(a)) t.g(a).flat() += gr.flat();
    if (t.needs(b)) t.g(b).flat() += gr.flat();
  });
}

Tape::Var Tape::sub(Var a, Var b) {
  require_same_shape(val(a), val(b), "sub");
  Tensor out = Tensor::zeros_like(val(a));
  out.flat() = val(a).flat() - val(b).flat();
  int rid = size();
  return push(std::move(out), needs(a) || needs(b), [a, b, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    if (t.needs(a)) t.g(a).flat() += gr.flat();
    if (t.needs(b)) t.g(b).flat() -= gr.flat();
  });
}

Tape::Var Tape::hadamard(Var a, Var b) {
  require_same_shape(val(a), val(b), "hadamard");
  Tensor out = Tensor::zeros_like(val(a));
  out.flat() = val(a).flat().cwiseProduct(val(b).flat());
  int rid = size();
  return push(std::move(out), needs(a) || needs(b), [a, b, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    if (t.needs(a)) t.g(a).flat() += gr.flat().cwiseProduct(t.val(b).flat());
    if (t.needs(b)) t.g(b).flat() += gr.flat().cwiseProduct(t.val(a).flat());
  });
}

Tape::Var Tape::div(Var a, Var b) {
  require_same_shape(val(a), val(b), "div");
  Tensor out = Tensor::zeros_like(val(a));
  out.flat() = val(a).flat().cwiseQuotient(val(b).flat());
  int rid = size();
  return push(std::move(out), needs(a) || needs(b), [a, b, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    auto bv = t.val(b).flat();
    if (t.needs(a)) t.g(a).flat() += gr.flat().cwiseQuotient(bv);
    if (t.needs(b))
      t.g(b).flat() -= gr.flat().cwiseProduct(t.nodes_[rid].value.flat()).cwiseQuotient(bv);
  });
}

Tape::Var Tape::scale(Var a, double s) {
  Tensor out = Tensor::zeros_like(val(a));
  out.flat() = s * val(a).flat();
  int rid = size();
  return push(std::move(out), needs(a), [a, s, rid](Tape& t) {
    t.g(a).flat() += s * t.nodes_[rid].grad.flat();
  });
}

Tape::Var Tape::add_scalar(Var a, double s) {
  Tensor out = Tensor::zeros_like(val(a));
  out.flat() = val(a).flat().array() + s;
  int rid = size();
  return push(std::move(out), needs(a), [a, rid](Tape& t) {
    t.g(a).flat() += t.nodes_[rid].grad.flat();
  });
}

Tape::Var Tape::relu(Var a) {
  Tensor out = Tensor::zeros_like(val(a));
  out.flat() = val(a).flat().cwiseMax(0.0);
  int rid = size();
  return push(std::move(out), needs(a), [a, rid](Tape& t) {
    auto av = t.val(a).flat().array();
    t.g(a).flat().array() += t.nodes_[rid].grad.flat().array() * (av > 0.0).cast<double>();
  });
}

Tape::Var Tape::exp(Var a) {
  Tensor out = Tensor::zeros_like(val(a));
  out.flat() = val(a).flat().array().exp();
  int rid = size();
  return push(std::move(out), needs(a), [a, rid](Tape& t) {
    t.g(a).flat() +=
        t.nodes_[rid].grad.flat().cwiseProduct(t.nodes_[rid].value.flat());
  });
}

Tape::Var Tape::log(Var a) {
  Tensor out = Tensor::zeros_like(val(a));
  out.flat() = val(a).flat().array().log();
  int rid = size();
  return push(std::move(out), needs(a), [a, rid](Tape& t) {
    t.g(a).flat() += t.nodes_[rid].grad.flat().cwiseQuotient(t.val(a).flat());
  });
}

Tape::Var Tape::sqrt(Var a) {
  Tensor out = Tensor::zeros_like(val(a));
  out.flat() = val(a).flat().array().sqrt();
  int rid = size();
  return push(std::move(out), needs(a), [a, rid](Tape& t) {
    t.g(a).flat() += t.nodes_[rid].grad.flat().cwiseQuotient(2.0 * t.nodes_[rid].value.flat());
  });
}

Tape::Var Tape::sum(Var a) {
  Tensor out = Tensor::scalar(val(a).flat().sum());
  int rid = size();
  return push(std::move(out), needs(a), [a, rid](Tape& t) {
    t.g(a).flat().array() += t.nodes_[rid].grad.value();
  });
}

Tape::Var Tape::mean(Var a) {
  int n = val(a).numel();
  if (n == 0) throw std::invalid_argument("mean of an empty tensor");
  Tensor out = Tensor::scalar(val(a).flat().sum() / n);
  int rid = size();
  return push(std::move(out), needs(a), [a, n, rid](Tape& t) {
    t.g(a).flat().array() += t.nodes_[rid].grad.value() / n;
  });
}

Tape::Var Tape::rows_mean(Var a) {
  require_rank2(val(a), "rows_mean");
  int d = val(a).cols();
  if (d == 0) throw std::invalid_argument("rows_mean with zero columns");
  Tensor out = Tensor::from_vector(val(a).mat().rowwise().mean());
  int rid = size();
  return push(std::move(out), needs(a), [a, d, rid](Tape& t) {
    t.g(a).mat().colwise() += t.nodes_[rid].grad.flat() / d;
  });
}

Tape::Var Tape::rows_var(Var a) {
  require_rank2(val(a), "rows_var");
  int d = val(a).cols();
  if (d == 0) throw std::invalid_argument("rows_var with zero columns");
  auto m = val(a).mat();
  Eigen::VectorXd mu = m.rowwise().mean();
  Tensor out = Tensor::from_vector((m.colwise() - mu).array().square().matrix().rowwise().sum() / d);
  int rid = size();
  return push(std::move(out), needs(a), [a, d, rid](Tape& t) {
    auto m2 = t.val(a).mat();
    Eigen::VectorXd mu2 = m2.rowwise().mean();
    // d var_i / d a_ij = 2 (a_ij − μ_i) / d
    t.g(a).mat().array() += ((m2.colwise() - mu2) * 2.0 / d).array().colwise() *
                            t.nodes_[rid].grad.flat().array();
  });
}

Tape::Var Tape::rows_dot(Var a, Var b) {
  require_rank2(val(a), "rows_dot");
  require_same_shape(val(a), val(b), "rows_dot");
  Tensor out = Tensor::from_vector(val(a).mat().cwiseProduct(val(b).mat()).rowwise().sum());
  int rid = size();
  return push(std::move(out), needs(a) || needs(b), [a, b, rid](Tape& t) {
    auto gv = t.nodes_[rid].grad.flat().array();
    if (t.needs(a)) t.g(a).mat().array() += t.val(b).mat().array().colwise() * gv;
    if (t.needs(b)) t.g(b).mat().array() += t.val(a).mat().array().colwise() * gv;
  });
}

Tape::Var Tape::sub_cols(Var a, Var v) {
  require_rank2(val(a), "sub_cols");
  if (val(v).rank() != 1 || val(v).rows() != val(a).rows())
    throw std::invalid_argument("sub_cols: need a length-N rank-1 vector");
  Tensor out = Tensor::zeros_like(val(a));
  out.mat() = val(a).mat().colwise() - val(v).flat();
  int rid = size();
  return push(std::move(out), needs(a) || needs(v), [a, v, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    if (t.needs(a)) t.g(a).flat() += gr.flat();
    if (t.needs(v)) t.g(v).flat() -= gr.mat().rowwise().sum();
  });
}

Tape::Var Tape::div_cols(Var a, Var v) {
  require_rank2(val(a), "div_cols");
  if (val(v).rank() != 1 || val(v).rows() != val(a).rows())
    throw std::invalid_argument("div_cols: need a length-N rank-1 vector");
  Tensor out = Tensor::zeros_like(val(a));
  out.mat() = val(a).mat().array().colwise() / val(v).flat().array();
  int rid = size();
  return push(std::move(out), needs(a) || needs(v), [a, v, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    auto vv = t.val(v).flat().array();
    if (t.needs(a)) t.g(a).mat().array() += gr.mat().array().colwise() / vv;
    if (t.needs(v))
      t.g(v).flat().array() -=
          gr.mat().cwiseProduct(t.nodes_[rid].value.mat()).rowwise().sum().array() / vv;
  });
}

Tape::Var Tape::mul_rows(Var a, Var v) {
  require_rank2(val(a), "mul_rows");
  if (val(v).rank() != 1 || val(v).rows() != val(a).cols())
    throw std::invalid_argument("mul_rows: need a length-d rank-1 vector");
  Tensor out = Tensor::zeros_like(val(a));
  out.mat() = val(a).mat().array().rowwise() * val(v).flat().transpose().array();
  int rid = size();
  return push(std::move(out), needs(a) || needs(v), [a, v, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    if (t.needs(a))
      t.g(a).mat().array() += gr.mat().array().rowwise() * t.val(v).flat().transpose().array();
    if (t.needs(v))
      t.g(v).flat() += gr.mat().cwiseProduct(t.val(a).mat()).colwise().sum().transpose();
  });
}

Tape::Var Tape::add_rows(Var a, Var v) {
  require_rank2(val(a), "add_rows");
  if (val(v).rank() != 1 || val(v).rows() != val(a).cols())
    throw std::invalid_argument("add_rows: need a length-d rank-1 vector");
  Tensor out = Tensor::zeros_like(val(a));
  out.mat() = val(a).mat().rowwise() + val(v).flat().transpose();
  int rid = size();
  return push(std::move(out), needs(a) || needs(v), [a, v, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    if (t.needs(a)) t.g(a).flat() += gr.flat();
    if (t.needs(v)) t.g(v).flat() += gr.mat().colwise().sum().transpose();
  });
}

Tape::Var Tape::concat_cols(Var a, Var b) {
  require_rank2(val(a), "concat_cols");
  require_rank2(val(b), "concat_cols");
  if (val(a).rows() != val(b).rows()) throw std::invalid_argument("concat_cols: row mismatch");
  int da = val(a).cols(), db = val(b).cols();
  Tensor out = Tensor::zeros({val(a).rows(), da + db});
  out.mat().leftCols(da) = val(a).mat();
  out.mat().rightCols(db) = val(b).mat();
  int rid = size();
  return push(std::move(out), needs(a) || needs(b), [a, b, da, db, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    if (t.needs(a)) t.g(a).mat() += gr.mat().leftCols(da);
    if (t.needs(b)) t.g(b).mat() += gr.mat().rightCols(db);
  });
}

Tape::Var Tape::concat_rows(Var a, Var b) {
  require_rank2(val(a), "concat_rows");
  require_rank2(val(b), "concat_rows");
  if (val(a).cols() != val(b).cols()) throw std::invalid_argument("concat_rows: column mismatch");
  int ra = val(a).rows(), rb = val(b).rows();
  Tensor out = Tensor::zeros({ra + rb, val(a).cols()});
  out.mat().topRows(ra) = val(a).mat();
  out.mat().bottomRows(rb) = val(b).mat();
  int rid = size();
  return push(std::move(out), needs(a) || needs(b), [a, b, ra, rb, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    if (t.needs(a)) t.g(a).mat() += gr.mat().topRows(ra);
    if (t.needs(b)) t.g(b).mat() += gr.mat().bottomRows(rb);
  });
}

Tape::Var Tape::reshape(Var a, const std::vector<int>& shape) {
  Tensor out = val(a).reshaped(shape);
  int rid = size();
  return push(std::move(out), needs(a), [a, rid](Tape& t) {
    t.g(a).flat() += t.nodes_[rid].grad.flat();
  });
}

Tape::Var Tape::gather_rows(Var a, std::vector<int> idx) {
  require_rank2(val(a), "gather_rows");
  int n = val(a).rows(), d = val(a).cols();
  Tensor out = Tensor::zeros({static_cast<int>(idx.size()), d});
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= n) throw std::invalid_argument("gather_rows: index out of range");
    out.mat().row(r) = val(a).mat().row(idx[r]);
  }
  int rid = size();
  return push(std::move(out), needs(a), [a, idx = std::move(idx), rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    for (size_t r = 0; r < idx.size(); ++r) t.g(a).mat().row(idx[r]) += gr.mat().row(r);
  });
}

Tape::Var Tape::segment_sum(Var a, std::vector<int> seg, int num_segments) {
  require_rank2(val(a), "segment_sum");
  if (static_cast<int>(seg.size()) != val(a).rows())
    throw std::invalid_argument("segment_sum: one segment id per row required");
  Tensor out = Tensor::zeros({num_segments, val(a).cols()});
  for (size_t r = 0; r < seg.size(); ++r) {
    if (seg[r] < 0 || seg[r] >= num_segments)
      throw std::invalid_argument("segment_sum: segment id out of range");
    out.mat().row(seg[r]) += val(a).mat().row(r);
  }
  int rid = size();
  return push(std::move(out), needs(a), [a, seg = std::move(seg), rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    for (size_t r = 0; r < seg.size(); ++r) t.g(a).mat().row(r) += gr.mat().row(seg[r]);
  });
}

Tape::Var Tape::segment_softmax(Var logits, std::vector<int> seg, int num_segments) {
  require_rank2(val(logits), "segment_softmax");
  int e = val(logits).rows(), h = val(logits).cols();
  if (static_cast<int>(seg.size()) != e)
    throw std::invalid_argument("segment_softmax: one segment id per row required");
  for (int s : seg)
    if (s < 0 || s >= num_segments)
      throw std::invalid_argument("segment_softmax: segment id out of range");

  Tensor out = Tensor::zeros({e, h});
  auto x = val(logits).mat();
  auto y = out.mat();
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  Eigen::MatrixXd mx(num_segments, h), acc(num_segments, h);
  mx.setConstant(kNegInf);
  for (int r = 0; r < e; ++r) mx.row(seg[r]) = mx.row(seg[r]).cwiseMax(x.row(r));
  acc.setZero();
  for (int r = 0; r < e; ++r) {
    y.row(r) = (x.row(r) - mx.row(seg[r])).array().exp();
    acc.row(seg[r]) += y.row(r);
  }
  for (int r = 0; r < e; ++r) y.row(r) = y.row(r).cwiseQuotient(acc.row(seg[r]));

  int rid = size();
  int ns = num_segments;
  return push(std::move(out), needs(logits), [logits, seg = std::move(seg), ns, rid](Tape& t) {
    const Tensor& res = t.nodes_[rid].value;
    const Tensor& gr = t.nodes_[rid].grad;
    int hh = res.cols();
    Eigen::MatrixXd dot = Eigen::MatrixXd::Zero(ns, hh);  // Σ g·y per segment
    for (size_t r = 0; r < seg.size(); ++r)
      dot.row(seg[r]) += gr.mat().row(r).cwiseProduct(res.mat().row(r));
    for (size_t r = 0; r < seg.size(); ++r)
      t.g(logits).mat().row(r) +=
          res.mat().row(r).cwiseProduct(gr.mat().row(r) - dot.row(seg[r]));
  });
}

Tape::Var Tape::block_row_sums(Var a, int block) {
  require_rank2(val(a), "block_row_sums");
  int d = val(a).cols();
  if (block <= 0 || d % block != 0)
    throw std::invalid_argument("block_row_sums: block must divide column count");
  int h = d / block;
  Tensor out = Tensor::zeros({val(a).rows(), h});
  for (int k = 0; k < h; ++k)
    out.mat().col(k) = val(a).mat().middleCols(k * block, block).rowwise().sum();
  int rid = size();
  return push(std::move(out), needs(a), [a, block, h, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    for (int k = 0; k < h; ++k)
      t.g(a).mat().middleCols(k * block, block).colwise() += gr.mat().col(k);
  });
}

Tape::Var Tape::expand_cols_blocks(Var a, int times) {
  require_rank2(val(a), "expand_cols_blocks");
  if (times <= 0) throw std::invalid_argument("expand_cols_blocks: times must be positive");
  int h = val(a).cols();
  Tensor out = Tensor::zeros({val(a).rows(), h * times});
  for (int k = 0; k < h; ++k)
    out.mat().middleCols(k * times, times).colwise() = val(a).mat().col(k);
  int rid = size();
  return push(std::move(out), needs(a), [a, times, h, rid](Tape& t) {
    const Tensor& gr = t.nodes_[rid].grad;
    for (int k = 0; k < h; ++k)
      t.g(a).mat().col(k) += gr.mat().middleCols(k * times, times).rowwise().sum();
  });
}

void Tape::backward(Var root) {
  if (val(root).numel() != 1) throw std::invalid_argument("backward root must hold one element");
  for (Node& n : nodes_) {
    n.grad = Tensor::zeros_like(n.value);
  }
  nodes_[root.id].grad[0] = 1.0;
  for (int i = root.id; i >= 0; --i)
    if (nodes_[i].needs_grad && nodes_[i].back) nodes_[i].back(*this);
  if (check_finite_)
    for (const Node& n : nodes_)
      if (!n.grad.all_finite()) throw std::runtime_error("non-finite gradient on tape");
}

namespace {

double eval_loss(const std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>& build,
                 const std::vector<Tensor>& params) {
  Tape tape;
  std::vector<Tape::Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.input(p));
  return tape.val(build(tape, vars)).value();
}

}  // namespace

double grad_check(const std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>& build,
                  const std::vector<Tensor>& params, const GradCheckOptions& opt) {
  Tape tape;
  std::vector<Tape::Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(tape.input(p));
  Tape::Var loss = build(tape, vars);
  tape.backward(loss);

  std::vector<Tensor> analytic;
  analytic.reserve(vars.size());
  for (Tape::Var v : vars) analytic.push_back(tape.grad(v));

  std::mt19937_64 rng(opt.sample_seed);
  std::vector<std::vector<int>> picked(params.size());
  for (size_t ti = 0; ti < params.size(); ++ti) {
    int n = params[ti].numel();
    std::vector<int> entries(n);
    std::iota(entries.begin(), entries.end(), 0);
    if (opt.max_entries_per_tensor > 0 && n > opt.max_entries_per_tensor) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(opt.max_entries_per_tensor);
      std::sort(entries.begin(), entries.end());
    }
    picked[ti] = std::move(entries);
  }

  // Self-test: the corruption must hit an entry the comparison below visits.
  if (opt.corrupt_one_adjoint)
    for (size_t ti = 0; ti < picked.size(); ++ti)
      if (!picked[ti].empty()) {
        analytic[ti][picked[ti].front()] += 0.5;
        break;
      }

  std::vector<Tensor> work = params;
  double max_rel = 0.0;
  for (size_t ti = 0; ti < work.size(); ++ti) {
    for (int e : picked[ti]) {
      double orig = work[ti][e];
      work[ti][e] = orig + opt.step;
      double fp = eval_loss(build, work);
      work[ti][e] = orig - opt.step;
      double fm = eval_loss(build, work);
      work[ti][e] = orig;
      double fd = (fp - fm) / (2.0 * opt.step);
      double an = analytic[ti][e];
      if (!std::isfinite(fd) || !std::isfinite(an))
        throw std::runtime_error("non-finite value in gradient check");
      double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-12});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace symx
