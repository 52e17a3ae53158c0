#include "cflow/numerics/tape.hpp"

#include <Eigen/Core>
#include <cmath>

#include "cflow/errors.hpp"

namespace cflow {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap view(const Tensor& t) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
MatMap view(Tensor& t) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractViolation(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                            shape_to_string(b.shape()));
}

enum class Bcast { kScalar, kRow, kCol };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (b.rows() == 1 && b.cols() == 1) return Bcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bcast::kCol;
  throw ContractViolation(std::string(op) + ": cannot broadcast " + shape_to_string(b.shape()) + " to " +
                          shape_to_string(a.shape()));
}

double bvalue(const Tensor& b, Bcast k, std::size_t r, std::size_t c) {
  switch (k) {
    case Bcast::kScalar:
      return b[0];
    case Bcast::kRow:
      return b[c];
    case Bcast::kCol:
      return b[r];
  }
  return 0.0;
}

std::size_t bindex(Bcast k, std::size_t r, std::size_t c) {
  switch (k) {
    case Bcast::kScalar:
      return 0;
    case Bcast::kRow:
      return c;
    case Bcast::kCol:
      return r;
  }
  return 0;
}

template <typename F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

Tensor as_matrix(Tensor t) {
  if (t.rank() == 2) return t;
  if (t.rank() == 1) return t.reshaped({1, t.size()});
  throw ContractViolation("tape values must be rank 1 or 2, got " + shape_to_string(t.shape()));
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kConstant: return "constant";
    case Op::kParam: return "param";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kAddBroadcast: return "add_broadcast";
    case Op::kMulBroadcast: return "mul_broadcast";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kMatmul: return "matmul";
    case Op::kAffine: return "affine";
    case Op::kTanh: return "tanh";
    case Op::kRelu: return "relu";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kSquare: return "square";
    case Op::kSumCols: return "sum_cols";
    case Op::kSumAll: return "sum_all";
    case Op::kMeanRows: return "mean_rows";
    case Op::kMeanAll: return "mean_all";
    case Op::kGather: return "gather";
    case Op::kScatter: return "scatter";
    case Op::kConcat: return "concat";
  }
  return "unknown";
}

std::string Tape::current_scope() const {
  std::string s;
  for (const auto& label : scopes_) {
    if (!s.empty()) s += " / ";
    s += label;
  }
  return s.empty() ? "<top level>" : s;
}

Var Tape::push(Op op, Tensor value, std::initializer_list<std::size_t> inputs) {
  if (!value.all_finite())
    throw NumericError(std::string("non-finite output of ") + op_name(op) + " in " + current_scope());
  Node node;
  node.op = op;
  node.value = std::move(value);
  std::size_t k = 0;
  for (auto id : inputs) {
    node.in[k++] = id;
    node.needs_grad = node.needs_grad || nodes_[id].needs_grad;
  }
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Tensor value) { return push(Op::kConstant, as_matrix(std::move(value)), {}); }

Var Tape::variable(Tensor value) {
  Var v = push(Op::kConstant, as_matrix(std::move(value)), {});
  nodes_[v.id].needs_grad = true;
  return v;
}

Var Tape::param(ParameterSet& params, ParamId id) {
  Var v = push(Op::kParam, as_matrix(params[id].value), {});
  auto& node = nodes_[v.id];
  node.needs_grad = true;
  node.params = &params;
  node.param = id;
  return v;
}

Var Tape::add(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require_same_shape(x, y, "add");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  return push(Op::kAdd, std::move(out), {a.id, b.id});
}

Var Tape::sub(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require_same_shape(x, y, "sub");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i];
  return push(Op::kSub, std::move(out), {a.id, b.id});
}

Var Tape::mul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  require_same_shape(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  return push(Op::kMul, std::move(out), {a.id, b.id});
}

Var Tape::add_broadcast(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  const Bcast k = broadcast_kind(x, y, "add_broadcast");
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) += bvalue(y, k, r, c);
  return push(Op::kAddBroadcast, std::move(out), {a.id, b.id});
}

Var Tape::mul_broadcast(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  const Bcast k = broadcast_kind(x, y, "mul_broadcast");
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out.at(r, c) *= bvalue(y, k, r, c);
  return push(Op::kMulBroadcast, std::move(out), {a.id, b.id});
}

Var Tape::scale(Var a, double c) {
  Var v = push(Op::kScale, map_unary(value(a), [c](double x) { return c * x; }), {a.id});
  nodes_[v.id].scalar = c;
  return v;
}

Var Tape::add_scalar(Var a, double c) {
  Var v = push(Op::kAddScalar, map_unary(value(a), [c](double x) { return x + c; }), {a.id});
  nodes_[v.id].scalar = c;
  return v;
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& w = value(b);
  if (x.cols() != w.rows())
    throw ContractViolation("matmul: inner extents differ " + shape_to_string(x.shape()) + " * " +
                            shape_to_string(w.shape()));
  Tensor out = Tensor::matrix(x.rows(), w.cols());
  view(out).noalias() = view(x) * view(w);
  return push(Op::kMatmul, std::move(out), {a.id, b.id});
}

Var Tape::affine(Var x, Var w, Var b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.cols() != wv.rows())
    throw ContractViolation("affine: input arity " + std::to_string(xv.cols()) + " does not match weight " +
                            shape_to_string(wv.shape()));
  if (bv.rows() != 1 || bv.cols() != wv.cols()) throw ContractViolation("affine: bias must be 1x" + std::to_string(wv.cols()));
  Tensor out = Tensor::matrix(xv.rows(), wv.cols());
  auto o = view(out);
  o.noalias() = view(xv) * view(wv);
  o.rowwise() += view(bv).row(0);
  return push(Op::kAffine, std::move(out), {x.id, w.id, b.id});
}

Var Tape::tanh(Var a) { return push(Op::kTanh, map_unary(value(a), [](double x) { return std::tanh(x); }), {a.id}); }
Var Tape::relu(Var a) { return push(Op::kRelu, map_unary(value(a), [](double x) { return x > 0 ? x : 0.0; }), {a.id}); }
Var Tape::exp(Var a) { return push(Op::kExp, map_unary(value(a), [](double x) { return std::exp(x); }), {a.id}); }
Var Tape::log(Var a) { return push(Op::kLog, map_unary(value(a), [](double x) { return std::log(x); }), {a.id}); }
Var Tape::square(Var a) { return push(Op::kSquare, map_unary(value(a), [](double x) { return x * x; }), {a.id}); }

Var Tape::sum_cols(Var a) {
  const Tensor& x = value(a);
  Tensor out = Tensor::matrix(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double s = 0.0;
    for (double v : x.row(r)) s += v;
    out[r] = s;
  }
  return push(Op::kSumCols, std::move(out), {a.id});
}

Var Tape::sum_all(Var a) {
  double s = 0.0;
  for (double v : value(a).data()) s += v;
  return push(Op::kSumAll, Tensor::scalar(s), {a.id});
}

Var Tape::mean_rows(Var a) {
  const Tensor& x = value(a);
  Tensor out = Tensor::matrix(1, x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) out[c] += x.at(r, c);
  for (std::size_t c = 0; c < x.cols(); ++c) out[c] /= static_cast<double>(x.rows());
  return push(Op::kMeanRows, std::move(out), {a.id});
}

Var Tape::mean_all(Var a) {
  const Tensor& x = value(a);
  double s = 0.0;
  for (double v : x.data()) s += v;
  return push(Op::kMeanAll, Tensor::scalar(s / static_cast<double>(x.size())), {a.id});
}

Var Tape::gather(Var a, std::shared_ptr<const std::vector<std::size_t>> cols) {
  const Tensor& x = value(a);
  if (cols->empty()) throw ContractViolation("gather: empty column set");
  Tensor out = Tensor::matrix(x.rows(), cols->size());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto src = x.row(r);
    auto dst = out.row(r);
    for (std::size_t j = 0; j < cols->size(); ++j) {
      if ((*cols)[j] >= x.cols()) throw ContractViolation("gather: column index out of range");
      dst[j] = src[(*cols)[j]];
    }
  }
  Var v = push(Op::kGather, std::move(out), {a.id});
  nodes_[v.id].index = std::move(cols);
  return v;
}

Var Tape::scatter(Var base, std::shared_ptr<const std::vector<std::size_t>> cols, Var values) {
  const Tensor& b = value(base);
  const Tensor& x = value(values);
  if (x.rows() != b.rows() || x.cols() != cols->size()) throw ContractViolation("scatter: values shape mismatch");
  Tensor out = b;
  for (std::size_t r = 0; r < b.rows(); ++r) {
    auto src = x.row(r);
    auto dst = out.row(r);
    for (std::size_t j = 0; j < cols->size(); ++j) {
      if ((*cols)[j] >= b.cols()) throw ContractViolation("scatter: column index out of range");
      dst[(*cols)[j]] = src[j];
    }
  }
  Var v = push(Op::kScatter, std::move(out), {base.id, values.id});
  nodes_[v.id].index = std::move(cols);
  return v;
}

Var Tape::concat(Var a, Var b) {
  const Tensor& x = value(a);
  const Tensor& y = value(b);
  if (x.rows() != y.rows()) throw ContractViolation("concat: row counts differ");
  Tensor out = Tensor::matrix(x.rows(), x.cols() + y.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto dst = out.row(r);
    std::copy(x.row(r).begin(), x.row(r).end(), dst.begin());
    std::copy(y.row(r).begin(), y.row(r).end(), dst.begin() + static_cast<std::ptrdiff_t>(x.cols()));
  }
  return push(Op::kConcat, std::move(out), {a.id, b.id});
}

Tensor& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var out) {
  const Tensor& v = value(out);
  if (v.size() != 1)
    throw ContractViolation("backward: output must be scalar, got shape " + shape_to_string(v.shape()));
  for (std::size_t i = 0; i <= out.id; ++i) nodes_[i].grad = Tensor();
  grad_slot(out.id)[0] = 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    if (!nodes_[i].needs_grad || nodes_[i].grad.empty()) continue;
    backprop_node(i);
  }
}

void Tape::backprop_node(std::size_t id) {
  // Copy the input ids; grad_slot() may not reallocate nodes_, but keep the
  // node reference scoped to reads.
  const Node& n = nodes_[id];
  const Tensor& g = n.grad;
  const std::size_t a = n.in[0];
  const std::size_t b = n.in[1];
  auto wants = [this](std::size_t i) { return nodes_[i].needs_grad; };

  switch (n.op) {
    case Op::kConstant:
      break;
    case Op::kParam: {
      Tensor& pg = (*n.params)[n.param].grad;
      if (pg.empty()) pg = Tensor((*n.params)[n.param].value.shape(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      break;
    }
    case Op::kAdd:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(b)) {
        Tensor& gb = grad_slot(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
      break;
    case Op::kSub:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(b)) {
        Tensor& gb = grad_slot(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
      break;
    case Op::kMul:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        const Tensor& y = nodes_[b].value;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
      }
      if (wants(b)) {
        Tensor& gb = grad_slot(b);
        const Tensor& x = nodes_[a].value;
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
      }
      break;
    case Op::kAddBroadcast: {
      const Tensor& x = nodes_[a].value;
      const Bcast k = broadcast_kind(x, nodes_[b].value, "add_broadcast");
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(b)) {
        Tensor& gb = grad_slot(b);
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < x.cols(); ++c) gb[bindex(k, r, c)] += g.at(r, c);
      }
      break;
    }
    case Op::kMulBroadcast: {
      const Tensor& x = nodes_[a].value;
      const Tensor& y = nodes_[b].value;
      const Bcast k = broadcast_kind(x, y, "mul_broadcast");
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < x.cols(); ++c) ga.at(r, c) += g.at(r, c) * bvalue(y, k, r, c);
      }
      if (wants(b)) {
        Tensor& gb = grad_slot(b);
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < x.cols(); ++c) gb[bindex(k, r, c)] += g.at(r, c) * x.at(r, c);
      }
      break;
    }
    case Op::kScale:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.scalar * g[i];
      }
      break;
    case Op::kAddScalar:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      break;
    case Op::kMatmul:
    case Op::kAffine: {
      const Tensor& x = nodes_[a].value;
      const Tensor& w = nodes_[b].value;
      if (wants(a)) view(grad_slot(a)).noalias() += view(g) * view(w).transpose();
      if (wants(b)) view(grad_slot(b)).noalias() += view(x).transpose() * view(g);
      if (n.op == Op::kAffine && wants(n.in[2])) {
        Tensor& gb = grad_slot(n.in[2]);
        view(gb).row(0) += view(g).colwise().sum();
      }
      break;
    }
    case Op::kTanh:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      }
      break;
    case Op::kRelu:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        const Tensor& x = nodes_[a].value;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += x[i] > 0 ? g[i] : 0.0;
      }
      break;
    case Op::kExp:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i];
      }
      break;
    case Op::kLog:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        const Tensor& x = nodes_[a].value;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
      }
      break;
    case Op::kSquare:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        const Tensor& x = nodes_[a].value;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * x[i] * g[i];
      }
      break;
    case Op::kSumCols:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t r = 0; r < ga.rows(); ++r)
          for (auto& v : ga.row(r)) v += g[r];
      }
      break;
    case Op::kSumAll:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
      }
      break;
    case Op::kMeanRows:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        const double inv = 1.0 / static_cast<double>(ga.rows());
        for (std::size_t r = 0; r < ga.rows(); ++r)
          for (std::size_t c = 0; c < ga.cols(); ++c) ga.at(r, c) += g[c] * inv;
      }
      break;
    case Op::kMeanAll:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        const double share = g[0] / static_cast<double>(ga.size());
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += share;
      }
      break;
    case Op::kGather:
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        const auto& cols = *n.index;
        for (std::size_t r = 0; r < g.rows(); ++r) {
          auto src = g.row(r);
          auto dst = ga.row(r);
          for (std::size_t j = 0; j < cols.size(); ++j) dst[cols[j]] += src[j];
        }
      }
      break;
    case Op::kScatter: {
      const auto& cols = *n.index;
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        std::vector<char> replaced(g.cols(), 0);
        for (auto c : cols) replaced[c] = 1;
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c)
            if (!replaced[c]) ga.at(r, c) += g.at(r, c);
      }
      if (wants(b)) {
        Tensor& gb = grad_slot(b);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t j = 0; j < cols.size(); ++j) gb.at(r, j) += g.at(r, cols[j]);
      }
      break;
    }
    case Op::kConcat: {
      const std::size_t left = nodes_[a].value.cols();
      if (wants(a)) {
        Tensor& ga = grad_slot(a);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < left; ++c) ga.at(r, c) += g.at(r, c);
      }
      if (wants(b)) {
        Tensor& gb = grad_slot(b);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < gb.cols(); ++c) gb.at(r, c) += g.at(r, left + c);
      }
      break;
    }
  }
}

}  // namespace cflow
