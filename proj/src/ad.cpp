#include "trajcast/ad.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace trajcast::ad {

namespace {

double softplus_scalar(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid_scalar(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// 2x2 lower-triangular Gaussian workspace shared by the fused mixture ops.
struct GaussTerm {
  double y0, y1;  // y = L^-1 (x - mu)
  double z0, z1;  // z = Sigma^-1 (x - mu) = L^-T y
  double logpdf;
};

inline GaussTerm gauss_eval(double x0, double x1, double mu0, double mu1, double a, double b,
                            double c) {
  GaussTerm t;
  const double d0 = x0 - mu0;
  const double d1 = x1 - mu1;
  t.y0 = d0 / a;
  t.y1 = (d1 - b * t.y0) / c;
  t.z1 = t.y1 / c;
  t.z0 = t.y0 / a - b * t.y1 / (a * c);
  t.logpdf = -kLog2Pi - std::log(a) - std::log(c) - 0.5 * (t.y0 * t.y0 + t.y1 * t.y1);
  return t;
}

// d logpdf / d(a,b,c) given the workspace.
inline void gauss_factor_grad(const GaussTerm& t, double a, double c, double& da, double& db,
                              double& dc) {
  da = t.z0 * t.y0 - 1.0 / a;
  db = t.z1 * t.y0;
  dc = t.z1 * t.y1 - 1.0 / c;
}

Eigen::VectorXd log_softmax_row(const Matrix& logits, int row) {
  Eigen::VectorXd v = logits.row(row).transpose();
  const double mx = v.maxCoeff();
  const double lse = mx + std::log((v.array() - mx).exp().sum());
  return v.array() - lse;
}

enum class Bc { Same, Scalar, Row, Col };

Bc classify(const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bc::Same;
  if (b.rows() == 1 && b.cols() == 1) return Bc::Scalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Bc::Row;
  if (b.cols() == 1 && b.rows() == a.rows()) return Bc::Col;
  fail(ErrorCode::ShapeMismatch, "broadcast: incompatible shapes");
}

Matrix expand(const Matrix& b, Bc bc, Eigen::Index rows, Eigen::Index cols) {
  switch (bc) {
    case Bc::Same: return b;
    case Bc::Scalar: return Matrix::Constant(rows, cols, b(0, 0));
    case Bc::Row: return b.replicate(rows, 1);
    case Bc::Col: return b.replicate(1, cols);
  }
  return b;
}

Matrix reduce(const Matrix& g, Bc bc) {
  switch (bc) {
    case Bc::Same: return g;
    case Bc::Scalar: {
      Matrix r(1, 1);
      r(0, 0) = g.sum();
      return r;
    }
    case Bc::Row: return g.colwise().sum();
    case Bc::Col: return g.rowwise().sum();
  }
  return g;
}

Var binary_op(Var a, Var b, const char* name,
              Matrix (*fwd)(const Matrix&, const Matrix&),
              void (*bwd)(Tape&, int, int, int, Bc)) {
  TRAJCAST_CHECK(a.tape == b.tape, ErrorCode::InvalidArgument, "vars from different tapes");
  Tape& t = *a.tape;
  const Matrix& av = t.val(a);
  const Matrix& bv = t.val(b);
  const Bc bc = classify(av, bv);
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  Matrix out = fwd(av, expand(bv, bc, av.rows(), av.cols()));
  const int aid = a.id, bid = b.id;
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([=](Tape& tp, int self) {
                    bwd(tp, self, aid, bid, bc);
                  })
                     : nullptr);
  (void)name;
  return {a.tape, id};
}

Var unary_op(Var a, double (*f)(double), double (*df_from_out_in)(double, double)) {
  Tape& t = *a.tape;
  Matrix out = t.val(a).unaryExpr([&](double x) { return f(x); });
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([aid, df_from_out_in](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;
                    const Matrix& out = tp.node(self).val;
                    const Matrix& in = tp.node(aid).val;
                    Matrix& ga = tp.grad_buf(aid);
                    for (Eigen::Index j = 0; j < g.cols(); ++j)
                      for (Eigen::Index i = 0; i < g.rows(); ++i)
                        ga(i, j) += g(i, j) * df_from_out_in(out(i, j), in(i, j));
                  })
                     : nullptr);
  return {a.tape, id};
}

}  // namespace

// ---------------------------------------------------------------------------
// ParamStore

int ParamStore::add(const std::string& name, Matrix init, bool decay) {
  TRAJCAST_CHECK(!index_.count(name), ErrorCode::InvalidArgument,
                 "duplicate parameter name: " + name);
  Entry e;
  e.name = name;
  e.grad = Matrix::Zero(init.rows(), init.cols());
  e.m = Matrix::Zero(init.rows(), init.cols());
  e.v = Matrix::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  e.decay = decay;
  entries_.push_back(std::move(e));
  index_[name] = static_cast<int>(entries_.size()) - 1;
  return static_cast<int>(entries_.size()) - 1;
}

int ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  TRAJCAST_CHECK(it != index_.end(), ErrorCode::InvalidArgument, "unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.setZero();
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

// ---------------------------------------------------------------------------
// Tape

int Tape::push(Matrix value, bool needs_grad, std::function<void(Tape&, int)> back) {
  Node n;
  n.val = std::move(value);
  n.needs_grad = needs_grad;
  n.back = needs_grad ? std::move(back) : nullptr;
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Matrix& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
  return n.grad;
}

Var Tape::constant(Matrix v) { return {this, push(std::move(v), false, nullptr)}; }

Var Tape::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Tape::param(ParamStore& store, int idx) {
  TRAJCAST_CHECK(store_ == nullptr || store_ == &store, ErrorCode::InvalidArgument,
                 "tape already bound to a different ParamStore");
  store_ = &store;
  int id = push(store.entry(idx).value, true, nullptr);
  nodes_[id].store_idx = idx;
  return {this, id};
}

Var Tape::param(ParamStore& store, const std::string& name) {
  return param(store, store.index_of(name));
}

void Tape::backward(Var loss) {
  TRAJCAST_CHECK(loss.tape == this, ErrorCode::InvalidArgument, "loss from another tape");
  const Node& ln = nodes_[loss.id];
  TRAJCAST_CHECK(ln.val.rows() == 1 && ln.val.cols() == 1, ErrorCode::ShapeMismatch,
                 "backward expects a scalar loss");
  if (!ln.needs_grad) return;
  grad_buf(loss.id).setConstant(1.0);
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.size() != 0 && n.back) n.back(*this, id);
  }
}

void Tape::accumulate_param_grads(double scale) {
  if (!store_) return;
  for (auto& n : nodes_) {
    if (n.store_idx >= 0 && n.grad.size() != 0)
      store_->entry(n.store_idx).grad.noalias() += scale * n.grad;
  }
}

void Tape::collect_param_grads(std::vector<Matrix>& grads, double scale) const {
  if (!store_) return;
  if (grads.size() != store_->size()) {
    grads.resize(store_->size());
    for (std::size_t i = 0; i < grads.size(); ++i) {
      const auto& e = store_->entry(static_cast<int>(i));
      grads[i] = Matrix::Zero(e.value.rows(), e.value.cols());
    }
  }
  for (const auto& n : nodes_) {
    if (n.store_idx >= 0 && n.grad.size() != 0)
      grads[n.store_idx].noalias() += scale * n.grad;
  }
}

// ---------------------------------------------------------------------------
// Elementwise / broadcast ops

Var add(Var a, Var b) {
  return binary_op(
      a, b, "add", [](const Matrix& x, const Matrix& y) -> Matrix { return x + y; },
      [](Tape& tp, int self, int aid, int bid, Bc bc) {
        const Matrix& g = tp.node(self).grad;
        if (tp.node(aid).needs_grad) tp.grad_buf(aid) += g;
        if (tp.node(bid).needs_grad) tp.grad_buf(bid) += reduce(g, bc);
      });
}

Var sub(Var a, Var b) {
  return binary_op(
      a, b, "sub", [](const Matrix& x, const Matrix& y) -> Matrix { return x - y; },
      [](Tape& tp, int self, int aid, int bid, Bc bc) {
        const Matrix& g = tp.node(self).grad;
        if (tp.node(aid).needs_grad) tp.grad_buf(aid) += g;
        if (tp.node(bid).needs_grad) tp.grad_buf(bid) -= reduce(g, bc);
      });
}

Var mul(Var a, Var b) {
  return binary_op(
      a, b, "mul",
      [](const Matrix& x, const Matrix& y) -> Matrix { return x.cwiseProduct(y); },
      [](Tape& tp, int self, int aid, int bid, Bc bc) {
        const Matrix& g = tp.node(self).grad;
        const Matrix& av = tp.node(aid).val;
        const Matrix& bv = tp.node(bid).val;
        const Matrix be = expand(bv, bc, av.rows(), av.cols());
        if (tp.node(aid).needs_grad) tp.grad_buf(aid) += g.cwiseProduct(be);
        if (tp.node(bid).needs_grad) tp.grad_buf(bid) += reduce(g.cwiseProduct(av), bc);
      });
}

Var div(Var a, Var b) {
  return binary_op(
      a, b, "div",
      [](const Matrix& x, const Matrix& y) -> Matrix { return x.cwiseQuotient(y); },
      [](Tape& tp, int self, int aid, int bid, Bc bc) {
        const Matrix& g = tp.node(self).grad;
        const Matrix& av = tp.node(aid).val;
        const Matrix& bv = tp.node(bid).val;
        const Matrix be = expand(bv, bc, av.rows(), av.cols());
        if (tp.node(aid).needs_grad) tp.grad_buf(aid) += g.cwiseQuotient(be);
        if (tp.node(bid).needs_grad) {
          Matrix gb = -g.cwiseProduct(av).cwiseQuotient(be.cwiseProduct(be));
          tp.grad_buf(bid) += reduce(gb, bc);
        }
      });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push(t.val(a) * s, ng,
                  ng ? std::function<void(Tape&, int)>([aid, s](Tape& tp, int self) {
                    tp.grad_buf(aid) += s * tp.node(self).grad;
                  })
                     : nullptr);
  return {a.tape, id};
}

Var add_scalar(Var a, double s) {
  Tape& t = *a.tape;
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push((t.val(a).array() + s).matrix(), ng,
                  ng ? std::function<void(Tape&, int)>([aid](Tape& tp, int self) {
                    tp.grad_buf(aid) += tp.node(self).grad;
                  })
                     : nullptr);
  return {a.tape, id};
}

Var matmul(Var a, Var b) {
  TRAJCAST_CHECK(a.tape == b.tape, ErrorCode::InvalidArgument, "vars from different tapes");
  Tape& t = *a.tape;
  const Matrix& av = t.val(a);
  const Matrix& bv = t.val(b);
  TRAJCAST_CHECK(av.cols() == bv.rows(), ErrorCode::ShapeMismatch, "matmul: inner dims differ");
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  const int aid = a.id, bid = b.id;
  int id = t.push(av * bv, ng,
                  ng ? std::function<void(Tape&, int)>([aid, bid](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;
                    const Matrix& av = tp.node(aid).val;
                    const Matrix& bv = tp.node(bid).val;
                    if (tp.node(aid).needs_grad) tp.grad_buf(aid).noalias() += g * bv.transpose();
                    if (tp.node(bid).needs_grad) tp.grad_buf(bid).noalias() += av.transpose() * g;
                  })
                     : nullptr);
  return {a.tape, id};
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push(t.val(a).transpose(), ng,
                  ng ? std::function<void(Tape&, int)>([aid](Tape& tp, int self) {
                    tp.grad_buf(aid) += tp.node(self).grad.transpose();
                  })
                     : nullptr);
  return {a.tape, id};
}

Var tanh_(Var a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double out, double) { return 1.0 - out * out; });
}

Var sigmoid(Var a) {
  return unary_op(a, sigmoid_scalar, [](double out, double) { return out * (1.0 - out); });
}

Var exp_(Var a) {
  return unary_op(a, [](double x) { return std::exp(x); }, [](double out, double) { return out; });
}

Var log_(Var a) {
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double, double in) { return 1.0 / in; });
}

Var softplus(Var a) {
  return unary_op(a, softplus_scalar, [](double, double in) { return sigmoid_scalar(in); });
}

Var silu(Var a) {
  return unary_op(a, [](double x) { return x * sigmoid_scalar(x); },
                  [](double, double in) {
                    const double s = sigmoid_scalar(in);
                    return s * (1.0 + in * (1.0 - s));
                  });
}

Var sqrt_(Var a) {
  return unary_op(a, [](double x) { return std::sqrt(x); },
                  [](double out, double) { return 0.5 / out; });
}

Var square(Var a) {
  return unary_op(a, [](double x) { return x * x; }, [](double, double in) { return 2.0 * in; });
}

Var relu(Var a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double, double in) { return in > 0.0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions & shape ops

Var sum(Var a) {
  Tape& t = *a.tape;
  Matrix out(1, 1);
  out(0, 0) = t.val(a).sum();
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([aid](Tape& tp, int self) {
                    tp.grad_buf(aid).array() += tp.node(self).grad(0, 0);
                  })
                     : nullptr);
  return {a.tape, id};
}

Var mean(Var a) {
  const double n = static_cast<double>(a.tape->val(a).size());
  return scale(sum(a), 1.0 / n);
}

Var row_sum(Var a) {
  Tape& t = *a.tape;
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push(t.val(a).rowwise().sum(), ng,
                  ng ? std::function<void(Tape&, int)>([aid](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;  // Rx1
                    Matrix& ga = tp.grad_buf(aid);
                    ga += g.replicate(1, ga.cols());
                  })
                     : nullptr);
  return {a.tape, id};
}

Var col_sum(Var a) {
  Tape& t = *a.tape;
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push(t.val(a).colwise().sum(), ng,
                  ng ? std::function<void(Tape&, int)>([aid](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;  // 1xC
                    Matrix& ga = tp.grad_buf(aid);
                    ga += g.replicate(ga.rows(), 1);
                  })
                     : nullptr);
  return {a.tape, id};
}

Var max_rows(Var a) {
  Tape& t = *a.tape;
  const Matrix& av = t.val(a);
  Matrix out(av.rows(), 1);
  auto argmax = std::make_shared<std::vector<Eigen::Index>>(av.rows());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    Eigen::Index j;
    out(i, 0) = av.row(i).maxCoeff(&j);
    (*argmax)[i] = j;
  }
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([aid, argmax](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;
                    Matrix& ga = tp.grad_buf(aid);
                    for (Eigen::Index i = 0; i < g.rows(); ++i)
                      ga(i, (*argmax)[i]) += g(i, 0);
                  })
                     : nullptr);
  return {a.tape, id};
}

Var concat_cols(Var a, Var b) {
  TRAJCAST_CHECK(a.tape == b.tape, ErrorCode::InvalidArgument, "vars from different tapes");
  Tape& t = *a.tape;
  const Matrix& av = t.val(a);
  const Matrix& bv = t.val(b);
  TRAJCAST_CHECK(av.rows() == bv.rows(), ErrorCode::ShapeMismatch, "concat_cols: row mismatch");
  Matrix out(av.rows(), av.cols() + bv.cols());
  out << av, bv;
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  const int aid = a.id, bid = b.id;
  const Eigen::Index ac = av.cols(), bc = bv.cols();
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([=](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;
                    if (tp.node(aid).needs_grad) tp.grad_buf(aid) += g.leftCols(ac);
                    if (tp.node(bid).needs_grad) tp.grad_buf(bid) += g.rightCols(bc);
                  })
                     : nullptr);
  return {a.tape, id};
}

Var concat_rows(Var a, Var b) {
  TRAJCAST_CHECK(a.tape == b.tape, ErrorCode::InvalidArgument, "vars from different tapes");
  Tape& t = *a.tape;
  const Matrix& av = t.val(a);
  const Matrix& bv = t.val(b);
  TRAJCAST_CHECK(av.cols() == bv.cols(), ErrorCode::ShapeMismatch, "concat_rows: col mismatch");
  Matrix out(av.rows() + bv.rows(), av.cols());
  out << av, bv;
  const bool ng = t.needs_grad(a) || t.needs_grad(b);
  const int aid = a.id, bid = b.id;
  const Eigen::Index ar = av.rows(), br = bv.rows();
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([=](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;
                    if (tp.node(aid).needs_grad) tp.grad_buf(aid) += g.topRows(ar);
                    if (tp.node(bid).needs_grad) tp.grad_buf(bid) += g.bottomRows(br);
                  })
                     : nullptr);
  return {a.tape, id};
}

Var slice_rows(Var a, int r0, int n) {
  Tape& t = *a.tape;
  const Matrix& av = t.val(a);
  TRAJCAST_CHECK(r0 >= 0 && r0 + n <= av.rows(), ErrorCode::IndexOutOfRange, "slice_rows range");
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push(av.middleRows(r0, n), ng,
                  ng ? std::function<void(Tape&, int)>([aid, r0, n](Tape& tp, int self) {
                    tp.grad_buf(aid).middleRows(r0, n) += tp.node(self).grad;
                  })
                     : nullptr);
  return {a.tape, id};
}

Var slice_cols(Var a, int c0, int n) {
  Tape& t = *a.tape;
  const Matrix& av = t.val(a);
  TRAJCAST_CHECK(c0 >= 0 && c0 + n <= av.cols(), ErrorCode::IndexOutOfRange, "slice_cols range");
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push(av.middleCols(c0, n), ng,
                  ng ? std::function<void(Tape&, int)>([aid, c0, n](Tape& tp, int self) {
                    tp.grad_buf(aid).middleCols(c0, n) += tp.node(self).grad;
                  })
                     : nullptr);
  return {a.tape, id};
}

Var reshape_rm(Var a, int rows, int cols) {
  Tape& t = *a.tape;
  const Matrix& av = t.val(a);
  TRAJCAST_CHECK(av.size() == static_cast<Eigen::Index>(rows) * cols, ErrorCode::ShapeMismatch,
                 "reshape_rm: element count mismatch");
  const Eigen::Index ic = av.cols();
  Matrix out(rows, cols);
  for (Eigen::Index k = 0; k < av.size(); ++k)
    out(k / cols, k % cols) = av(k / ic, k % ic);
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([aid, cols, ic](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;
                    Matrix& ga = tp.grad_buf(aid);
                    for (Eigen::Index k = 0; k < g.size(); ++k)
                      ga(k / ic, k % ic) += g(k / cols, k % cols);
                  })
                     : nullptr);
  return {a.tape, id};
}

Var stop_grad(Var a) {
  Tape& t = *a.tape;
  return {a.tape, t.push(t.val(a), false, nullptr)};
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Matrix& av = t.val(a);
  Matrix out(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    const double mx = av.row(i).maxCoeff();
    Eigen::ArrayXd e = (av.row(i).array() - mx).exp();
    out.row(i) = (e / e.sum()).matrix();
  }
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([aid](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;
                    const Matrix& p = tp.node(self).val;
                    Matrix& ga = tp.grad_buf(aid);
                    for (Eigen::Index i = 0; i < g.rows(); ++i) {
                      const double dot = g.row(i).dot(p.row(i));
                      ga.row(i) += (p.row(i).array() * (g.row(i).array() - dot)).matrix();
                    }
                  })
                     : nullptr);
  return {a.tape, id};
}

Var logsumexp_rows(Var a) {
  Tape& t = *a.tape;
  const Matrix& av = t.val(a);
  Matrix out(av.rows(), 1);
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    const double mx = av.row(i).maxCoeff();
    out(i, 0) = mx + std::log((av.row(i).array() - mx).exp().sum());
  }
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([aid](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;          // Rx1
                    const Matrix& lse = tp.node(self).val;         // Rx1
                    const Matrix& in = tp.node(aid).val;
                    Matrix& ga = tp.grad_buf(aid);
                    for (Eigen::Index i = 0; i < g.rows(); ++i)
                      ga.row(i) += (g(i, 0) * (in.row(i).array() - lse(i, 0)).exp()).matrix();
                  })
                     : nullptr);
  return {a.tape, id};
}

Var gather_flat(Var a, const Eigen::MatrixXi& idx) {
  Tape& t = *a.tape;
  const Matrix& av = t.val(a);
  const Eigen::Index ic = av.cols();
  Matrix out(idx.rows(), idx.cols());
  for (Eigen::Index j = 0; j < idx.cols(); ++j)
    for (Eigen::Index i = 0; i < idx.rows(); ++i) {
      const int k = idx(i, j);
      out(i, j) = k < 0 ? 0.0 : av(k / ic, k % ic);
    }
  const bool ng = t.needs_grad(a);
  const int aid = a.id;
  auto sidx = std::make_shared<Eigen::MatrixXi>(idx);
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([aid, sidx, ic](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;
                    Matrix& ga = tp.grad_buf(aid);
                    const Eigen::MatrixXi& ix = *sidx;
                    for (Eigen::Index j = 0; j < ix.cols(); ++j)
                      for (Eigen::Index i = 0; i < ix.rows(); ++i) {
                        const int k = ix(i, j);
                        if (k >= 0) ga(k / ic, k % ic) += g(i, j);
                      }
                  })
                     : nullptr);
  return {a.tape, id};
}

// ---------------------------------------------------------------------------
// Fused Gaussian-mixture ops

Var factor_activation(Var raw, double diag_floor) {
  Tape& t = *raw.tape;
  const Matrix& rv = t.val(raw);
  TRAJCAST_CHECK(rv.cols() == 3, ErrorCode::ShapeMismatch, "factor_activation expects Nx3");
  Matrix out(rv.rows(), 3);
  for (Eigen::Index i = 0; i < rv.rows(); ++i) {
    out(i, 0) = softplus_scalar(rv(i, 0)) + diag_floor;
    out(i, 1) = rv(i, 1);
    out(i, 2) = softplus_scalar(rv(i, 2)) + diag_floor;
  }
  const bool ng = t.needs_grad(raw);
  const int aid = raw.id;
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([aid](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;
                    const Matrix& in = tp.node(aid).val;
                    Matrix& ga = tp.grad_buf(aid);
                    for (Eigen::Index i = 0; i < g.rows(); ++i) {
                      ga(i, 0) += g(i, 0) * sigmoid_scalar(in(i, 0));
                      ga(i, 1) += g(i, 1);
                      ga(i, 2) += g(i, 2) * sigmoid_scalar(in(i, 2));
                    }
                  })
                     : nullptr);
  return {raw.tape, id};
}

Var step_nll_vec(Var means, Var factors, Var logits, const Matrix& gt) {
  Tape& t = *means.tape;
  const Matrix& mv = t.val(means);
  const Matrix& fv = t.val(factors);
  const Matrix& wv = t.val(logits);
  const int T = static_cast<int>(wv.rows());
  const int M = static_cast<int>(wv.cols());
  TRAJCAST_CHECK(mv.rows() == T * M && mv.cols() == 2, ErrorCode::ShapeMismatch,
                 "step_nll_vec: means shape");
  TRAJCAST_CHECK(fv.rows() == T * M && fv.cols() == 3, ErrorCode::ShapeMismatch,
                 "step_nll_vec: factors shape");
  TRAJCAST_CHECK(gt.rows() == T && gt.cols() == 2, ErrorCode::ShapeMismatch,
                 "step_nll_vec: gt shape");

  Matrix out(T, 1);
  for (int tf = 0; tf < T; ++tf) {
    Eigen::VectorXd la = log_softmax_row(wv, tf);
    Eigen::VectorXd s(M);
    for (int m = 0; m < M; ++m) {
      const int r = tf * M + m;
      const GaussTerm g =
          gauss_eval(gt(tf, 0), gt(tf, 1), mv(r, 0), mv(r, 1), fv(r, 0), fv(r, 1), fv(r, 2));
      s(m) = la(m) + g.logpdf;
    }
    const double mx = s.maxCoeff();
    out(tf, 0) = -(mx + std::log((s.array() - mx).exp().sum()));
  }

  const bool ng = t.needs_grad(means) || t.needs_grad(factors) || t.needs_grad(logits);
  const int mid = means.id, fid = factors.id, wid = logits.id;
  auto gt_copy = std::make_shared<Matrix>(gt);
  int id = t.push(
      std::move(out), ng,
      ng ? std::function<void(Tape&, int)>([=](Tape& tp, int self) {
        const Matrix& g = tp.node(self).grad;
        const Matrix& mv = tp.node(mid).val;
        const Matrix& fv = tp.node(fid).val;
        const Matrix& wv = tp.node(wid).val;
        const Matrix& x = *gt_copy;
        const int T = static_cast<int>(wv.rows());
        const int M = static_cast<int>(wv.cols());
        const bool gm = tp.node(mid).needs_grad;
        const bool gf = tp.node(fid).needs_grad;
        const bool gw = tp.node(wid).needs_grad;
        for (int tf = 0; tf < T; ++tf) {
          const double gout = g(tf, 0);
          if (gout == 0.0) continue;
          Eigen::VectorXd la = log_softmax_row(wv, tf);
          Eigen::VectorXd s(M);
          std::vector<GaussTerm> terms(M);
          for (int m = 0; m < M; ++m) {
            const int r = tf * M + m;
            terms[m] =
                gauss_eval(x(tf, 0), x(tf, 1), mv(r, 0), mv(r, 1), fv(r, 0), fv(r, 1), fv(r, 2));
            s(m) = la(m) + terms[m].logpdf;
          }
          const double mx = s.maxCoeff();
          Eigen::ArrayXd resp = (s.array() - mx).exp();
          resp /= resp.sum();
          for (int m = 0; m < M; ++m) {
            const int r = tf * M + m;
            const double w = -gout * resp(m);  // d nll / d s_m = -resp
            if (gm) {
              tp.grad_buf(mid)(r, 0) += w * terms[m].z0;
              tp.grad_buf(mid)(r, 1) += w * terms[m].z1;
            }
            if (gf) {
              double da, db, dc;
              gauss_factor_grad(terms[m], fv(r, 0), fv(r, 2), da, db, dc);
              tp.grad_buf(fid)(r, 0) += w * da;
              tp.grad_buf(fid)(r, 1) += w * db;
              tp.grad_buf(fid)(r, 2) += w * dc;
            }
            if (gw) tp.grad_buf(wid)(tf, m) += gout * (std::exp(la(m)) - resp(m));
          }
        }
      })
         : nullptr);
  return {means.tape, id};
}

Var anchor_nll(Var means, Var factors, Var anchor_logits, const Matrix& gt) {
  Tape& t = *means.tape;
  const Matrix& mv = t.val(means);
  const Matrix& fv = t.val(factors);
  const Matrix& wv = t.val(anchor_logits);
  const int M = static_cast<int>(wv.cols());
  TRAJCAST_CHECK(wv.rows() == 1, ErrorCode::ShapeMismatch, "anchor_nll: logits must be 1xM");
  const int T = static_cast<int>(gt.rows());
  TRAJCAST_CHECK(mv.rows() == T * M && mv.cols() == 2, ErrorCode::ShapeMismatch,
                 "anchor_nll: means shape");
  TRAJCAST_CHECK(fv.rows() == T * M && fv.cols() == 3, ErrorCode::ShapeMismatch,
                 "anchor_nll: factors shape");

  Eigen::VectorXd la = log_softmax_row(wv, 0);
  Eigen::VectorXd s(M);
  for (int m = 0; m < M; ++m) {
    double acc = la(m);
    for (int tf = 0; tf < T; ++tf) {
      const int r = tf * M + m;
      acc += gauss_eval(gt(tf, 0), gt(tf, 1), mv(r, 0), mv(r, 1), fv(r, 0), fv(r, 1), fv(r, 2))
                 .logpdf;
    }
    s(m) = acc;
  }
  const double mx = s.maxCoeff();
  Matrix out(1, 1);
  out(0, 0) = -(mx + std::log((s.array() - mx).exp().sum()));

  const bool ng = t.needs_grad(means) || t.needs_grad(factors) || t.needs_grad(anchor_logits);
  const int mid = means.id, fid = factors.id, wid = anchor_logits.id;
  auto gt_copy = std::make_shared<Matrix>(gt);
  int id = t.push(
      std::move(out), ng,
      ng ? std::function<void(Tape&, int)>([=](Tape& tp, int self) {
        const double gout = tp.node(self).grad(0, 0);
        if (gout == 0.0) return;
        const Matrix& mv = tp.node(mid).val;
        const Matrix& fv = tp.node(fid).val;
        const Matrix& wv = tp.node(wid).val;
        const Matrix& x = *gt_copy;
        const int M = static_cast<int>(wv.cols());
        const int T = static_cast<int>(x.rows());
        Eigen::VectorXd la = log_softmax_row(wv, 0);
        Eigen::VectorXd s(M);
        for (int m = 0; m < M; ++m) {
          double acc = la(m);
          for (int tf = 0; tf < T; ++tf) {
            const int r = tf * M + m;
            acc += gauss_eval(x(tf, 0), x(tf, 1), mv(r, 0), mv(r, 1), fv(r, 0), fv(r, 1), fv(r, 2))
                       .logpdf;
          }
          s(m) = acc;
        }
        const double mx = s.maxCoeff();
        Eigen::ArrayXd resp = (s.array() - mx).exp();
        resp /= resp.sum();
        const bool gm = tp.node(mid).needs_grad;
        const bool gf = tp.node(fid).needs_grad;
        const bool gw = tp.node(wid).needs_grad;
        for (int m = 0; m < M; ++m) {
          const double w = -gout * resp(m);
          for (int tf = 0; tf < T; ++tf) {
            const int r = tf * M + m;
            const GaussTerm term =
                gauss_eval(x(tf, 0), x(tf, 1), mv(r, 0), mv(r, 1), fv(r, 0), fv(r, 1), fv(r, 2));
            if (gm) {
              tp.grad_buf(mid)(r, 0) += w * term.z0;
              tp.grad_buf(mid)(r, 1) += w * term.z1;
            }
            if (gf) {
              double da, db, dc;
              gauss_factor_grad(term, fv(r, 0), fv(r, 2), da, db, dc);
              tp.grad_buf(fid)(r, 0) += w * da;
              tp.grad_buf(fid)(r, 1) += w * db;
              tp.grad_buf(fid)(r, 2) += w * dc;
            }
          }
          if (gw) tp.grad_buf(wid)(0, m) += gout * (std::exp(la(m)) - resp(m));
        }
      })
         : nullptr);
  return {means.tape, id};
}

Var mixture_logpdf_at(Var means, Var factors, Var logits, int tf, Var points) {
  Tape& t = *means.tape;
  const Matrix& mv = t.val(means);
  const Matrix& fv = t.val(factors);
  const Matrix& wv = t.val(logits);
  const Matrix& pv = t.val(points);
  const int M = static_cast<int>(wv.cols());
  TRAJCAST_CHECK(tf >= 0 && tf < wv.rows(), ErrorCode::IndexOutOfRange,
                 "mixture_logpdf_at: timestep out of range");
  TRAJCAST_CHECK(pv.cols() == 2, ErrorCode::ShapeMismatch, "mixture_logpdf_at: points nx2");
  const int n = static_cast<int>(pv.rows());

  Eigen::VectorXd la = log_softmax_row(wv, tf);
  Matrix out(n, 1);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd s(M);
    for (int m = 0; m < M; ++m) {
      const int r = tf * M + m;
      s(m) = la(m) + gauss_eval(pv(i, 0), pv(i, 1), mv(r, 0), mv(r, 1), fv(r, 0), fv(r, 1),
                                fv(r, 2))
                         .logpdf;
    }
    const double mx = s.maxCoeff();
    out(i, 0) = mx + std::log((s.array() - mx).exp().sum());
  }

  const bool ng = t.needs_grad(means) || t.needs_grad(factors) || t.needs_grad(logits) ||
                  t.needs_grad(points);
  const int mid = means.id, fid = factors.id, wid = logits.id, pid = points.id;
  int id = t.push(
      std::move(out), ng,
      ng ? std::function<void(Tape&, int)>([=](Tape& tp, int self) {
        const Matrix& g = tp.node(self).grad;
        const Matrix& mv = tp.node(mid).val;
        const Matrix& fv = tp.node(fid).val;
        const Matrix& wv = tp.node(wid).val;
        const Matrix& pv = tp.node(pid).val;
        const int M = static_cast<int>(wv.cols());
        Eigen::VectorXd la = log_softmax_row(wv, tf);
        Eigen::VectorXd alpha = la.array().exp();
        const bool gm = tp.node(mid).needs_grad;
        const bool gf = tp.node(fid).needs_grad;
        const bool gw = tp.node(wid).needs_grad;
        const bool gp = tp.node(pid).needs_grad;
        for (int i = 0; i < static_cast<int>(pv.rows()); ++i) {
          const double gout = g(i, 0);
          if (gout == 0.0) continue;
          Eigen::VectorXd s(M);
          std::vector<GaussTerm> terms(M);
          for (int m = 0; m < M; ++m) {
            const int r = tf * M + m;
            terms[m] = gauss_eval(pv(i, 0), pv(i, 1), mv(r, 0), mv(r, 1), fv(r, 0), fv(r, 1),
                                  fv(r, 2));
            s(m) = la(m) + terms[m].logpdf;
          }
          const double mx = s.maxCoeff();
          Eigen::ArrayXd resp = (s.array() - mx).exp();
          resp /= resp.sum();
          for (int m = 0; m < M; ++m) {
            const int r = tf * M + m;
            const double w = gout * resp(m);
            if (gm) {
              tp.grad_buf(mid)(r, 0) += w * terms[m].z0;
              tp.grad_buf(mid)(r, 1) += w * terms[m].z1;
            }
            if (gp) {
              tp.grad_buf(pid)(i, 0) -= w * terms[m].z0;
              tp.grad_buf(pid)(i, 1) -= w * terms[m].z1;
            }
            if (gf) {
              double da, db, dc;
              gauss_factor_grad(terms[m], fv(r, 0), fv(r, 2), da, db, dc);
              tp.grad_buf(fid)(r, 0) += w * da;
              tp.grad_buf(fid)(r, 1) += w * db;
              tp.grad_buf(fid)(r, 2) += w * dc;
            }
            if (gw) tp.grad_buf(wid)(tf, m) += gout * (resp(m) - alpha(m));
          }
        }
      })
         : nullptr);
  return {means.tape, id};
}

Var gauss_reparam(Var means, Var factors, const std::vector<int>& rows, const Matrix& eps) {
  Tape& t = *means.tape;
  const Matrix& mv = t.val(means);
  const Matrix& fv = t.val(factors);
  const int n = static_cast<int>(rows.size());
  TRAJCAST_CHECK(eps.rows() == n && eps.cols() == 2, ErrorCode::ShapeMismatch,
                 "gauss_reparam: eps nx2");
  Matrix out(n, 2);
  for (int i = 0; i < n; ++i) {
    const int r = rows[i];
    TRAJCAST_CHECK(r >= 0 && r < mv.rows(), ErrorCode::IndexOutOfRange, "gauss_reparam: row");
    out(i, 0) = mv(r, 0) + fv(r, 0) * eps(i, 0);
    out(i, 1) = mv(r, 1) + fv(r, 1) * eps(i, 0) + fv(r, 2) * eps(i, 1);
  }
  const bool ng = t.needs_grad(means) || t.needs_grad(factors);
  const int mid = means.id, fid = factors.id;
  auto comp_copy = std::make_shared<std::vector<int>>(rows);
  auto eps_copy = std::make_shared<Matrix>(eps);
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([=](Tape& tp, int self) {
                    const Matrix& g = tp.node(self).grad;
                    const Matrix& e = *eps_copy;
                    const bool gm = tp.node(mid).needs_grad;
                    const bool gf = tp.node(fid).needs_grad;
                    for (int i = 0; i < static_cast<int>(comp_copy->size()); ++i) {
                      const int r = (*comp_copy)[i];
                      if (gm) {
                        tp.grad_buf(mid)(r, 0) += g(i, 0);
                        tp.grad_buf(mid)(r, 1) += g(i, 1);
                      }
                      if (gf) {
                        tp.grad_buf(fid)(r, 0) += g(i, 0) * e(i, 0);
                        tp.grad_buf(fid)(r, 1) += g(i, 1) * e(i, 0);
                        tp.grad_buf(fid)(r, 2) += g(i, 1) * e(i, 1);
                      }
                    }
                  })
                     : nullptr);
  return {means.tape, id};
}

Var kth_value(Var v, int k) {
  Tape& t = *v.tape;
  const Matrix& vv = t.val(v);
  TRAJCAST_CHECK(vv.cols() == 1, ErrorCode::ShapeMismatch, "kth_value expects nx1");
  const int n = static_cast<int>(vv.rows());
  TRAJCAST_CHECK(k >= 0 && k < n, ErrorCode::IndexOutOfRange, "kth_value: k out of range");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::nth_element(order.begin(), order.begin() + k, order.end(),
                   [&](int a, int b) { return vv(a, 0) < vv(b, 0); });
  const int sel = order[k];
  Matrix out(1, 1);
  out(0, 0) = vv(sel, 0);
  const bool ng = t.needs_grad(v);
  const int vid = v.id;
  int id = t.push(std::move(out), ng,
                  ng ? std::function<void(Tape&, int)>([vid, sel](Tape& tp, int self) {
                    tp.grad_buf(vid)(sel, 0) += tp.node(self).grad(0, 0);
                  })
                     : nullptr);
  return {v.tape, id};
}

}  // namespace trajcast::ad
