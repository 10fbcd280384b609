#pragma once

// Reverse-mode automatic differentiation over 2-D double matrices.
//
// A Tape owns an append-only list of nodes; append order is a valid
// topological order, so the backward sweep is a single reverse pass.
// Ops are coarse (matmul, activations, reductions, fused Gaussian-mixture
// terms) so graphs stay small: a full model forward is a few hundred nodes.

#include <Eigen/Core>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "trajcast/common.hpp"

namespace trajcast::ad {

using Matrix = Eigen::MatrixXd;

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Named FP64 parameter registry with gradient buffers and Adam moments.
// Registration order is stable and defines checkpoint layout.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
    Matrix m;  // first moment
    Matrix v;  // second moment
    bool decay = true;
  };

  int add(const std::string& name, Matrix init, bool decay = true);
  int index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  Entry& entry(int idx) { return entries_[idx]; }
  const Entry& entry(int idx) const { return entries_[idx]; }
  Entry& entry(const std::string& name) { return entries_[index_of(name)]; }
  const Entry& entry(const std::string& name) const { return entries_[index_of(name)]; }
  std::size_t size() const { return entries_.size(); }
  void zero_grad();
  std::size_t scalar_count() const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

class Tape {
 public:
  Var constant(Matrix v);
  Var scalar(double v);
  // Leaf bound to a store entry; gradients flow back into the store via
  // accumulate_param_grads(). One store per tape.
  Var param(ParamStore& store, int idx);
  Var param(ParamStore& store, const std::string& name);

  const Matrix& val(Var v) const { return nodes_[v.id].val; }
  const Matrix& grad_of(Var v) const { return nodes_[v.id].grad; }

  void backward(Var loss);
  // Adds scale * (leaf grad) into each bound store entry's grad buffer.
  void accumulate_param_grads(double scale = 1.0);
  // Same, into an external buffer aligned with the store registry (sized and
  // zeroed on first use); lets batch workers accumulate without sharing.
  void collect_param_grads(std::vector<Matrix>& grads, double scale = 1.0) const;

  std::size_t node_count() const { return nodes_.size(); }

  // --- internal use by ops ---
  struct Node {
    Matrix val;
    Matrix grad;
    std::function<void(Tape&, int)> back;
    bool needs_grad = false;
    int store_idx = -1;
  };
  int push(Matrix value, bool needs_grad, std::function<void(Tape&, int)> back);
  Node& node(int id) { return nodes_[id]; }
  const Node& node(int id) const { return nodes_[id]; }
  Matrix& grad_buf(int id);  // lazily zero-initialized to val's shape
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

 private:
  std::vector<Node> nodes_;
  ParamStore* store_ = nullptr;
};

// Elementwise binary ops; `b` may broadcast as 1x1, 1xC (over rows) or Rx1 (over cols).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

Var matmul(Var a, Var b);
Var transpose(Var a);

Var tanh_(Var a);
Var sigmoid(Var a);
Var exp_(Var a);
Var log_(Var a);
Var softplus(Var a);
Var silu(Var a);
Var sqrt_(Var a);
Var square(Var a);
Var relu(Var a);

Var sum(Var a);       // 1x1
Var mean(Var a);      // 1x1
Var row_sum(Var a);   // Rx1
Var col_sum(Var a);   // 1xC
Var max_rows(Var a);  // Rx1, argmax-routing backward

Var concat_cols(Var a, Var b);  // [a | b]
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, int r0, int n);
Var slice_cols(Var a, int c0, int n);
Var reshape_rm(Var a, int rows, int cols);  // row-major reinterpret
Var stop_grad(Var a);

Var softmax_rows(Var a);
Var logsumexp_rows(Var a);  // Rx1

// out.flat_rm(i,j) = a.flat_rm(idx(i,j)), idx < 0 reads as 0 (zero padding).
// Flat indices are row-major over a. Backward scatter-adds.
Var gather_flat(Var a, const Eigen::MatrixXi& idx);

// --- fused Gaussian-mixture ops -------------------------------------------
// Parameter grids: means (T*M)x2, factors (T*M)x3 = (l00, l10, l11) with
// positive diagonals (post-activation), row tf*M + m.

// Column 0 and 2 pass through softplus(x) + diag_floor, column 1 unchanged.
Var factor_activation(Var raw, double diag_floor);

// Per-timestep mixture NLL, Tx1. logits is TxM (pre-softmax), gt is Tx2.
Var step_nll_vec(Var means, Var factors, Var logits, const Matrix& gt);

// Joint trajectory-space mixture NLL (block-diagonal per mode), 1x1.
// anchor_logits is 1xM.
Var anchor_nll(Var means, Var factors, Var anchor_logits, const Matrix& gt);

// Mixture log-density at n query points for one timestep; points is nx2,
// output nx1. Differentiable in means, factors, logits and points.
Var mixture_logpdf_at(Var means, Var factors, Var logits, int tf, Var points);

// Reparameterized draws x_i = mu[rows_i] + L[rows_i] * eps_i, where rows
// index the (T*M) parameter grid. Row choices are constants (stop-gradient
// routing); the Gaussian part stays differentiable.
Var gauss_reparam(Var means, Var factors, const std::vector<int>& rows, const Matrix& eps);

// k-th smallest entry of an nx1 vector (0-based k); gradient routes to it.
Var kth_value(Var v, int k);

}  // namespace trajcast::ad
