#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Core>
#include <cmath>
#include <functional>

#include "trajcast/ad.hpp"
#include "trajcast/common.hpp"

using namespace trajcast;
using namespace trajcast::ad;

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double scale = 1.0) {
  Matrix m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
  return m;
}

// Analytic gradients from one backward pass, checked entry-by-entry against
// central finite differences of the rebuilt graph. tol_abs absorbs FD
// roundoff (~eps*|f|/h) on near-zero entries.
void check_against_fd(ParamStore& store, const std::function<Var(Tape&, ParamStore&)>& f,
                      double tol_rel = 1e-6, double tol_abs = 1e-8) {
  store.zero_grad();
  {
    Tape tape;
    Var loss = f(tape, store);
    tape.backward(loss);
    tape.accumulate_param_grads();
  }
  for (std::size_t p = 0; p < store.size(); ++p) {
    auto& entry = store.entry(static_cast<int>(p));
    for (Eigen::Index j = 0; j < entry.value.cols(); ++j)
      for (Eigen::Index i = 0; i < entry.value.rows(); ++i) {
        const double orig = entry.value(i, j);
        const double step = 1e-5 * (1.0 + std::abs(orig));
        entry.value(i, j) = orig + step;
        Tape tp;
        const double fp = tp.val(f(tp, store))(0, 0);
        entry.value(i, j) = orig - step;
        Tape tm;
        const double fm = tm.val(f(tm, store))(0, 0);
        entry.value(i, j) = orig;
        const double fd = (fp - fm) / (2.0 * step);
        const double an = entry.grad(i, j);
        INFO("param ", entry.name, " entry (", i, ",", j, "): analytic=", an, " fd=", fd);
        CHECK(std::abs(an - fd) <= tol_rel * std::max(std::abs(an), std::abs(fd)) + tol_abs);
      }
  }
}

}  // namespace

TEST_CASE("elementwise, broadcast and reduction ops match finite differences") {
  Rng rng(42);
  ParamStore store;
  store.add("a", random_matrix(rng, 3, 4));
  store.add("b", random_matrix(rng, 3, 4));
  store.add("row", random_matrix(rng, 1, 4));
  store.add("col", random_matrix(rng, 3, 1));
  store.add("s", random_matrix(rng, 1, 1));

  check_against_fd(store, [](Tape& t, ParamStore& s) {
    Var a = t.param(s, "a");
    Var b = t.param(s, "b");
    Var row = t.param(s, "row");
    Var col = t.param(s, "col");
    Var sc = t.param(s, "s");
    Var x = add(mul(a, b), row);
    x = sub(x, col);
    x = mul(x, sc);
    x = div(x, add_scalar(square(sc), 1.0));
    return mean(square(x));
  });
}

TEST_CASE("matmul/transpose/concat/slice/reshape grads") {
  Rng rng(7);
  ParamStore store;
  store.add("w1", random_matrix(rng, 4, 5));
  store.add("w2", random_matrix(rng, 5, 3));
  store.add("w3", random_matrix(rng, 2, 5));

  check_against_fd(store, [](Tape& t, ParamStore& s) {
    Var w1 = t.param(s, "w1");
    Var w2 = t.param(s, "w2");
    Var w3 = t.param(s, "w3");
    Var prod = matmul(w1, w2);                   // 4x3
    Var cat = concat_rows(prod, matmul(w3, w2)); // 6x3
    Var sl = slice_rows(cat, 1, 3);
    Var rs = reshape_rm(transpose(sl), 9, 1);
    return sum(square(slice_cols(concat_cols(rs, rs), 1, 1)));
  });
}

TEST_CASE("activations match finite differences") {
  Rng rng(11);
  ParamStore store;
  store.add("x", random_matrix(rng, 4, 4, 0.8));

  check_against_fd(store, [](Tape& t, ParamStore& s) {
    Var x = t.param(s, "x");
    Var y = add(tanh_(x), sigmoid(x));
    y = add(y, softplus(x));
    y = add(y, silu(x));
    y = add(y, exp_(scale(x, 0.3)));
    y = add(y, sqrt_(add_scalar(square(x), 1.0)));
    y = add(y, log_(add_scalar(square(x), 1.0)));
    return mean(y);
  });
}

TEST_CASE("softmax/logsumexp/max_rows/row-col sums grads") {
  Rng rng(13);
  ParamStore store;
  store.add("x", random_matrix(rng, 5, 6));

  check_against_fd(store, [](Tape& t, ParamStore& s) {
    Var x = t.param(s, "x");
    Var p = softmax_rows(x);
    Var l = logsumexp_rows(scale(x, 1.3));
    Var m = max_rows(x);
    Var rs = row_sum(square(p));
    Var cs = col_sum(p);
    return add(add(sum(mul(rs, m)), sum(l)), sum(square(cs)));
  });
}

TEST_CASE("gather_flat forward and backward") {
  Rng rng(17);
  ParamStore store;
  store.add("x", random_matrix(rng, 3, 4));

  Eigen::MatrixXi idx(2, 3);
  idx << 0, 5, -1,
         11, 2, 7;

  {
    Tape t;
    Var x = t.param(store, "x");
    Var g = gather_flat(x, idx);
    const Matrix& xv = t.val(x);
    CHECK(t.val(g)(0, 0) == xv(0, 0));
    CHECK(t.val(g)(0, 1) == xv(1, 1));  // flat 5 = row 1, col 1
    CHECK(t.val(g)(0, 2) == 0.0);
    CHECK(t.val(g)(1, 0) == xv(2, 3));  // flat 11
  }

  check_against_fd(store, [&](Tape& t, ParamStore& s) {
    Var x = t.param(s, "x");
    return sum(square(gather_flat(x, idx)));
  });
}

TEST_CASE("fused mixture NLL ops match finite differences tightly") {
  Rng rng(23);
  const int T = 3, M = 2;
  ParamStore store;
  store.add("means", random_matrix(rng, T * M, 2));
  store.add("factors_raw", random_matrix(rng, T * M, 3, 0.5));
  store.add("step_logits", random_matrix(rng, T, M));
  store.add("anchor_logits", random_matrix(rng, 1, M));

  Matrix gt = random_matrix(rng, T, 2);

  check_against_fd(
      store,
      [&](Tape& t, ParamStore& s) {
        Var means = t.param(s, "means");
        Var factors = factor_activation(t.param(s, "factors_raw"), 0.01);
        Var sl = t.param(s, "step_logits");
        Var al = t.param(s, "anchor_logits");
        Var nll = step_nll_vec(means, factors, sl, gt);
        Var a = anchor_nll(means, factors, al, gt);
        return add(sum(nll), a);
      });
}

TEST_CASE("mixture_logpdf_at and gauss_reparam and kth_value grads") {
  Rng rng(29);
  const int T = 2, M = 3, N = 8;
  ParamStore store;
  store.add("means", random_matrix(rng, T * M, 2));
  store.add("factors_raw", random_matrix(rng, T * M, 3, 0.5));
  store.add("logits", random_matrix(rng, T, M));
  store.add("shift", random_matrix(rng, N, 2, 0.3));

  std::vector<int> rows(N);
  for (int i = 0; i < N; ++i) rows[i] = (i % M) + 1 * M;  // all timestep 1
  Matrix eps = random_matrix(rng, N, 2);

  check_against_fd(
      store,
      [&](Tape& t, ParamStore& s) {
        Var means = t.param(s, "means");
        Var factors = factor_activation(t.param(s, "factors_raw"), 0.01);
        Var logits = t.param(s, "logits");
        Var shift = t.param(s, "shift");
        Var pts = add(gauss_reparam(means, factors, rows, eps), shift);
        Var lp = mixture_logpdf_at(means, factors, logits, 1, pts);
        Var q = kth_value(lp, 2);
        return add(sum(lp), scale(q, 0.7));
      });
}

TEST_CASE("backward skips constant subgraphs and accumulates over param reuse") {
  ParamStore store;
  Matrix w(1, 1);
  w(0, 0) = 2.0;
  store.add("w", w);

  Tape t;
  Var c = t.constant(Matrix::Constant(2, 2, 3.0));
  Var p1 = t.param(store, "w");
  Var p2 = t.param(store, "w");  // same entry, second leaf
  Var loss = add(sum(mul(c, p1)), sum(square(p2)));
  t.backward(loss);
  t.accumulate_param_grads();
  // d/dw [12w + w^2] = 12 + 2w = 16
  CHECK(store.entry("w").grad(0, 0) == doctest::Approx(16.0).epsilon(1e-12));
}

TEST_CASE("stop_grad blocks flow") {
  ParamStore store;
  Matrix w(1, 1);
  w(0, 0) = 1.5;
  store.add("w", w);

  Tape t;
  Var p = t.param(store, "w");
  Var loss = sum(mul(stop_grad(p), p));  // d/dw (c * w) with c = w value
  t.backward(loss);
  t.accumulate_param_grads();
  CHECK(store.entry("w").grad(0, 0) == doctest::Approx(1.5).epsilon(1e-12));
}
