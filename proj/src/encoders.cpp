#include "trajcast/encoders.hpp"

#include <algorithm>
#include <cmath>

namespace trajcast {

using namespace ad;

namespace {

Matrix glorot(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  const double s = 1.0 / std::sqrt(static_cast<double>(rows));
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = s * rng.normal();
  return m;
}

Matrix zeros(int rows, int cols) { return Matrix::Zero(rows, cols); }

// Linear layer y = x*W + b on 1xN rows (or RxN with row-broadcast bias).
Var linear(Tape& t, ParamStore& s, const std::string& prefix, Var x) {
  Var w = t.param(s, prefix + ".w");
  Var b = t.param(s, prefix + ".b");
  return add(matmul(x, w), b);
}

// Attention pooling of a T x D sequence with a learned query.
Var attention_pool(Tape& t, ParamStore& s, const std::string& prefix, Var seq, int d) {
  Var k = matmul(seq, t.param(s, prefix + ".wk"));  // T x D
  Var v = matmul(seq, t.param(s, prefix + ".wv"));  // T x D
  Var q = t.param(s, prefix + ".q");                // 1 x D
  Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  Var alpha = softmax_rows(scores);  // 1 x T
  return matmul(alpha, v);           // 1 x D
}

}  // namespace

void AgentHistory::validate(int t_hist) const {
  TRAJCAST_CHECK(length() >= 2, ErrorCode::InvalidArgument,
                 "agent history needs at least 2 observed positions");
  TRAJCAST_CHECK(length() <= t_hist, ErrorCode::InvalidArgument,
                 "agent history longer than the configured horizon");
  for (const auto& p : positions)
    TRAJCAST_CHECK(std::isfinite(p.x) && std::isfinite(p.y), ErrorCode::InvalidArgument,
                   "agent history contains non-finite values");
}

void OccupancyGrid::validate() const {
  TRAJCAST_CHECK(height >= 8 && width >= 8, ErrorCode::InvalidArgument,
                 "occupancy grid must be at least 8x8");
  TRAJCAST_CHECK(resolution > 0.0, ErrorCode::InvalidArgument,
                 "occupancy grid resolution must be positive");
  TRAJCAST_CHECK(cells.size() == static_cast<std::size_t>(height) * width,
                 ErrorCode::ShapeMismatch, "occupancy grid cell buffer size");
}

OccupancyGrid make_centered_grid(Vec2 center, int size, double radius) {
  OccupancyGrid g;
  g.height = g.width = size;
  g.resolution = 2.0 * radius / size;
  g.cells.assign(static_cast<std::size_t>(size) * size, 0);
  // cell (0,0) center sits half a cell inside the lower-left corner
  g.origin = {center.x - radius + 0.5 * g.resolution, center.y - radius + 0.5 * g.resolution};
  return g;
}

Matrix augment_grid_with_coords(const OccupancyGrid& grid) {
  grid.validate();
  const int h = grid.height, w = grid.width;
  Matrix out(3, static_cast<Eigen::Index>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Eigen::Index j = static_cast<Eigen::Index>(r) * w + c;
      out(0, j) = grid.at(r, c) ? 1.0 : 0.0;
      out(1, j) = w > 1 ? -1.0 + 2.0 * c / (w - 1) : 0.0;
      out(2, j) = h > 1 ? -1.0 + 2.0 * r / (h - 1) : 0.0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Temporal encoder: LSTM over [x, y, dx, dy] per step, attention pooling.

void init_temporal_params(ad::ParamStore& store, const EncoderDims& dims, Rng& rng) {
  const int d = dims.d_temporal;
  store.add("temporal.lstm.wx", glorot(rng, 4, 4 * d));
  store.add("temporal.lstm.wh", glorot(rng, d, 4 * d));
  Matrix b = zeros(1, 4 * d);
  b.middleCols(d, d).setConstant(1.0);  // forget-gate bias
  store.add("temporal.lstm.b", std::move(b), /*decay=*/false);
  store.add("temporal.pool.wk", glorot(rng, d, d));
  store.add("temporal.pool.wv", glorot(rng, d, d));
  store.add("temporal.pool.q", glorot(rng, 1, d));
  store.add("temporal.out.w", glorot(rng, d, d));
  store.add("temporal.out.b", zeros(1, d), /*decay=*/false);
}

Var encode_temporal(Tape& tape, ParamStore& store, const EncoderDims& dims,
                    const AgentHistory& history) {
  TRAJCAST_CHECK(history.length() >= 2, ErrorCode::InvalidArgument,
                 "encode_temporal: history needs at least 2 positions");
  const int d = dims.d_temporal;
  const int T = history.length();

  Matrix feats(T, 4);
  for (int t = 0; t < T; ++t) {
    feats(t, 0) = history.positions[t].x;
    feats(t, 1) = history.positions[t].y;
    feats(t, 2) = t == 0 ? 0.0 : history.positions[t].x - history.positions[t - 1].x;
    feats(t, 3) = t == 0 ? 0.0 : history.positions[t].y - history.positions[t - 1].y;
  }
  Var x = tape.constant(std::move(feats));
  Var wx = tape.param(store, "temporal.lstm.wx");
  Var wh = tape.param(store, "temporal.lstm.wh");
  Var b = tape.param(store, "temporal.lstm.b");

  Var h = tape.constant(zeros(1, d));
  Var c = tape.constant(zeros(1, d));
  Var states;  // T x d, assembled below
  for (int t = 0; t < T; ++t) {
    Var xt = slice_rows(x, t, 1);
    Var gates = add(add(matmul(xt, wx), matmul(h, wh)), b);
    Var ig = sigmoid(slice_cols(gates, 0, d));
    Var fg = sigmoid(slice_cols(gates, d, d));
    Var gg = tanh_(slice_cols(gates, 2 * d, d));
    Var og = sigmoid(slice_cols(gates, 3 * d, d));
    c = add(mul(fg, c), mul(ig, gg));
    h = mul(og, tanh_(c));
    states = t == 0 ? h : concat_rows(states, h);
  }

  Var pooled = attention_pool(tape, store, "temporal.pool", states, d);
  return tanh_(linear(tape, store, "temporal.out", pooled));
}

// ---------------------------------------------------------------------------
// Spatial encoder: three stride-2 3x3 convs (im2col + matmul), attention
// pooling over the remaining tokens.

namespace {

int conv_out(int n) { return (n + 2 - 3) / 2 + 1; }  // stride 2, pad 1

Eigen::MatrixXi im2col_indices(int channels, int h, int w) {
  const int ho = conv_out(h), wo = conv_out(w);
  Eigen::MatrixXi idx(channels * 9, ho * wo);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      const int col = oy * wo + ox;
      for (int ch = 0; ch < channels; ++ch)
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx) {
            const int iy = 2 * oy + ky - 1;
            const int ix = 2 * ox + kx - 1;
            const int row = ch * 9 + ky * 3 + kx;
            idx(row, col) = (iy < 0 || iy >= h || ix < 0 || ix >= w)
                                ? -1
                                : ch * h * w + iy * w + ix;
          }
    }
  return idx;
}

Var conv_block(Tape& t, ParamStore& s, const std::string& prefix, Var fmap, int channels, int h,
               int w) {
  Var cols = gather_flat(fmap, im2col_indices(channels, h, w));
  Var out = add(matmul(t.param(s, prefix + ".w"), cols), t.param(s, prefix + ".b"));
  return silu(out);
}

}  // namespace

void init_spatial_params(ad::ParamStore& store, const EncoderDims& dims, Rng& rng) {
  const int c1 = dims.cnn_channels[0], c2 = dims.cnn_channels[1], c3 = dims.cnn_channels[2];
  store.add("spatial.conv1.w", glorot(rng, c1, 3 * 9));
  store.add("spatial.conv1.b", zeros(c1, 1), /*decay=*/false);
  store.add("spatial.conv2.w", glorot(rng, c2, c1 * 9));
  store.add("spatial.conv2.b", zeros(c2, 1), /*decay=*/false);
  store.add("spatial.conv3.w", glorot(rng, c3, c2 * 9));
  store.add("spatial.conv3.b", zeros(c3, 1), /*decay=*/false);
  store.add("spatial.pool.wk", glorot(rng, c3, c3));
  store.add("spatial.pool.wv", glorot(rng, c3, c3));
  store.add("spatial.pool.q", glorot(rng, 1, c3));
  store.add("spatial.out.w", glorot(rng, c3, dims.d_spatial));
  store.add("spatial.out.b", zeros(1, dims.d_spatial), /*decay=*/false);
}

Var encode_spatial(Tape& tape, ParamStore& store, const EncoderDims& dims,
                   const Matrix& aug_grid, int grid_h, int grid_w) {
  TRAJCAST_CHECK(grid_h >= 8 && grid_w >= 8, ErrorCode::InvalidArgument,
                 "encode_spatial: grid below the 8x8 receptive-field minimum");
  TRAJCAST_CHECK(aug_grid.rows() == 3 &&
                     aug_grid.cols() == static_cast<Eigen::Index>(grid_h) * grid_w,
                 ErrorCode::ShapeMismatch, "encode_spatial: expected 3 x (H*W) input");
  const int c1 = dims.cnn_channels[0], c2 = dims.cnn_channels[1], c3 = dims.cnn_channels[2];

  Var fmap = tape.constant(aug_grid);
  int h = grid_h, w = grid_w;
  fmap = conv_block(tape, store, "spatial.conv1", fmap, 3, h, w);
  h = conv_out(h);
  w = conv_out(w);
  fmap = conv_block(tape, store, "spatial.conv2", fmap, c1, h, w);
  h = conv_out(h);
  w = conv_out(w);
  fmap = conv_block(tape, store, "spatial.conv3", fmap, c2, h, w);
  h = conv_out(h);
  w = conv_out(w);

  Var tokens = transpose(fmap);  // (h*w) x c3
  Var pooled = attention_pool(tape, store, "spatial.pool", tokens, c3);
  return tanh_(linear(tape, store, "spatial.out", pooled));
}

// ---------------------------------------------------------------------------
// Social attention: relevance-gated cross-attention over neighbor features.

void init_social_params(ad::ParamStore& store, const EncoderDims& dims, Rng& rng) {
  const int d = dims.d_temporal;
  store.add("social.wq", glorot(rng, d, d));
  store.add("social.wk", glorot(rng, d, d));
  store.add("social.wv", glorot(rng, d, d));
  store.add("social.gate.w", glorot(rng, 2 * d, 1));
  store.add("social.gate.b", zeros(1, 1), /*decay=*/false);
  store.add("social.null", glorot(rng, 1, d));
}

Var social_attention(Tape& tape, ParamStore& store, const EncoderDims& dims, Var target,
                     const std::vector<Var>& neighbors,
                     const std::vector<double>* gate_override) {
  const int d = dims.d_temporal;
  Var null_emb = tape.param(store, "social.null");
  Var base = add(target, null_emb);
  if (neighbors.empty()) return base;
  TRAJCAST_CHECK(!gate_override || gate_override->size() == neighbors.size(),
                 ErrorCode::InvalidArgument, "gate_override size mismatch");

  // Canonical neighbor order (lexicographic on feature values) keeps the
  // reduction bitwise permutation-invariant.
  std::vector<int> order(neighbors.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const Matrix& va = tape.val(neighbors[a]);
    const Matrix& vb = tape.val(neighbors[b]);
    for (Eigen::Index j = 0; j < va.cols(); ++j) {
      if (va(0, j) != vb(0, j)) return va(0, j) < vb(0, j);
    }
    return false;
  });

  Var q = matmul(target, tape.param(store, "social.wq"));
  Var wk = tape.param(store, "social.wk");
  Var wv = tape.param(store, "social.wv");
  Var gw = tape.param(store, "social.gate.w");
  Var gb = tape.param(store, "social.gate.b");

  Var keys, values, gates;
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const int i = order[pos];
    Var n = neighbors[i];
    Var k = matmul(n, wk);
    Var v = matmul(n, wv);
    Var g = gate_override ? tape.constant(Matrix::Constant(1, 1, (*gate_override)[i]))
                          : sigmoid(add(matmul(concat_cols(target, n), gw), gb));
    keys = pos == 0 ? k : concat_rows(keys, k);
    values = pos == 0 ? v : concat_rows(values, v);
    gates = pos == 0 ? g : concat_rows(gates, g);
  }

  Var scores = scale(matmul(q, transpose(keys)), 1.0 / std::sqrt(static_cast<double>(d)));
  Var alpha = softmax_rows(scores);                    // 1 x N
  Var gated = mul(alpha, transpose(gates));            // 1 x N
  Var pooled = matmul(gated, values);                  // 1 x d
  return add(base, pooled);
}

}  // namespace trajcast
