#include "trajcast/backbone.hpp"

#include <cmath>

namespace trajcast {

using namespace ad;

namespace {

Matrix gaussian_init(Rng& rng, int rows, int cols, double stddev) {
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
  return m;
}

Matrix fan_in_init(Rng& rng, int rows, int cols) {
  return gaussian_init(rng, rows, cols, 1.0 / std::sqrt(static_cast<double>(rows)));
}

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

Var linear(Tape& t, ParamStore& s, const std::string& prefix, Var x) {
  return add(matmul(x, t.param(s, prefix + ".w")), t.param(s, prefix + ".b"));
}

Var rms_norm(Tape& t, ParamStore& s, const std::string& gain_name, Var z) {
  Var ms = mean(square(z));
  Var inv = sqrt_(add_scalar(ms, 1e-8));
  return mul(div(z, inv), t.param(s, gain_name));
}

Matrix tau_embedding(int tau, int dim) {
  Matrix pe(1, dim);
  for (int i = 0; i < dim / 2; ++i) {
    const double w = std::pow(10000.0, -2.0 * i / dim);
    pe(0, 2 * i) = std::sin(tau * w);
    pe(0, 2 * i + 1) = std::cos(tau * w);
  }
  return pe;
}

Var residual_block(Tape& t, ParamStore& s, const std::string& prefix, Var z, const FilmMod& mod) {
  Var u = add(mul(rms_norm(t, s, prefix + ".gain", z), mod.scale), mod.shift);
  Var h = linear(t, s, prefix + ".l2", silu(linear(t, s, prefix + ".l1", u)));
  return add(z, h);
}

}  // namespace

void ModelConfig::validate() const {
  TRAJCAST_CHECK(t_hist >= 2 && t_fut >= 1 && n_modes >= 1, ErrorCode::InvalidArgument,
                 "ModelConfig: horizons and mode count");
  TRAJCAST_CHECK(latent_dim >= 2 && diffusion_steps >= 1, ErrorCode::InvalidArgument,
                 "ModelConfig: latent_dim >= 2, diffusion_steps >= 1");
  TRAJCAST_CHECK(lambda_step > 0.0 && lambda_anchor >= 0.0, ErrorCode::InvalidArgument,
                 "ModelConfig: lambda_step > 0, lambda_anchor >= 0");
  TRAJCAST_CHECK(max_k >= 1, ErrorCode::InvalidArgument, "ModelConfig: max_k >= 1");
  TRAJCAST_CHECK(grid_size >= 8 && grid_radius > 0.0, ErrorCode::InvalidArgument,
                 "ModelConfig: grid size/radius");
  TRAJCAST_CHECK(tau_embed_dim % 2 == 0, ErrorCode::InvalidArgument,
                 "ModelConfig: tau_embed_dim must be even");
}

void init_model_params(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  init_temporal_params(store, cfg.enc, rng);
  init_spatial_params(store, cfg.enc, rng);
  init_social_params(store, cfg.enc, rng);

  const int L = cfg.latent_dim;
  const int ctx = cfg.context_dim();
  const int TM = cfg.t_fut * cfg.n_modes;

  if (cfg.use_diffusion) {
    store.add("film.l1.w", fan_in_init(rng, ctx + cfg.tau_embed_dim, cfg.film_hidden));
    store.add("film.l1.b", Matrix::Zero(1, cfg.film_hidden), false);
    // zero output layer: modulation starts as identity
    store.add("film.l2.w", Matrix::Zero(cfg.film_hidden, 2 * L));
    store.add("film.l2.b", Matrix::Zero(1, 2 * L), false);
    for (const std::string blk : {"block1", "block2"}) {
      store.add(blk + ".gain", Matrix::Ones(1, L), false);
      store.add(blk + ".l1.w", fan_in_init(rng, L, L));
      store.add(blk + ".l1.b", Matrix::Zero(1, L), false);
      store.add(blk + ".l2.w", Matrix::Zero(L, L));  // residual branch starts closed
      store.add(blk + ".l2.b", Matrix::Zero(1, L), false);
    }
  } else {
    store.add("mlp_backbone.l1.w", fan_in_init(rng, ctx, L));
    store.add("mlp_backbone.l1.b", Matrix::Zero(1, L), false);
    store.add("mlp_backbone.l2.w", fan_in_init(rng, L, L));
    store.add("mlp_backbone.l2.b", Matrix::Zero(1, L), false);
  }

  store.add("head_core.l1.w", fan_in_init(rng, L, cfg.head_hidden));
  store.add("head_core.l1.b", Matrix::Zero(1, cfg.head_hidden), false);
  store.add("head_core.l2.w", gaussian_init(rng, cfg.head_hidden, TM * 5, 0.01));
  // bias carries the initial mixture: modes spread around the origin with a
  // generous starting scale so early NLLs stay tame
  Matrix core_bias(1, TM * 5);
  const double raw_sigma0 = inverse_softplus(1.5);
  for (int r = 0; r < TM; ++r) {
    core_bias(0, 5 * r) = 0.5 * rng.normal();
    core_bias(0, 5 * r + 1) = 0.5 * rng.normal();
    core_bias(0, 5 * r + 2) = raw_sigma0;
    core_bias(0, 5 * r + 3) = 0.0;
    core_bias(0, 5 * r + 4) = raw_sigma0;
  }
  store.add("head_core.l2.b", std::move(core_bias), false);

  store.add("head_stepw.w", gaussian_init(rng, L, TM, 0.01));
  store.add("head_stepw.b", Matrix::Zero(1, TM), false);
  store.add("head_anchw.w", gaussian_init(rng, L, cfg.n_modes, 0.01));
  store.add("head_anchw.b", Matrix::Zero(1, cfg.n_modes), false);

  // residual decoder (hypothesis generator)
  const int two_t = 2 * cfg.t_fut;
  store.add("resid.scale_enc.w", fan_in_init(rng, two_t, cfg.scale_feat_dim));
  store.add("resid.scale_enc.b", Matrix::Zero(1, cfg.scale_feat_dim), false);
  const int dec_in = cfg.scale_feat_dim + 2 * cfg.enc.d_temporal;
  store.add("resid.dec.l1.w", fan_in_init(rng, dec_in, cfg.residual_hidden));
  store.add("resid.dec.l1.b", Matrix::Zero(1, cfg.residual_hidden), false);
  store.add("resid.dec.l2.w",
            gaussian_init(rng, cfg.residual_hidden, (cfg.max_k - 1) * two_t, 0.1));
  store.add("resid.dec.l2.b", gaussian_init(rng, 1, (cfg.max_k - 1) * two_t, 0.1), false);
}

FilmMod film_modulate(Tape& tape, ParamStore& store, const ModelConfig& cfg, Var h_context,
                      int tau) {
  TRAJCAST_CHECK(tau >= 1 && tau <= cfg.diffusion_steps, ErrorCode::InvalidArgument,
                 "film_modulate: tau out of [1, diffusion_steps]");
  Var pe = tape.constant(tau_embedding(tau, cfg.tau_embed_dim));
  Var in = concat_cols(h_context, pe);
  Var h = silu(linear(tape, store, "film.l1", in));
  Var out = linear(tape, store, "film.l2", h);  // 1 x 2L
  const int L = cfg.latent_dim;
  FilmMod mod;
  mod.scale = add_scalar(slice_cols(out, 0, L), 1.0);
  mod.shift = slice_cols(out, L, L);
  return mod;
}

Var denoise_step(Tape& tape, ParamStore& store, const ModelConfig& cfg, Var z,
                 const FilmMod& mod) {
  z = residual_block(tape, store, "block1", z, mod);
  z = residual_block(tape, store, "block2", z, mod);
  return z;
}

Var run_chain(Tape& tape, ParamStore& store, const ModelConfig& cfg, Var h_context, Rng& rng,
              std::vector<Var>* trace) {
  const int L = cfg.latent_dim;
  Matrix z0(1, L);
  for (int i = 0; i < L; ++i) z0(0, i) = rng.normal();
  Var z = tape.constant(std::move(z0));
  if (trace) trace->push_back(z);
  for (int tau = 1; tau <= cfg.diffusion_steps; ++tau) {
    FilmMod mod = film_modulate(tape, store, cfg, h_context, tau);
    z = denoise_step(tape, store, cfg, z, mod);
    if (cfg.per_step_noise && tau < cfg.diffusion_steps) {
      Matrix xi(1, L);
      for (int i = 0; i < L; ++i) xi(0, i) = 0.1 * rng.normal();
      z = add(z, tape.constant(std::move(xi)));
    }
    if (trace) trace->push_back(z);
  }
  return z;
}

CoreParamVars decode_heads(Tape& tape, ParamStore& store, const ModelConfig& cfg, Var z_final) {
  const int TM = cfg.t_fut * cfg.n_modes;
  Var h = silu(linear(tape, store, "head_core.l1", z_final));
  Var flat = linear(tape, store, "head_core.l2", h);     // 1 x TM*5
  Var grid = reshape_rm(flat, TM, 5);
  CoreParamVars core;
  core.means = slice_cols(grid, 0, 2);
  Var raw = slice_cols(grid, 2, 3);
  if (!cfg.full_cov) {
    Matrix mask(1, 3);
    mask << 1.0, 0.0, 1.0;
    raw = mul(raw, tape.constant(std::move(mask)));
  }
  core.factors = factor_activation(raw, std::sqrt(kVarianceFloor));
  core.step_logits = reshape_rm(linear(tape, store, "head_stepw", z_final), cfg.t_fut, cfg.n_modes);
  core.anchor_logits = linear(tape, store, "head_anchw", z_final);
  return core;
}

ForwardVars model_forward(Tape& tape, ParamStore& store, const ModelConfig& cfg,
                          const SceneSample& scene, Rng& chain_rng) {
  scene.target.validate(cfg.t_hist);
  ForwardVars fwd;
  fwd.ctx.h_temporal = encode_temporal(tape, store, cfg.enc, scene.target);
  std::vector<Var> neighbor_feats;
  neighbor_feats.reserve(scene.neighbors.size());
  for (const auto& n : scene.neighbors)
    neighbor_feats.push_back(encode_temporal(tape, store, cfg.enc, n));
  fwd.ctx.h_social = social_attention(tape, store, cfg.enc, fwd.ctx.h_temporal, neighbor_feats);
  TRAJCAST_CHECK(scene.grid != nullptr, ErrorCode::InvalidArgument,
                 "model_forward: scene has no occupancy grid");
  const Matrix aug = augment_grid_with_coords(*scene.grid);
  fwd.ctx.h_spatial =
      encode_spatial(tape, store, cfg.enc, aug, scene.grid->height, scene.grid->width);
  fwd.ctx.h_context = concat_cols(fwd.ctx.h_temporal, fwd.ctx.h_spatial);

  Var z_final;
  if (cfg.use_diffusion) {
    z_final = run_chain(tape, store, cfg, fwd.ctx.h_context, chain_rng);
  } else {
    Var h = silu(linear(tape, store, "mlp_backbone.l1", fwd.ctx.h_context));
    z_final = linear(tape, store, "mlp_backbone.l2", h);
  }
  fwd.core = decode_heads(tape, store, cfg, z_final);
  return fwd;
}

Var prob_loss_graph(Tape& tape, const CoreParamVars& core, const Matrix& gt, double lambda_step,
                    double lambda_anchor) {
  Var nll_step = sum(step_nll_vec(core.means, core.factors, core.step_logits, gt));
  Var nll_anchor = anchor_nll(core.means, core.factors, core.anchor_logits, gt);
  (void)tape;
  return add(scale(nll_step, lambda_step), scale(nll_anchor, lambda_anchor));
}

MixturePair extract_mixtures(const Tape& tape, const CoreParamVars& core, const ModelConfig& cfg) {
  const Matrix& mv = tape.val(core.means);
  const Matrix& fv = tape.val(core.factors);
  const Matrix& sw = tape.val(core.step_logits);
  const Matrix& aw = tape.val(core.anchor_logits);
  const int T = cfg.t_fut, M = cfg.n_modes;

  auto grid = std::make_shared<GaussGrid>(T, M);
  for (int tf = 0; tf < T; ++tf)
    for (int m = 0; m < M; ++m) {
      const int r = tf * M + m;
      grid->mean_at(tf, m, 0) = mv(r, 0);
      grid->mean_at(tf, m, 1) = mv(r, 1);
      grid->factor_at(tf, m, 0) = fv(r, 0);
      grid->factor_at(tf, m, 1) = fv(r, 1);
      grid->factor_at(tf, m, 2) = fv(r, 2);
    }

  std::vector<double> step_w(static_cast<std::size_t>(T) * M);
  for (int tf = 0; tf < T; ++tf) {
    double mx = sw.row(tf).maxCoeff();
    double total = 0.0;
    for (int m = 0; m < M; ++m) total += std::exp(sw(tf, m) - mx);
    for (int m = 0; m < M; ++m)
      step_w[static_cast<std::size_t>(tf) * M + m] = std::exp(sw(tf, m) - mx) / total;
  }
  std::vector<double> anchor_w(M);
  {
    double mx = aw.row(0).maxCoeff();
    double total = 0.0;
    for (int m = 0; m < M; ++m) total += std::exp(aw(0, m) - mx);
    for (int m = 0; m < M; ++m) anchor_w[m] = std::exp(aw(0, m) - mx) / total;
  }

  MixturePair pair{make_step_mixture(grid, std::move(step_w)),
                   build_anchor_mixture(grid, std::move(anchor_w))};
  return pair;
}

double prob_loss(const StepMixture& step, const AnchorMixture& anchor,
                 const GroundTruthFuture& gt, double lambda_step, double lambda_anchor) {
  return lambda_step * step_nll(step, gt).sum + lambda_anchor * anchor_nll(anchor, gt);
}

Matrix gt_matrix(const GroundTruthFuture& gt) {
  Matrix m(gt.horizon(), 2);
  for (int tf = 0; tf < gt.horizon(); ++tf) {
    m(tf, 0) = gt.positions[tf].x;
    m(tf, 1) = gt.positions[tf].y;
  }
  return m;
}

}  // namespace trajcast
