#include "trajcast/hypothesis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace trajcast {

using namespace ad;

void HypoLossWeights::validate() const {
  TRAJCAST_CHECK(lambda_mse >= 0.0 && lambda_wta >= 0.0 && lambda_conf >= 0.0,
                 ErrorCode::InvalidArgument, "HypoLossWeights: negative lambda");
  TRAJCAST_CHECK(lambda_mse + lambda_wta + lambda_conf > 0.0, ErrorCode::InvalidArgument,
                 "HypoLossWeights: at least one lambda must be positive");
  TRAJCAST_CHECK(beta > 0.0 && beta < 1.0, ErrorCode::InvalidArgument,
                 "HypoLossWeights: beta in (0,1)");
  TRAJCAST_CHECK(wta_temp_start > 0.0 && wta_temp_end > 0.0, ErrorCode::InvalidArgument,
                 "HypoLossWeights: WTA temperatures must be positive");
}

double HypoLossWeights::wta_temperature(int epoch, int total_epochs) const {
  if (total_epochs <= 1) return wta_temp_end;
  const double frac = static_cast<double>(epoch - 1) / (total_epochs - 1);
  return wta_temp_start * std::pow(wta_temp_end / wta_temp_start, frac);
}

double sigma_scale(const std::vector<Gaussian2D>& blocks) {
  TRAJCAST_CHECK(!blocks.empty(), ErrorCode::InvalidArgument, "sigma_scale: empty block list");
  double acc = 0.0;
  for (const auto& g : blocks) {
    g.validate();
    acc += g.cov_xx() + g.cov_yy();
  }
  return std::sqrt(acc / (2.0 * blocks.size()));
}

std::vector<int> hamilton_allocate(const PrunedWeights& pruned, int k) {
  const int m_total = static_cast<int>(pruned.weights.size());
  const int m_star = pruned.active_count;
  TRAJCAST_CHECK(m_star >= 1, ErrorCode::InvalidArgument, "hamilton_allocate: no active modes");
  TRAJCAST_CHECK(k >= m_star, ErrorCode::InvalidArgument,
                 "hamilton_allocate: K must be >= the active mode count");

  double active_sum = 0.0;
  for (int m = 0; m < m_total; ++m)
    if (pruned.active_mask[m]) active_sum += pruned.weights[m];

  std::vector<int> quota(m_total, 0);
  std::vector<std::pair<double, int>> remainders;  // (-remainder, mode) for stable ordering
  int assigned = 0;
  for (int m = 0; m < m_total; ++m) {
    if (!pruned.active_mask[m]) continue;
    const double share = active_sum > 0.0 ? pruned.weights[m] / active_sum
                                          : 1.0 / m_star;
    const double r = share * (k - m_star);
    quota[m] = 1 + static_cast<int>(std::floor(r));
    assigned += quota[m];
    remainders.push_back({-(r - std::floor(r)), m});
  }
  // leftover slots one-by-one to the largest fractional remainders; ties by
  // ascending mode index
  std::sort(remainders.begin(), remainders.end());
  int leftover = k - assigned;
  TRAJCAST_CHECK(leftover >= 0 && leftover <= m_star, ErrorCode::Internal,
                 "hamilton_allocate: leftover out of range");
  for (int i = 0; i < leftover; ++i) quota[remainders[i].second] += 1;
  return quota;
}

// ---------------------------------------------------------------------------
// Tape-side generation

Var mode_rows(Var grid_matrix, int n_modes, int mode, int t_fut, int width) {
  Eigen::MatrixXi idx(t_fut, width);
  for (int tf = 0; tf < t_fut; ++tf)
    for (int c = 0; c < width; ++c) idx(tf, c) = (tf * n_modes + mode) * width + c;
  return gather_flat(grid_matrix, idx);
}

Var decode_residuals_graph(Tape& tape, ParamStore& store, const ModelConfig& cfg,
                           Var mode_diag_vars, Var h_temporal, Var h_social, int q_m) {
  TRAJCAST_CHECK(q_m >= 1, ErrorCode::InvalidArgument, "decode_residuals: q_m >= 1");
  TRAJCAST_CHECK(q_m <= cfg.max_k, ErrorCode::InvalidArgument,
                 "decode_residuals: q_m exceeds the configured hypothesis cap");
  if (q_m == 1) return {};  // anchor mean only

  Var h_scale = silu(add(matmul(mode_diag_vars, tape.param(store, "resid.scale_enc.w")),
                         tape.param(store, "resid.scale_enc.b")));
  Var in = concat_cols(concat_cols(h_scale, h_temporal), h_social);
  Var h = silu(add(matmul(in, tape.param(store, "resid.dec.l1.w")),
                   tape.param(store, "resid.dec.l1.b")));
  Var flat = add(matmul(h, tape.param(store, "resid.dec.l2.w")),
                 tape.param(store, "resid.dec.l2.b"));
  const int two_t = 2 * cfg.t_fut;
  Var all = reshape_rm(flat, cfg.max_k - 1, two_t);
  Var bundle = slice_rows(all, 0, q_m - 1);

  const int n = q_m - 1;
  if (n >= 2) {
    Var mean_row = scale(col_sum(bundle), 1.0 / n);  // 1 x 2T
    bundle = sub(bundle, mean_row);
  }
  Var ms = scale(col_sum(square(bundle)), 1.0 / n);
  Var rms = sqrt_(add_scalar(ms, 1e-12));
  return div(bundle, rms);
}

HypothesisVars generate_graph(Tape& tape, ParamStore& store, const ModelConfig& cfg,
                              const ForwardVars& fwd, const std::vector<int>& quotas) {
  const int M = cfg.n_modes;
  TRAJCAST_CHECK(static_cast<int>(quotas.size()) == M, ErrorCode::ShapeMismatch,
                 "generate: quota vector length");
  HypothesisVars out;
  bool first = true;
  for (int m = 0; m < M; ++m) {
    const int q = quotas[m];
    if (q == 0) continue;
    Var means_m = mode_rows(fwd.core.means, M, m, cfg.t_fut, 2);      // T x 2
    Var factors_m = mode_rows(fwd.core.factors, M, m, cfg.t_fut, 3);  // T x 3
    Var a = slice_cols(factors_m, 0, 1);
    Var b = slice_cols(factors_m, 1, 1);
    Var c = slice_cols(factors_m, 2, 1);
    Var diag = concat_cols(square(a), add(square(b), square(c)));  // T x 2 (Sxx, Syy)
    Var sigma_hat = sqrt_(mean(diag));                             // 1 x 1
    Var diag_row = reshape_rm(diag, 1, 2 * cfg.t_fut);

    Var anchor_mean = reshape_rm(means_m, 1, 2 * cfg.t_fut);
    Var hyps_m = anchor_mean;
    if (q > 1) {
      Var bundle =
          decode_residuals_graph(tape, store, cfg, diag_row, fwd.ctx.h_temporal, fwd.ctx.h_social,
                                 q);
      Var spread = add(mul(bundle, sigma_hat), anchor_mean);  // (q-1) x 2T
      hyps_m = concat_rows(anchor_mean, spread);
    }
    out.trajectories = first ? hyps_m : concat_rows(out.trajectories, hyps_m);
    first = false;
    for (int i = 0; i < q; ++i) out.source_mode.push_back(m);
  }
  TRAJCAST_CHECK(!first, ErrorCode::InvalidArgument, "generate: all quotas were zero");
  return out;
}

ConfDraws make_conf_draws(const StepMixture& mix, double beta, int n, Rng& rng) {
  TRAJCAST_CHECK(n >= 2, ErrorCode::InvalidArgument, "make_conf_draws: n >= 2");
  const int T = mix.t_fut();
  const int M = mix.n_modes();
  ConfDraws d;
  d.rows.resize(T);
  d.eps.resize(T);
  d.quantile_index = std::clamp(static_cast<int>(std::floor(beta * n)), 0, n - 1);
  for (int tf = 0; tf < T; ++tf) {
    d.rows[tf].resize(n);
    d.eps[tf].resize(n, 2);
    std::span<const double> w(mix.weights.data() + static_cast<std::size_t>(tf) * M, M);
    for (int i = 0; i < n; ++i) {
      d.rows[tf][i] = tf * M + rng.categorical(w);
      d.eps[tf](i, 0) = rng.normal();
      d.eps[tf](i, 1) = rng.normal();
    }
  }
  return d;
}

Var hypo_loss_graph(Tape& tape, const ModelConfig& cfg, const CoreParamVars& core,
                    const HypothesisVars& hyps, const Matrix& gt, const HypoLossWeights& weights,
                    double wta_temperature, const ConfDraws& draws) {
  weights.validate();
  const int T = cfg.t_fut;
  const int K = static_cast<int>(hyps.source_mode.size());
  TRAJCAST_CHECK(gt.rows() == T && gt.cols() == 2, ErrorCode::ShapeMismatch,
                 "hypo_loss: gt shape");

  // per-hypothesis, per-step squared distances
  Matrix gt_row(1, 2 * T);
  for (int tf = 0; tf < T; ++tf) {
    gt_row(0, 2 * tf) = gt(tf, 0);
    gt_row(0, 2 * tf + 1) = gt(tf, 1);
  }
  Var diff = sub(hyps.trajectories, tape.constant(gt_row));  // K x 2T
  Var sq = square(diff);
  Var err = row_sum(reshape_rm(sq, K * T, 2));  // (K*T) x 1
  Var e_steps = reshape_rm(err, K, T);          // K x T

  Var loss = tape.scalar(0.0);

  if (weights.lambda_mse > 0.0) loss = add(loss, scale(mean(e_steps), weights.lambda_mse));

  if (weights.lambda_wta > 0.0) {
    Var e_k = scale(row_sum(e_steps), 1.0 / T);  // K x 1, per-hypothesis mean sq error
    Var w = softmax_rows(scale(transpose(e_k), -1.0 / wta_temperature));  // 1 x K
    Var wta = matmul(w, e_k);                                             // 1 x 1
    loss = add(loss, scale(wta, weights.lambda_wta));
  }

  if (weights.lambda_conf > 0.0) {
    TRAJCAST_CHECK(static_cast<int>(draws.rows.size()) == T, ErrorCode::ShapeMismatch,
                   "hypo_loss: conf draws horizon");
    Var conf_acc = tape.scalar(0.0);
    for (int tf = 0; tf < T; ++tf) {
      Var samples = gauss_reparam(core.means, core.factors, draws.rows[tf], draws.eps[tf]);
      Var sample_logp =
          mixture_logpdf_at(core.means, core.factors, core.step_logits, tf, samples);
      Var gamma = kth_value(sample_logp, draws.quantile_index);  // 1 x 1
      Var pts = slice_cols(hyps.trajectories, 2 * tf, 2);        // K x 2
      Var hyp_logp = mixture_logpdf_at(core.means, core.factors, core.step_logits, tf, pts);
      Var deficit = relu(scale(sub(hyp_logp, gamma), -1.0));  // K x 1, hinge(gamma - logp)
      Var worst = max_rows(transpose(deficit));               // 1 x 1
      conf_acc = add(conf_acc, worst);
    }
    loss = add(loss, scale(conf_acc, weights.lambda_conf / T));
  }

  return loss;
}

// ---------------------------------------------------------------------------
// Plain-side scoring

double confidence_from_rank(double rank, int bins) {
  TRAJCAST_CHECK(bins >= 2, ErrorCode::InvalidArgument, "confidence_from_rank: bins >= 2");
  TRAJCAST_CHECK(rank >= 0.0 && rank <= 1.0, ErrorCode::InvalidArgument,
                 "confidence_from_rank: rank in [0,1]");
  const double bin_width = 1.0 / bins;
  const int j = std::min(static_cast<int>(std::floor(rank / bin_width)), bins - 1);
  return 1.0 - j * bin_width;
}

std::vector<double> confidence_scores(const HypothesisSet& hyps, const StepMixture& mix,
                                      int mc_samples, int bins, Rng& rng) {
  TRAJCAST_CHECK(mc_samples >= 100, ErrorCode::InvalidArgument, "confidence_scores: I >= 100");
  TRAJCAST_CHECK(bins >= 2, ErrorCode::InvalidArgument, "confidence_scores: J >= 2");
  TRAJCAST_CHECK(hyps.t_fut == mix.t_fut(), ErrorCode::ShapeMismatch,
                 "confidence_scores: horizon mismatch");
  const int T = mix.t_fut();
  const int K = hyps.k;
  std::vector<double> scores(K, 0.0);
  std::vector<double> sample_logd(mc_samples);
  for (int tf = 0; tf < T; ++tf) {
    const std::vector<Vec2> samples = sample_step_mixture(mix, tf, mc_samples, rng);
    for (int i = 0; i < mc_samples; ++i) {
      const double x[2] = {samples[i].x, samples[i].y};
      sample_logd[i] = step_mixture_logpdf(mix, tf, x);
    }
    for (int k = 0; k < K; ++k) {
      const double x[2] = {hyps.at(k, tf, 0), hyps.at(k, tf, 1)};
      const double hyp_logd = step_mixture_logpdf(mix, tf, x);
      int count = 0;
      for (int i = 0; i < mc_samples; ++i)
        if (sample_logd[i] >= hyp_logd) ++count;
      const double rank = static_cast<double>(count) / mc_samples;
      scores[k] += confidence_from_rank(rank, bins);
    }
  }
  for (double& s : scores) s /= T;
  return scores;
}

HypothesisSet generate(Tape& tape, ParamStore& store, const ModelConfig& cfg,
                       const ForwardVars& fwd, const StepMixture& step_mix,
                       const PrunedWeights& pruned, int k, int conf_samples, int conf_bins,
                       Rng& rng) {
  TRAJCAST_CHECK(k >= pruned.active_count, ErrorCode::InvalidArgument,
                 "generate: K must be >= the active mode count");
  TRAJCAST_CHECK(k <= cfg.max_k, ErrorCode::InvalidArgument,
                 "generate: K exceeds the configured hypothesis cap (max_k)");
  const std::vector<int> quotas = hamilton_allocate(pruned, k);
  HypothesisVars vars = generate_graph(tape, store, cfg, fwd, quotas);

  HypothesisSet out;
  out.k = k;
  out.t_fut = cfg.t_fut;
  out.source_mode = vars.source_mode;
  const Matrix& trajs = tape.val(vars.trajectories);
  out.trajectories.resize(static_cast<std::size_t>(k) * cfg.t_fut * 2);
  for (int h = 0; h < k; ++h)
    for (int tf = 0; tf < cfg.t_fut; ++tf) {
      out.trajectories[(static_cast<std::size_t>(h) * cfg.t_fut + tf) * 2] = trajs(h, 2 * tf);
      out.trajectories[(static_cast<std::size_t>(h) * cfg.t_fut + tf) * 2 + 1] =
          trajs(h, 2 * tf + 1);
    }
  out.confidences = confidence_scores(out, step_mix, conf_samples, conf_bins, rng);
  return out;
}

}  // namespace trajcast
