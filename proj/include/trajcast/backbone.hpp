#pragma once

// Parameter-space denoising backbone: a latent state is refined for T_diff
// steps by residual blocks whose activations are feature-wise modulated by
// the scene context and a sinusoidal step embedding; three heads then emit
// the shared Gaussian grid, per-timestep weight logits and anchor weight
// logits. A direct feed-forward backbone (`use_diffusion = false`) is a
// drop-in alternative behind the same interface.

#include <cstdint>
#include <vector>

#include "trajcast/ad.hpp"
#include "trajcast/data.hpp"
#include "trajcast/encoders.hpp"
#include "trajcast/gmm.hpp"

namespace trajcast {

struct ModelConfig {
  int t_hist = 8;
  int t_fut = 12;
  int n_modes = 3;
  EncoderDims enc;
  int latent_dim = 64;
  int diffusion_steps = 10;
  int tau_embed_dim = 32;
  int film_hidden = 128;
  int head_hidden = 128;
  int scale_feat_dim = 32;
  int residual_hidden = 64;
  int max_k = 20;  // residual decoder emits max_k - 1 patterns per mode
  double lambda_step = 1.0;
  double lambda_anchor = 0.05;
  bool use_diffusion = true;
  bool per_step_noise = false;
  bool full_cov = true;
  int grid_size = 64;
  double grid_radius = 10.0;

  int context_dim() const { return enc.d_temporal + enc.d_spatial; }
  void validate() const;
};

// Registers every model parameter family (encoders + backbone + heads +
// residual decoder) under stable names.
void init_model_params(ad::ParamStore& store, const ModelConfig& cfg, Rng& rng);

struct FilmMod {
  ad::Var scale;  // 1 + residual; identity when the film output layer is zero
  ad::Var shift;
};

FilmMod film_modulate(ad::Tape& tape, ad::ParamStore& store, const ModelConfig& cfg,
                      ad::Var h_context, int tau);

ad::Var denoise_step(ad::Tape& tape, ad::ParamStore& store, const ModelConfig& cfg, ad::Var z,
                     const FilmMod& mod);

// z_0 ~ N(0, I); T_diff modulated refinements. `trace`, when given, receives
// all T_diff + 1 states.
ad::Var run_chain(ad::Tape& tape, ad::ParamStore& store, const ModelConfig& cfg, ad::Var h_context,
                  Rng& rng, std::vector<ad::Var>* trace = nullptr);

struct CoreParamVars {
  ad::Var means;          // (t_fut*n_modes) x 2
  ad::Var factors;        // (t_fut*n_modes) x 3, post-activation
  ad::Var step_logits;    // t_fut x n_modes
  ad::Var anchor_logits;  // 1 x n_modes
};

CoreParamVars decode_heads(ad::Tape& tape, ad::ParamStore& store, const ModelConfig& cfg,
                           ad::Var z_final);

struct ForwardVars {
  ContextVars ctx;
  CoreParamVars core;
};

// Full conditional forward: encoders -> context -> backbone -> heads.
ForwardVars model_forward(ad::Tape& tape, ad::ParamStore& store, const ModelConfig& cfg,
                          const SceneSample& scene, Rng& chain_rng);

ad::Var prob_loss_graph(ad::Tape& tape, const CoreParamVars& core, const ad::Matrix& gt,
                        double lambda_step, double lambda_anchor);

// Plain-side view of the decoded parameters; both mixtures share one grid.
struct MixturePair {
  StepMixture step;
  AnchorMixture anchor;
};
MixturePair extract_mixtures(const ad::Tape& tape, const CoreParamVars& core,
                             const ModelConfig& cfg);

double prob_loss(const StepMixture& step, const AnchorMixture& anchor,
                 const GroundTruthFuture& gt, double lambda_step, double lambda_anchor);

// Ground truth as the t_fut x 2 matrix consumed by the fused NLL ops.
ad::Matrix gt_matrix(const GroundTruthFuture& gt);

}  // namespace trajcast
