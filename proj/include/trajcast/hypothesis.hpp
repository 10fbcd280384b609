#pragma once

// Discrete confidence-scored trajectory hypotheses from the anchor mixture:
// Hamilton largest-remainder quota per active mode, affine reparameterization
// hypothesis = anchor mean + sigma_hat * standardized residual pattern,
// the three-term hypothesis loss (MSE / soft winner-takes-all / confidence
// hinge), and Monte-Carlo percentile confidence scores.

#include <vector>

#include "trajcast/backbone.hpp"
#include "trajcast/gmm.hpp"
#include "trajcast/pruning.hpp"

namespace trajcast {

struct HypothesisSet {
  int k = 0;
  int t_fut = 0;
  std::vector<double> trajectories;  // k x t_fut x 2, row-major
  std::vector<double> confidences;   // k, in [0, 1]
  std::vector<int> source_mode;      // k

  double at(int hyp, int tf, int axis) const {
    return trajectories[(static_cast<std::size_t>(hyp) * t_fut + tf) * 2 + axis];
  }
};

struct HypoLossWeights {
  double lambda_mse = 1.0;
  double lambda_wta = 1.0;
  double lambda_conf = 0.1;
  double beta = 0.05;  // confidence-region tail mass for the hinge
  double wta_temp_start = 1.0;
  double wta_temp_end = 0.05;

  void validate() const;
  // geometric annealing over epochs 1..total
  double wta_temperature(int epoch, int total_epochs) const;
};

// sigma_hat = sqrt(mean of all 2*T diagonal covariance entries).
double sigma_scale(const std::vector<Gaussian2D>& blocks);

// Largest-remainder apportionment of K slots over active modes, one slot
// guaranteed each; returns per-mode quotas (0 for pruned modes), sum == K.
std::vector<int> hamilton_allocate(const PrunedWeights& pruned, int k);

// --- tape-side generation ---------------------------------------------------

// Per-mode rows of the (T*M) grid for mode m.
ad::Var mode_rows(ad::Var grid_matrix, int n_modes, int mode, int t_fut, int width);

// Standardized residual bundle for one mode: (q_m - 1) x 2T (empty Var when
// q_m == 1). Standardization: zero mean (bundles of >= 2) and unit RMS per
// coordinate across the bundle.
ad::Var decode_residuals_graph(ad::Tape& tape, ad::ParamStore& store, const ModelConfig& cfg,
                               ad::Var mode_diag_vars, ad::Var h_temporal, ad::Var h_social,
                               int q_m);

struct HypothesisVars {
  ad::Var trajectories;          // K x 2T
  std::vector<int> source_mode;  // K
};

// Quota-routed reparameterized hypotheses for every active mode. Quotas are
// integers fixed outside the tape (stop-gradient routing).
HypothesisVars generate_graph(ad::Tape& tape, ad::ParamStore& store, const ModelConfig& cfg,
                              const ForwardVars& fwd, const std::vector<int>& quotas);

// Pre-drawn Monte-Carlo material for the confidence hinge: component rows and
// reparameterization noise per timestep, drawn from the current mixture and
// then held fixed for the step.
struct ConfDraws {
  std::vector<std::vector<int>> rows;   // [t_fut][n] grid rows
  std::vector<ad::Matrix> eps;          // [t_fut] n x 2
  int quantile_index = 0;               // floor(beta * n)
};
ConfDraws make_conf_draws(const StepMixture& mix, double beta, int n, Rng& rng);

ad::Var hypo_loss_graph(ad::Tape& tape, const ModelConfig& cfg, const CoreParamVars& core,
                        const HypothesisVars& hyps, const ad::Matrix& gt,
                        const HypoLossWeights& weights, double wta_temperature,
                        const ConfDraws& draws);

// --- plain-side scoring -----------------------------------------------------

double confidence_from_rank(double rank, int bins);

// MC-percentile confidence per hypothesis under the step mixture
// (I samples, J equal-width bins, averaged over timesteps).
std::vector<double> confidence_scores(const HypothesisSet& hyps, const StepMixture& mix,
                                      int mc_samples, int bins, Rng& rng);

// Full plain generation: builds the hypothesis graph on `tape` (values only),
// attaches confidences.
HypothesisSet generate(ad::Tape& tape, ad::ParamStore& store, const ModelConfig& cfg,
                       const ForwardVars& fwd, const StepMixture& step_mix,
                       const PrunedWeights& pruned, int k, int conf_samples, int conf_bins,
                       Rng& rng);

}  // namespace trajcast
