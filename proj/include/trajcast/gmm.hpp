#pragma once

// Closed-form 2D Gaussian and Gaussian-mixture math: densities, NLLs,
// sampling, Monte-Carlo log-density quantiles and highest-density-region
// membership. Two mixture views share one parameter grid:
//   - StepMixture: independent 2D mixture per future timestep,
//   - AnchorMixture: joint mixture over whole trajectories, block-diagonal
//     per mode, whose mode means are the stacked per-timestep means.

#include <memory>
#include <span>
#include <vector>

#include "trajcast/common.hpp"

namespace trajcast {

// 2D Gaussian stored via a lower-triangular covariance factor
//   L = [l00 0; l10 l11],  Sigma = L L^T,  l00, l11 > 0.
struct Gaussian2D {
  double mean[2] = {0.0, 0.0};
  double l00 = 1.0, l10 = 0.0, l11 = 1.0;

  static Gaussian2D from_cov(double mx, double my, double sxx, double sxy, double syy);
  void validate() const;
  double det_cov() const { return l00 * l00 * l11 * l11; }
  // Sigma entries
  double cov_xx() const { return l00 * l00; }
  double cov_xy() const { return l00 * l10; }
  double cov_yy() const { return l10 * l10 + l11 * l11; }
};

double log_density_gaussian2d(const double x[2], const Gaussian2D& g);
double mahalanobis_sq(const double x[2], const Gaussian2D& g);

// Shared core parameters for both mixture views: a T_fut x M grid of
// means/factors, row-major (tf * M + m). Mutations are visible through
// every mixture holding the grid.
struct GaussGrid {
  int t_fut = 0;
  int n_modes = 0;
  std::vector<double> means;    // (t_fut*n_modes) x 2
  std::vector<double> factors;  // (t_fut*n_modes) x 3 = (l00, l10, l11)

  GaussGrid() = default;
  GaussGrid(int t, int m)
      : t_fut(t), n_modes(m), means(static_cast<std::size_t>(t) * m * 2, 0.0),
        factors(static_cast<std::size_t>(t) * m * 3, 0.0) {
    for (int i = 0; i < t * m; ++i) {
      factors[3 * i] = 1.0;
      factors[3 * i + 2] = 1.0;
    }
  }

  double& mean_at(int tf, int m, int axis) { return means[(static_cast<std::size_t>(tf) * n_modes + m) * 2 + axis]; }
  double mean_at(int tf, int m, int axis) const { return means[(static_cast<std::size_t>(tf) * n_modes + m) * 2 + axis]; }
  double& factor_at(int tf, int m, int k) { return factors[(static_cast<std::size_t>(tf) * n_modes + m) * 3 + k]; }
  double factor_at(int tf, int m, int k) const { return factors[(static_cast<std::size_t>(tf) * n_modes + m) * 3 + k]; }
  Gaussian2D component(int tf, int m) const;
  void set_component(int tf, int m, const Gaussian2D& g);
  void validate() const;
};

struct GroundTruthFuture {
  std::vector<Vec2> positions;  // length T_fut
  int horizon() const { return static_cast<int>(positions.size()); }
  void validate(int expected_t_fut) const;
};

struct StepMixture {
  std::shared_ptr<GaussGrid> core;
  std::vector<double> weights;  // t_fut x n_modes, row-major, each row sums to 1

  int t_fut() const { return core->t_fut; }
  int n_modes() const { return core->n_modes; }
  double weight(int tf, int m) const { return weights[static_cast<std::size_t>(tf) * core->n_modes + m]; }
  void validate() const;
};

struct AnchorMixture {
  std::shared_ptr<GaussGrid> core;
  std::vector<double> weights;  // n_modes, sums to 1

  int t_fut() const { return core->t_fut; }
  int n_modes() const { return core->n_modes; }
  // mu_hat[m]: stacked per-timestep means, length 2*t_fut.
  std::vector<double> anchor_mean(int m) const;
  void validate() const;
};

StepMixture make_step_mixture(std::shared_ptr<GaussGrid> core, std::vector<double> step_weights);

// Stacks the shared grid into the joint trajectory-space view. anchor_weights
// must already be normalized (softmax output).
AnchorMixture build_anchor_mixture(std::shared_ptr<GaussGrid> core,
                                   std::vector<double> anchor_weights);

double step_mixture_logpdf(const StepMixture& mix, int tf, const double x[2]);

struct StepNllResult {
  std::vector<double> per_timestep;
  double sum = 0.0;
};
StepNllResult step_nll(const StepMixture& mix, const GroundTruthFuture& gt);

double anchor_nll(const AnchorMixture& mix, const GroundTruthFuture& gt);

// Categorical draw over the timestep's weights, then a factor-transformed
// normal draw. Optionally reports the chosen component per sample.
std::vector<Vec2> sample_step_mixture(const StepMixture& mix, int tf, int n, Rng& rng,
                                      std::vector<int>* components = nullptr);

// Empirical beta-lower quantile of log-densities of n draws from the mixture:
// a fraction (1 - beta) of probability mass has log-density >= the result.
double quantile_log_threshold(const StepMixture& mix, int tf, double beta, int n, Rng& rng);

// Membership of x in the `level`-mass highest-density region, decided against
// quantile_log_threshold at beta = 1 - level.
bool coverage_indicator(const StepMixture& mix, int tf, const double x[2], double level, int n,
                        Rng& rng);

}  // namespace trajcast
