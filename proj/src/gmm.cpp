#include "trajcast/gmm.hpp"

#include <algorithm>
#include <cmath>

namespace trajcast {

namespace {

double logsumexp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace

Gaussian2D Gaussian2D::from_cov(double mx, double my, double sxx, double sxy, double syy) {
  TRAJCAST_CHECK(sxx > 0.0, ErrorCode::InvalidArgument, "covariance: sxx must be positive");
  Gaussian2D g;
  g.mean[0] = mx;
  g.mean[1] = my;
  g.l00 = std::sqrt(sxx);
  g.l10 = sxy / g.l00;
  const double rest = syy - g.l10 * g.l10;
  TRAJCAST_CHECK(rest > 0.0, ErrorCode::InvalidArgument, "covariance is not positive definite");
  g.l11 = std::sqrt(rest);
  return g;
}

void Gaussian2D::validate() const {
  TRAJCAST_CHECK(l00 > 0.0 && l11 > 0.0, ErrorCode::InvalidArgument,
                 "Gaussian2D: factor diagonal must be positive");
  TRAJCAST_CHECK(std::isfinite(mean[0]) && std::isfinite(mean[1]) && std::isfinite(l10),
                 ErrorCode::InvalidArgument, "Gaussian2D: non-finite parameter");
}

double log_density_gaussian2d(const double x[2], const Gaussian2D& g) {
  g.validate();
  const double d0 = x[0] - g.mean[0];
  const double d1 = x[1] - g.mean[1];
  const double y0 = d0 / g.l00;
  const double y1 = (d1 - g.l10 * y0) / g.l11;
  return -kLog2Pi - std::log(g.l00) - std::log(g.l11) - 0.5 * (y0 * y0 + y1 * y1);
}

double mahalanobis_sq(const double x[2], const Gaussian2D& g) {
  g.validate();
  const double d0 = x[0] - g.mean[0];
  const double d1 = x[1] - g.mean[1];
  const double y0 = d0 / g.l00;
  const double y1 = (d1 - g.l10 * y0) / g.l11;
  return y0 * y0 + y1 * y1;
}

Gaussian2D GaussGrid::component(int tf, int m) const {
  Gaussian2D g;
  g.mean[0] = mean_at(tf, m, 0);
  g.mean[1] = mean_at(tf, m, 1);
  g.l00 = factor_at(tf, m, 0);
  g.l10 = factor_at(tf, m, 1);
  g.l11 = factor_at(tf, m, 2);
  return g;
}

void GaussGrid::set_component(int tf, int m, const Gaussian2D& g) {
  mean_at(tf, m, 0) = g.mean[0];
  mean_at(tf, m, 1) = g.mean[1];
  factor_at(tf, m, 0) = g.l00;
  factor_at(tf, m, 1) = g.l10;
  factor_at(tf, m, 2) = g.l11;
}

void GaussGrid::validate() const {
  TRAJCAST_CHECK(t_fut >= 1 && n_modes >= 1, ErrorCode::InvalidArgument,
                 "GaussGrid: need t_fut >= 1 and n_modes >= 1");
  for (int tf = 0; tf < t_fut; ++tf)
    for (int m = 0; m < n_modes; ++m) component(tf, m).validate();
}

void GroundTruthFuture::validate(int expected_t_fut) const {
  TRAJCAST_CHECK(horizon() == expected_t_fut, ErrorCode::ShapeMismatch,
                 "ground-truth horizon does not match mixture horizon");
  for (const auto& p : positions)
    TRAJCAST_CHECK(std::isfinite(p.x) && std::isfinite(p.y), ErrorCode::InvalidArgument,
                   "ground truth contains non-finite values");
}

void StepMixture::validate() const {
  core->validate();
  TRAJCAST_CHECK(weights.size() == static_cast<std::size_t>(core->t_fut) * core->n_modes,
                 ErrorCode::ShapeMismatch, "StepMixture: weight grid shape");
  for (int tf = 0; tf < core->t_fut; ++tf) {
    double s = 0.0;
    for (int m = 0; m < core->n_modes; ++m) {
      TRAJCAST_CHECK(weight(tf, m) >= 0.0, ErrorCode::InvalidArgument,
                     "StepMixture: negative weight");
      s += weight(tf, m);
    }
    TRAJCAST_CHECK(std::abs(s - 1.0) < 1e-6, ErrorCode::InvalidArgument,
                   "StepMixture: weights must sum to 1 per timestep");
  }
}

std::vector<double> AnchorMixture::anchor_mean(int m) const {
  std::vector<double> mu(static_cast<std::size_t>(core->t_fut) * 2);
  for (int tf = 0; tf < core->t_fut; ++tf) {
    mu[2 * tf] = core->mean_at(tf, m, 0);
    mu[2 * tf + 1] = core->mean_at(tf, m, 1);
  }
  return mu;
}

void AnchorMixture::validate() const {
  core->validate();
  TRAJCAST_CHECK(weights.size() == static_cast<std::size_t>(core->n_modes),
                 ErrorCode::ShapeMismatch, "AnchorMixture: weight count");
  double s = 0.0;
  for (double w : weights) {
    TRAJCAST_CHECK(w >= 0.0, ErrorCode::InvalidArgument, "AnchorMixture: negative weight");
    s += w;
  }
  TRAJCAST_CHECK(std::abs(s - 1.0) < 1e-6, ErrorCode::InvalidArgument,
                 "AnchorMixture: weights must sum to 1");
}

StepMixture make_step_mixture(std::shared_ptr<GaussGrid> core, std::vector<double> step_weights) {
  StepMixture mix{std::move(core), std::move(step_weights)};
  mix.validate();
  return mix;
}

AnchorMixture build_anchor_mixture(std::shared_ptr<GaussGrid> core,
                                   std::vector<double> anchor_weights) {
  AnchorMixture mix{std::move(core), std::move(anchor_weights)};
  mix.validate();
  return mix;
}

double step_mixture_logpdf(const StepMixture& mix, int tf, const double x[2]) {
  TRAJCAST_CHECK(tf >= 0 && tf < mix.t_fut(), ErrorCode::IndexOutOfRange,
                 "step_mixture_logpdf: timestep out of range");
  const int M = mix.n_modes();
  std::vector<double> terms(M);
  for (int m = 0; m < M; ++m)
    terms[m] = std::log(mix.weight(tf, m)) + log_density_gaussian2d(x, mix.core->component(tf, m));
  return logsumexp(terms);
}

StepNllResult step_nll(const StepMixture& mix, const GroundTruthFuture& gt) {
  gt.validate(mix.t_fut());
  StepNllResult res;
  res.per_timestep.resize(mix.t_fut());
  for (int tf = 0; tf < mix.t_fut(); ++tf) {
    const double x[2] = {gt.positions[tf].x, gt.positions[tf].y};
    res.per_timestep[tf] = -step_mixture_logpdf(mix, tf, x);
    res.sum += res.per_timestep[tf];
  }
  return res;
}

double anchor_nll(const AnchorMixture& mix, const GroundTruthFuture& gt) {
  gt.validate(mix.t_fut());
  const int M = mix.n_modes();
  std::vector<double> terms(M);
  for (int m = 0; m < M; ++m) {
    double acc = std::log(mix.weights[m]);
    for (int tf = 0; tf < mix.t_fut(); ++tf) {
      const double x[2] = {gt.positions[tf].x, gt.positions[tf].y};
      acc += log_density_gaussian2d(x, mix.core->component(tf, m));
    }
    terms[m] = acc;
  }
  return -logsumexp(terms);
}

std::vector<Vec2> sample_step_mixture(const StepMixture& mix, int tf, int n, Rng& rng,
                                      std::vector<int>* components) {
  TRAJCAST_CHECK(n >= 1, ErrorCode::InvalidArgument, "sample_step_mixture: n >= 1");
  TRAJCAST_CHECK(tf >= 0 && tf < mix.t_fut(), ErrorCode::IndexOutOfRange,
                 "sample_step_mixture: timestep out of range");
  const int M = mix.n_modes();
  std::span<const double> w(mix.weights.data() + static_cast<std::size_t>(tf) * M, M);
  std::vector<Vec2> out(n);
  if (components) components->resize(n);
  for (int i = 0; i < n; ++i) {
    const int m = rng.categorical(w);
    const Gaussian2D g = mix.core->component(tf, m);
    const double e0 = rng.normal();
    const double e1 = rng.normal();
    out[i] = {g.mean[0] + g.l00 * e0, g.mean[1] + g.l10 * e0 + g.l11 * e1};
    if (components) (*components)[i] = m;
  }
  return out;
}

double quantile_log_threshold(const StepMixture& mix, int tf, double beta, int n, Rng& rng) {
  TRAJCAST_CHECK(beta > 0.0 && beta < 1.0, ErrorCode::InvalidArgument,
                 "quantile_log_threshold: beta in (0,1)");
  TRAJCAST_CHECK(n >= 100, ErrorCode::InvalidArgument, "quantile_log_threshold: n >= 100");
  const std::vector<Vec2> pts = sample_step_mixture(mix, tf, n, rng);
  std::vector<double> logd(n);
  for (int i = 0; i < n; ++i) {
    const double x[2] = {pts[i].x, pts[i].y};
    logd[i] = step_mixture_logpdf(mix, tf, x);
  }
  int k = static_cast<int>(std::floor(beta * n));
  k = std::clamp(k, 0, n - 1);
  std::nth_element(logd.begin(), logd.begin() + k, logd.end());
  return logd[k];
}

bool coverage_indicator(const StepMixture& mix, int tf, const double x[2], double level, int n,
                        Rng& rng) {
  TRAJCAST_CHECK(level > 0.0 && level < 1.0, ErrorCode::InvalidArgument,
                 "coverage_indicator: level in (0,1)");
  const double gamma = quantile_log_threshold(mix, tf, 1.0 - level, n, rng);
  return step_mixture_logpdf(mix, tf, x) >= gamma;
}

}  // namespace trajcast
