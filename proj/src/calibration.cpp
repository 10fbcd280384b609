#include "trajcast/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

namespace trajcast {

DisplacementResult min_ade_fde(const HypothesisSet& hyps, const GroundTruthFuture& gt) {
  TRAJCAST_CHECK(hyps.k >= 1, ErrorCode::InvalidArgument, "min_ade_fde: empty hypothesis set");
  TRAJCAST_CHECK(hyps.t_fut == gt.horizon(), ErrorCode::ShapeMismatch,
                 "min_ade_fde: horizon mismatch");
  DisplacementResult res;
  res.k_used = hyps.k;
  res.min_ade = std::numeric_limits<double>::infinity();
  res.min_fde = std::numeric_limits<double>::infinity();
  for (int k = 0; k < hyps.k; ++k) {
    double ade = 0.0;
    for (int tf = 0; tf < hyps.t_fut; ++tf) {
      const double dx = hyps.at(k, tf, 0) - gt.positions[tf].x;
      const double dy = hyps.at(k, tf, 1) - gt.positions[tf].y;
      ade += std::sqrt(dx * dx + dy * dy);
    }
    ade /= hyps.t_fut;
    const int last = hyps.t_fut - 1;
    const double ex = hyps.at(k, last, 0) - gt.positions[last].x;
    const double ey = hyps.at(k, last, 1) - gt.positions[last].y;
    const double fde = std::sqrt(ex * ex + ey * ey);
    res.min_ade = std::min(res.min_ade, ade);
    res.min_fde = std::min(res.min_fde, fde);
  }
  return res;
}

double ratio_score(double observed, double level) {
  if (observed <= 0.0 || level <= 0.0) return 0.0;
  return 100.0 * std::min(observed / level, level / observed);
}

std::vector<double> default_levels() {
  std::vector<double> v;
  for (int i = 1; i <= 19; ++i) v.push_back(0.05 * i);
  return v;
}

std::vector<double> plot_levels() { return {0.68, 0.95}; }

namespace {

CalibrationReport finalize_report(std::vector<std::vector<double>> observed,
                                  const std::vector<double>& levels, double dt_seconds) {
  CalibrationReport rep;
  rep.levels = levels;
  rep.observed = std::move(observed);
  rep.dt_seconds = dt_seconds;
  const int T = static_cast<int>(rep.observed.size());
  rep.per_level_score.resize(levels.size(), 0.0);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    double acc = 0.0;
    for (int tf = 0; tf < T; ++tf) acc += ratio_score(rep.observed[tf][l], levels[l]);
    rep.per_level_score[l] = acc / T;
  }
  rep.r_avg = 0.0;
  rep.r_min = std::numeric_limits<double>::infinity();
  for (double s : rep.per_level_score) {
    rep.r_avg += s;
    rep.r_min = std::min(rep.r_min, s);
  }
  rep.r_avg /= static_cast<double>(rep.per_level_score.size());
  return rep;
}

}  // namespace

CalibrationReport reliability(std::span<const StepMixture> forecasts,
                              std::span<const GroundTruthFuture> gts,
                              const std::vector<double>& levels, int n_mc, std::uint64_t seed,
                              double dt_seconds) {
  TRAJCAST_CHECK(!forecasts.empty(), ErrorCode::InvalidArgument, "reliability: no scenes");
  TRAJCAST_CHECK(forecasts.size() == gts.size(), ErrorCode::ShapeMismatch,
                 "reliability: forecast/gt count mismatch");
  TRAJCAST_CHECK(!levels.empty(), ErrorCode::InvalidArgument, "reliability: no levels");
  const int T = forecasts[0].t_fut();
  const int S = static_cast<int>(forecasts.size());

  std::vector<std::vector<double>> observed(T, std::vector<double>(levels.size(), 0.0));
  std::vector<double> logd;
  for (int s = 0; s < S; ++s) {
    const StepMixture& mix = forecasts[s];
    TRAJCAST_CHECK(mix.t_fut() == T, ErrorCode::ShapeMismatch,
                   "reliability: inconsistent horizons");
    gts[s].validate(T);
    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(s));
    for (int tf = 0; tf < T; ++tf) {
      const std::vector<Vec2> pts = sample_step_mixture(mix, tf, n_mc, rng);
      logd.resize(n_mc);
      for (int i = 0; i < n_mc; ++i) {
        const double x[2] = {pts[i].x, pts[i].y};
        logd[i] = step_mixture_logpdf(mix, tf, x);
      }
      std::sort(logd.begin(), logd.end());
      const double gx[2] = {gts[s].positions[tf].x, gts[s].positions[tf].y};
      const double gt_logd = step_mixture_logpdf(mix, tf, gx);
      for (std::size_t l = 0; l < levels.size(); ++l) {
        const double beta = 1.0 - levels[l];
        const int kq = std::clamp(static_cast<int>(std::floor(beta * n_mc)), 0, n_mc - 1);
        if (gt_logd >= logd[kq]) observed[tf][l] += 1.0;
      }
    }
  }
  for (auto& row : observed)
    for (double& v : row) v /= S;
  return finalize_report(std::move(observed), levels, dt_seconds);
}

// ---------------------------------------------------------------------------
// KDE reliability

namespace {

// Diagonal-bandwidth Gaussian KDE over one timestep's sample cloud. Large
// clouds use a binned fast path: points and queries snap to a (bw/2) grid,
// the separable kernel comes from per-axis tables, and support is truncated
// at 8.5 bandwidths (exp(-36), below double precision against the peak).
// Snapping biases every evaluated density the same way, so quantile
// thresholds and membership tests stay consistent.
class Kde2D {
 public:
  Kde2D(const std::vector<Vec2>& pts, double bw_x, double bw_y)
      : pts_(pts), bwx_(bw_x), bwy_(bw_y) {
    norm_ = 1.0 / (2.0 * M_PI * bwx_ * bwy_ * static_cast<double>(pts.size()));
    if (pts_.size() >= 2048) build_bins();
  }

  double density(const Vec2& q) const {
    if (!binned_) {
      double acc = 0.0;
      for (const auto& p : pts_) {
        const double dx = (q.x - p.x) / bwx_;
        const double dy = (q.y - p.y) / bwy_;
        const double r2 = dx * dx + dy * dy;
        if (r2 < kTrunc * kTrunc) acc += std::exp(-0.5 * r2);
      }
      return acc * norm_;
    }
    const int qi = static_cast<int>(std::floor((q.x - ox_) / (0.5 * bwx_))) - imin_;
    const int qj = static_cast<int>(std::floor((q.y - oy_) / (0.5 * bwy_))) - jmin_;
    double acc = 0.0;
    for (int dj = -kRadiusCells; dj <= kRadiusCells; ++dj) {
      const int j = qj + dj;
      if (j < 0 || j >= nj_) continue;
      const double ky = kernel_[dj + kRadiusCells];
      for (int di = -kRadiusCells; di <= kRadiusCells; ++di) {
        const int i = qi + di;
        if (i < 0 || i >= ni_) continue;
        const double c = counts_[static_cast<std::size_t>(j) * ni_ + i];
        if (c != 0.0) acc += c * ky * kernel_[di + kRadiusCells];
      }
    }
    return acc * norm_;
  }

 private:
  static constexpr double kTrunc = 8.5;
  static constexpr int kRadiusCells = 17;  // 8.5 bw at bw/2 cells

  void build_bins() {
    ox_ = pts_[0].x;
    oy_ = pts_[0].y;
    int imin = 0, imax = 0, jmin = 0, jmax = 0;
    std::vector<std::pair<int, int>> cells(pts_.size());
    for (std::size_t n = 0; n < pts_.size(); ++n) {
      const int i = static_cast<int>(std::floor((pts_[n].x - ox_) / (0.5 * bwx_)));
      const int j = static_cast<int>(std::floor((pts_[n].y - oy_) / (0.5 * bwy_)));
      cells[n] = {i, j};
      imin = std::min(imin, i);
      imax = std::max(imax, i);
      jmin = std::min(jmin, j);
      jmax = std::max(jmax, j);
    }
    const std::int64_t ni = imax - imin + 1, nj = jmax - jmin + 1;
    if (ni * nj > (std::int64_t{1} << 24)) return;  // pathological spread: stay exact
    binned_ = true;
    imin_ = imin;
    jmin_ = jmin;
    ni_ = static_cast<int>(ni);
    nj_ = static_cast<int>(nj);
    counts_.assign(static_cast<std::size_t>(ni) * nj, 0.0);
    for (const auto& [i, j] : cells)
      counts_[static_cast<std::size_t>(j - jmin) * ni_ + (i - imin)] += 1.0;
    kernel_.resize(2 * kRadiusCells + 1);
    for (int d = -kRadiusCells; d <= kRadiusCells; ++d)
      kernel_[d + kRadiusCells] = std::exp(-0.5 * (0.5 * d) * (0.5 * d));
  }

  const std::vector<Vec2>& pts_;
  double bwx_, bwy_, norm_;
  bool binned_ = false;
  double ox_ = 0.0, oy_ = 0.0;
  int imin_ = 0, jmin_ = 0, ni_ = 0, nj_ = 0;
  std::vector<double> counts_;
  std::vector<double> kernel_;
};

void sample_std(const std::vector<Vec2>& pts, double& sx, double& sy) {
  const double n = static_cast<double>(pts.size());
  double mx = 0.0, my = 0.0;
  for (const auto& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0;
  for (const auto& p : pts) {
    vx += (p.x - mx) * (p.x - mx);
    vy += (p.y - my) * (p.y - my);
  }
  sx = std::sqrt(vx / n);
  sy = std::sqrt(vy / n);
}

}  // namespace

CalibrationReport kde_reliability(
    const std::vector<std::vector<std::vector<Vec2>>>& sample_forecasts,
    std::span<const GroundTruthFuture> gts, const std::vector<double>& levels,
    BandwidthRule rule, double dt_seconds) {
  TRAJCAST_CHECK(!sample_forecasts.empty(), ErrorCode::InvalidArgument,
                 "kde_reliability: no scenes");
  TRAJCAST_CHECK(sample_forecasts.size() == gts.size(), ErrorCode::ShapeMismatch,
                 "kde_reliability: forecast/gt count mismatch");
  const int S = static_cast<int>(sample_forecasts.size());
  const int N = static_cast<int>(sample_forecasts[0].size());
  TRAJCAST_CHECK(N >= 100, ErrorCode::InvalidArgument,
                 "kde_reliability: need at least 100 samples per scene");
  const int T = static_cast<int>(sample_forecasts[0][0].size());

  const double bw_floor = std::sqrt(kVarianceFloor);
  const int max_quantile_pts = 512;

  std::vector<std::vector<double>> observed(T, std::vector<double>(levels.size(), 0.0));
  std::vector<Vec2> cloud(N);
  std::vector<double> dens;
  for (int s = 0; s < S; ++s) {
    TRAJCAST_CHECK(static_cast<int>(sample_forecasts[s].size()) == N, ErrorCode::ShapeMismatch,
                   "kde_reliability: inconsistent sample counts");
    gts[s].validate(T);
    for (int tf = 0; tf < T; ++tf) {
      for (int i = 0; i < N; ++i) cloud[i] = sample_forecasts[s][i][tf];
      double sx, sy;
      sample_std(cloud, sx, sy);
      double factor = std::pow(static_cast<double>(N), -1.0 / 6.0);  // Scott, d = 2
      if (rule == BandwidthRule::Silverman)
        factor *= std::pow(4.0 / 4.0, 1.0 / 6.0);  // (4/(d+2))^(1/(d+4)) = 1 at d = 2
      const double bwx = std::max(sx * factor, bw_floor);
      const double bwy = std::max(sy * factor, bw_floor);
      Kde2D kde(cloud, bwx, bwy);

      // density quantiles at the sample points themselves (plug-in HDR)
      const int nq = std::min(N, max_quantile_pts);
      const int hop = N / nq;
      dens.clear();
      for (int i = 0; i < nq; ++i) dens.push_back(kde.density(cloud[i * hop]));
      std::sort(dens.begin(), dens.end());
      const double gt_dens = kde.density(gts[s].positions[tf]);
      for (std::size_t l = 0; l < levels.size(); ++l) {
        const double beta = 1.0 - levels[l];
        const int kq = std::clamp(static_cast<int>(std::floor(beta * nq)), 0, nq - 1);
        if (gt_dens >= dens[kq]) observed[tf][l] += 1.0;
      }
    }
  }
  for (auto& row : observed)
    for (double& v : row) v /= S;
  return finalize_report(std::move(observed), levels, dt_seconds);
}

void emit_qq(const CalibrationReport& report, const std::string& path) {
  std::ofstream out(path);
  TRAJCAST_CHECK(out.good(), ErrorCode::Io, "emit_qq: cannot write " + path);
  out << "timestep_s,nominal_level,observed_frequency\n";
  char buf[96];
  for (std::size_t tf = 0; tf < report.observed.size(); ++tf)
    for (std::size_t l = 0; l < report.levels.size(); ++l) {
      std::snprintf(buf, sizeof buf, "%.3f,%.6g,%.6g\n",
                    (static_cast<double>(tf) + 1.0) * report.dt_seconds, report.levels[l],
                    report.observed[tf][l]);
      out << buf;
    }
  TRAJCAST_CHECK(out.good(), ErrorCode::Io, "emit_qq: short write to " + path);
}

}  // namespace trajcast
