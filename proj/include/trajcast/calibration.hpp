#pragma once

// Accuracy and calibration metrics: best-of-K displacement errors,
// reliability scores over highest-density-region coverage, a KDE-based
// reliability approximation for sample-only forecasters, and Q-Q table
// emission.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "trajcast/gmm.hpp"
#include "trajcast/hypothesis.hpp"

namespace trajcast {

struct DisplacementResult {
  double min_ade = 0.0;
  double min_fde = 0.0;
  int k_used = 0;
};

DisplacementResult min_ade_fde(const HypothesisSet& hyps, const GroundTruthFuture& gt);

struct CalibrationReport {
  std::vector<double> levels;                  // nominal confidence levels (1 - beta)
  std::vector<std::vector<double>> observed;   // [t_fut][level] observed frequencies
  std::vector<double> per_level_score;         // ratio score averaged over timesteps
  double r_avg = 0.0;
  double r_min = 0.0;
  double dt_seconds = 0.4;
};

// 100 * min(f/l, l/f); 0 when either side is 0.
double ratio_score(double observed, double level);

std::vector<double> default_levels();            // 0.05 .. 0.95, step 0.05
std::vector<double> plot_levels();               // 0.68, 0.95

// Observed HDR coverage per (timestep, level) across scenes; membership via
// MC log-density quantiles with per-scene derived seeds.
CalibrationReport reliability(std::span<const StepMixture> forecasts,
                              std::span<const GroundTruthFuture> gts,
                              const std::vector<double>& levels, int n_mc, std::uint64_t seed,
                              double dt_seconds = 0.4);

// Same report for sample-only forecasts: a Gaussian-kernel density (Scott
// bandwidth, floored) stands in for the predictive mixture; HDR thresholds
// are density quantiles evaluated at the samples themselves.
enum class BandwidthRule { Scott, Silverman };
CalibrationReport kde_reliability(
    const std::vector<std::vector<std::vector<Vec2>>>& sample_forecasts,  // [scene][n][t_fut]
    std::span<const GroundTruthFuture> gts, const std::vector<double>& levels,
    BandwidthRule rule = BandwidthRule::Scott, double dt_seconds = 0.4);

// CSV: "timestep_s,nominal_level,observed_frequency", one row per
// (timestep, level).
void emit_qq(const CalibrationReport& report, const std::string& path);

}  // namespace trajcast
