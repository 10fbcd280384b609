#include "trajcast/pruning.hpp"

#include <algorithm>
#include <cmath>

namespace trajcast {

namespace {
double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
constexpr double kSnapFloor = 1e-12;  // gated weights below this are exact zeros
}  // namespace

void PruningSchedule::validate() const {
  TRAJCAST_CHECK(delta_0 >= 0.0 && delta_0 < 1.0 && delta_f >= 0.0 && delta_f < 1.0,
                 ErrorCode::InvalidArgument, "PruningSchedule: deltas in [0,1)");
  TRAJCAST_CHECK(delta_0 <= delta_f, ErrorCode::InvalidArgument,
                 "PruningSchedule: delta_0 <= delta_f");
  TRAJCAST_CHECK(eta_0 > 0.0 && eta_f > 0.0 && eta_f <= eta_0, ErrorCode::InvalidArgument,
                 "PruningSchedule: eta_f <= eta_0, both positive");
  TRAJCAST_CHECK(total_epochs >= 1, ErrorCode::InvalidArgument, "PruningSchedule: E >= 1");
}

double threshold_at(const PruningSchedule& sched, int epoch) {
  sched.validate();
  TRAJCAST_CHECK(epoch >= 1 && epoch <= sched.total_epochs, ErrorCode::InvalidArgument,
                 "threshold_at: epoch out of [1, E]");
  const double frac = static_cast<double>(epoch) / sched.total_epochs;
  return sched.delta_0 + (sched.delta_f - sched.delta_0) * frac;
}

double sharpness_at(const PruningSchedule& sched, int epoch) {
  sched.validate();
  TRAJCAST_CHECK(epoch >= 1 && epoch <= sched.total_epochs, ErrorCode::InvalidArgument,
                 "sharpness_at: epoch out of [1, E]");
  const double frac = static_cast<double>(epoch) / sched.total_epochs;
  return sched.eta_0 + (sched.eta_f - sched.eta_0) * frac;
}

PrunedWeights gate_weights(std::span<const double> alpha, const PruningSchedule& sched,
                           int epoch) {
  const int M = static_cast<int>(alpha.size());
  TRAJCAST_CHECK(M >= 1, ErrorCode::InvalidArgument, "gate_weights: empty weight vector");
  const double delta = threshold_at(sched, epoch);
  const double eta = sharpness_at(sched, epoch);

  int argmax = 0;
  for (int m = 1; m < M; ++m)
    if (alpha[m] > alpha[argmax]) argmax = m;

  PrunedWeights out;
  out.weights.resize(M, 0.0);
  out.active_mask.assign(M, false);

  double total = 0.0;
  for (int m = 0; m < M; ++m) {
    out.weights[m] = sigmoid((alpha[m] - delta) / eta) * alpha[m];
    total += out.weights[m];
  }
  if (total < kSnapFloor) {
    // Every gate closed; keep the dominant mode alone.
    std::fill(out.weights.begin(), out.weights.end(), 0.0);
    out.weights[argmax] = 1.0;
  } else {
    for (int m = 0; m < M; ++m) {
      out.weights[m] /= total;
      if (out.weights[m] < kSnapFloor) out.weights[m] = 0.0;
    }
    double renorm = 0.0;
    for (double w : out.weights) renorm += w;
    for (double& w : out.weights) w /= renorm;
  }

  for (int m = 0; m < M; ++m) out.active_mask[m] = out.weights[m] > delta;
  out.active_mask[argmax] = true;
  out.active_count = static_cast<int>(std::count(out.active_mask.begin(), out.active_mask.end(), true));
  return out;
}

ad::Var gate_weights_graph(ad::Var weight_logits, double delta, double eta) {
  using namespace ad;
  Var alpha = softmax_rows(weight_logits);  // 1xM
  Var gate = sigmoid(scale(add_scalar(alpha, -delta), 1.0 / eta));
  Var gated = mul(alpha, gate);
  Var total = sum(gated);
  return div(gated, total);
}

}  // namespace trajcast
