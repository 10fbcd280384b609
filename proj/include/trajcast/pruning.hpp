#pragma once

// Epoch-scheduled soft-to-hard pruning of mixture modes. A sigmoid gate
// filters each weight against a rising threshold delta(e); gated weights
// renormalize, and modes above the threshold stay active. The largest-weight
// mode is always kept so at least one anchor survives.

#include <vector>

#include "trajcast/ad.hpp"
#include "trajcast/common.hpp"

namespace trajcast {

struct PruningSchedule {
  double delta_0 = 0.01;
  double delta_f = 0.10;
  double eta_0 = 0.1;
  double eta_f = 0.001;
  int total_epochs = 1;

  void validate() const;
};

struct PrunedWeights {
  std::vector<double> weights;    // gated, renormalized; exact 0 for hard-pruned modes
  std::vector<bool> active_mask;
  int active_count = 0;
};

// delta(e) = delta_0 + (delta_f - delta_0) * e / E, for e in [1, E].
double threshold_at(const PruningSchedule& sched, int epoch);

// eta anneals with the same linear form as delta.
double sharpness_at(const PruningSchedule& sched, int epoch);

PrunedWeights gate_weights(std::span<const double> alpha, const PruningSchedule& sched, int epoch);

// Soft gate on the tape, for gradient flow through the weight logits:
// alpha = softmax(logits), G = sigmoid((alpha - delta)/eta),
// result = G.*alpha / sum(G.*alpha). No hard snapping.
ad::Var gate_weights_graph(ad::Var weight_logits, double delta, double eta);

}  // namespace trajcast
