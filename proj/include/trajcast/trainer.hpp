#pragma once

// Training orchestration (decoupled-weight-decay adaptive moments, cosine
// learning rate, joint probabilistic + hypothesis loss, per-epoch mode
// pruning), plus evaluation, calibration and synthetic-corpus commands.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "trajcast/backbone.hpp"
#include "trajcast/calibration.hpp"
#include "trajcast/config.hpp"
#include "trajcast/data.hpp"
#include "trajcast/hypothesis.hpp"
#include "trajcast/pruning.hpp"

namespace trajcast {

struct OptimConfig {
  double lr_base = 1e-3;
  double lr_min = 1e-5;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

double cosine_lr(const OptimConfig& opt, std::int64_t step, std::int64_t total_steps);

// One decoupled-weight-decay adaptive-moment update from the accumulated
// gradients in the store.
void adamw_step(ad::ParamStore& store, const OptimConfig& opt, double lr, std::int64_t t);

struct TrainSetup {
  ModelConfig model;
  PruningSchedule prune;
  HypoLossWeights hypo;
  OptimConfig optim;
  int epochs = 50;
  int batch_size = 32;
  std::uint64_t seed = 1;
  bool dynamic_horizon = true;
  int threads = 1;
  int conf_samples_train = 256;
  int k = 20;
  int conf_samples_eval = 1000;
  int conf_bins = 100;
  int calib_mc = 4096;
  std::vector<double> calib_levels;
  std::string train_path;
  std::string eval_path;
  int stride = 1;
  int decimation = 1;
  double rate_hz = 2.5;
  int checkpoint_every = 0;  // epochs; 0 = final only
  int eval_obs_len = 8;
  int eval_repeat = 1;
};

ModelConfig model_from_config(const KvConfig& kv);
TrainSetup setup_from_config(const KvConfig& kv);
// Serialized effective configuration (key = value lines) for checkpoints
// and manifests.
std::string config_snapshot(const KvConfig& kv);

// Model = config + parameter store; prune schedule rides along for
// inference-time gating.
class Forecaster {
 public:
  Forecaster(const ModelConfig& cfg, const PruningSchedule& prune, std::uint64_t init_seed);
  static Forecaster from_checkpoint(const std::string& path);

  const ModelConfig& config() const { return cfg_; }
  const PruningSchedule& prune_schedule() const { return prune_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  int trained_epochs() const { return trained_epochs_; }
  void set_trained_epochs(int e) { trained_epochs_ = e; }
  const std::string& config_text() const { return config_text_; }
  void set_config_text(std::string text) { config_text_ = std::move(text); }
  // MC budget for hypothesis confidence scoring.
  void set_confidence_mc(int samples, int bins) {
    conf_samples_ = samples;
    conf_bins_ = bins;
  }

  struct Prediction {
    MixturePair mixtures;
    PrunedWeights pruned;
    HypothesisSet hyps;
  };
  // Full pipeline on one ego-frame scene. Gating uses the end-of-schedule
  // epoch unless `epoch` is given.
  Prediction predict(const SceneSample& scene, int k, std::uint64_t seed,
                     std::optional<int> epoch = std::nullopt);
  MixturePair predict_mixtures(const SceneSample& scene, std::uint64_t seed);

 private:
  ModelConfig cfg_;
  PruningSchedule prune_;
  ad::ParamStore params_;
  int trained_epochs_ = 0;
  int conf_samples_ = 1000;
  int conf_bins_ = 100;
  std::string config_text_;
};

struct TrainOutcome {
  std::string checkpoint_path;
  std::string manifest_path;
  std::vector<double> epoch_loss;
  int epochs_run = 0;
  bool nan_abort = false;
};

using ProgressFn = std::function<void(int epoch, int total, double loss)>;

TrainOutcome train(const KvConfig& kv, const std::string& out_dir,
                   const ProgressFn& progress = nullptr);

struct EvalOutcome {
  double min_ade = 0.0;
  double min_fde = 0.0;
  int scenes = 0;
  int k = 0;
  int obs_len = 0;
  std::vector<double> per_run_ade;
  std::vector<double> per_run_fde;
};

EvalOutcome evaluate_model(Forecaster& model, const std::vector<SceneSample>& scenes, int k,
                           int obs_len, int repeat, std::uint64_t seed,
                           const std::string& metrics_json_path = "",
                           const std::string& hypotheses_jsonl_path = "");

CalibrationReport calibrate_model(Forecaster& model, const std::vector<SceneSample>& scenes,
                                  const std::vector<double>& levels, int n_mc, std::uint64_t seed,
                                  double dt_seconds, const std::string& out_dir = "");

OracleScenario scenario_from_config(const KvConfig& kv);
void synth_command(const KvConfig& kv, int n_scenes, std::uint64_t seed,
                   const std::string& out_dir);

// Scene-level loss graph shared by training and the gradient test suite.
struct SceneLossParts {
  ad::Var total;
  double prob_value = 0.0;
  double hypo_value = 0.0;
};
SceneLossParts build_scene_loss(ad::Tape& tape, ad::ParamStore& store, const TrainSetup& setup,
                                const SceneSample& scene, int epoch, Rng& scene_rng);

}  // namespace trajcast
