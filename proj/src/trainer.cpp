#include "trajcast/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "trajcast/checkpoint.hpp"

#ifndef TRAJCAST_GIT_REV
#define TRAJCAST_GIT_REV "unknown"
#endif

namespace trajcast {

namespace fs = std::filesystem;
using nlohmann::json;
using ad::Matrix;
using ad::ParamStore;
using ad::Tape;
using ad::Var;

// ---------------------------------------------------------------------------
// Optimizer

double cosine_lr(const OptimConfig& opt, std::int64_t step, std::int64_t total_steps) {
  if (total_steps <= 1) return opt.lr_base;
  const double frac = std::clamp(static_cast<double>(step) / (total_steps - 1), 0.0, 1.0);
  return opt.lr_min + 0.5 * (opt.lr_base - opt.lr_min) * (1.0 + std::cos(M_PI * frac));
}

void adamw_step(ParamStore& store, const OptimConfig& opt, double lr, std::int64_t t) {
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& e = store.entry(static_cast<int>(i));
    if (e.decay && opt.weight_decay > 0.0) e.value -= (lr * opt.weight_decay) * e.value;
    e.m = opt.beta1 * e.m + (1.0 - opt.beta1) * e.grad;
    e.v = opt.beta2 * e.v + (1.0 - opt.beta2) * e.grad.cwiseProduct(e.grad);
    const Matrix mhat = e.m / bc1;
    const Matrix vhat = e.v / bc2;
    e.value -= lr * (mhat.array() / (vhat.array().sqrt() + opt.eps)).matrix();
  }
}

// ---------------------------------------------------------------------------
// Configuration plumbing

ModelConfig model_from_config(const KvConfig& kv) {
  ModelConfig m;
  m.t_hist = kv.get_int("model.t_hist", 8);
  m.t_fut = kv.get_int("model.t_fut", 12);
  m.n_modes = kv.get_int("model.modes", 3);
  m.enc.d_temporal = kv.get_int("model.d_temporal", 64);
  m.enc.d_spatial = kv.get_int("model.d_spatial", 64);
  m.latent_dim = kv.get_int("model.latent_dim", 64);
  m.diffusion_steps = kv.get_int("model.diffusion_steps", 10);
  const std::string backbone = kv.get_str("model.backbone", "diffusion");
  if (backbone == "diffusion") {
    m.use_diffusion = true;
  } else if (backbone == "mlp") {
    m.use_diffusion = false;
  } else {
    fail(ErrorCode::Parse, "model.backbone must be 'diffusion' or 'mlp'");
  }
  m.per_step_noise = kv.get_bool("model.per_step_noise", false);
  m.full_cov = kv.get_bool("model.full_cov", true);
  m.grid_size = kv.get_int("model.grid_size", 64);
  m.grid_radius = kv.get_double("model.grid_radius", 10.0);
  m.max_k = kv.get_int("model.max_k", 20);
  m.lambda_step = kv.get_double("loss.lambda_step", 1.0);
  m.lambda_anchor = kv.get_double("loss.lambda_anchor", 0.05);
  m.validate();
  return m;
}

namespace {

PruningSchedule prune_from_config(const KvConfig& kv, int epochs) {
  PruningSchedule p;
  p.delta_0 = kv.get_double("prune.delta0", 0.01);
  p.delta_f = kv.get_double("prune.delta_f", 0.10);
  p.eta_0 = kv.get_double("prune.eta0", 0.1);
  p.eta_f = kv.get_double("prune.eta_f", 0.001);
  p.total_epochs = std::max(epochs, 1);
  p.validate();
  return p;
}

}  // namespace

TrainSetup setup_from_config(const KvConfig& kv) {
  TrainSetup s;
  s.model = model_from_config(kv);
  s.epochs = kv.get_int("train.epochs", 50);
  s.prune = prune_from_config(kv, s.epochs);
  s.hypo.lambda_mse = kv.get_double("loss.lambda_mse", 1.0);
  s.hypo.lambda_wta = kv.get_double("loss.lambda_wta", 1.0);
  s.hypo.lambda_conf = kv.get_double("loss.lambda_conf", 0.1);
  s.hypo.beta = kv.get_double("loss.beta", 0.05);
  s.hypo.wta_temp_start = kv.get_double("loss.wta_temp_start", 1.0);
  s.hypo.wta_temp_end = kv.get_double("loss.wta_temp_end", 0.05);
  s.hypo.validate();
  s.optim.lr_base = kv.get_double("train.lr_base", 1e-3);
  s.optim.lr_min = kv.get_double("train.lr_min", 1e-5);
  s.optim.weight_decay = kv.get_double("train.weight_decay", 1e-4);
  s.optim.beta1 = kv.get_double("train.beta1", 0.9);
  s.optim.beta2 = kv.get_double("train.beta2", 0.999);
  s.batch_size = kv.get_int("train.batch_size", 32);
  s.seed = kv.get_u64("train.seed", 1);
  s.dynamic_horizon = kv.get_bool("train.dynamic_horizon", true);
  s.threads = kv.get_int("train.threads", 1);
  s.conf_samples_train = kv.get_int("train.conf_samples", 256);
  s.checkpoint_every = kv.get_int("train.checkpoint_every", 0);
  s.k = kv.get_int("hypo.k", 20);
  s.conf_samples_eval = kv.get_int("hypo.conf_samples", 1000);
  s.conf_bins = kv.get_int("hypo.conf_bins", 100);
  s.calib_mc = kv.get_int("calib.mc_samples", 4096);
  s.calib_levels = kv.get_list("calib.levels", default_levels());
  s.train_path = kv.get_str("data.train", "");
  s.eval_path = kv.get_str("data.eval", "");
  s.stride = kv.get_int("data.stride", 1);
  s.decimation = kv.get_int("data.decimation", 1);
  s.rate_hz = kv.get_double("data.rate_hz", 2.5);
  const std::string units = kv.get_str("data.units", "meters");
  TRAJCAST_CHECK(units == "meters", ErrorCode::InvalidArgument,
                 "data.units: only 'meters' is supported by the bundled parsers (pixel-space "
                 "corpora need external conversion)");
  s.eval_obs_len = kv.get_int("eval.obs_len", 8);
  s.eval_repeat = kv.get_int("eval.repeat", 1);
  TRAJCAST_CHECK(s.epochs >= 0 && s.batch_size >= 1, ErrorCode::InvalidArgument,
                 "train.epochs >= 0, train.batch_size >= 1");
  TRAJCAST_CHECK(s.threads >= 1, ErrorCode::InvalidArgument, "train.threads >= 1");
  TRAJCAST_CHECK(s.k >= 1 && s.k <= s.model.max_k, ErrorCode::InvalidArgument,
                 "hypo.k must be in [1, model.max_k]");
  return s;
}

std::string config_snapshot(const KvConfig& kv) {
  std::string out;
  for (const auto& [k, v] : kv.effective()) out += k + " = " + v + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Forecaster

Forecaster::Forecaster(const ModelConfig& cfg, const PruningSchedule& prune,
                       std::uint64_t init_seed)
    : cfg_(cfg), prune_(prune) {
  Rng rng(init_seed);
  init_model_params(params_, cfg_, rng);
}

Forecaster Forecaster::from_checkpoint(const std::string& path) {
  const CheckpointState st = peek_checkpoint(path);
  KvConfig kv = KvConfig::from_string(st.config_text);
  const ModelConfig cfg = model_from_config(kv);
  const PruningSchedule prune = prune_from_config(kv, kv.get_int("train.epochs", 1));
  Forecaster model(cfg, prune, 0);
  const CheckpointState loaded = load_checkpoint(path, model.params_);
  model.trained_epochs_ = loaded.epoch;
  model.config_text_ = loaded.config_text;
  return model;
}

Forecaster::Prediction Forecaster::predict(const SceneSample& scene, int k, std::uint64_t seed,
                                           std::optional<int> epoch) {
  const int e = std::clamp(epoch.value_or(prune_.total_epochs), 1, prune_.total_epochs);
  Tape tape;
  Rng rng(seed);
  ForwardVars fwd = model_forward(tape, params_, cfg_, scene, rng);
  Prediction pred;
  pred.mixtures = extract_mixtures(tape, fwd.core, cfg_);
  pred.pruned = gate_weights(pred.mixtures.anchor.weights, prune_, e);
  TRAJCAST_CHECK(k >= pred.pruned.active_count, ErrorCode::InvalidArgument,
                 "predict: K=" + std::to_string(k) + " is below the active mode count M*=" +
                     std::to_string(pred.pruned.active_count) + " for scene " + scene.id);
  pred.hyps = generate(tape, params_, cfg_, fwd, pred.mixtures.step, pred.pruned, k,
                       conf_samples_, conf_bins_, rng);
  return pred;
}

MixturePair Forecaster::predict_mixtures(const SceneSample& scene, std::uint64_t seed) {
  Tape tape;
  Rng rng(seed);
  ForwardVars fwd = model_forward(tape, params_, cfg_, scene, rng);
  return extract_mixtures(tape, fwd.core, cfg_);
}

// ---------------------------------------------------------------------------
// Scene loss

SceneLossParts build_scene_loss(Tape& tape, ParamStore& store, const TrainSetup& setup,
                                const SceneSample& scene, int epoch, Rng& scene_rng) {
  ForwardVars fwd = model_forward(tape, store, setup.model, scene, scene_rng);
  const Matrix gt = gt_matrix(scene.future);
  Var l_prob = prob_loss_graph(tape, fwd.core, gt, setup.model.lambda_step,
                               setup.model.lambda_anchor);

  MixturePair mix = extract_mixtures(tape, fwd.core, setup.model);
  PrunedWeights pruned = gate_weights(mix.anchor.weights, setup.prune, epoch);
  const std::vector<int> quotas = hamilton_allocate(pruned, setup.k);
  HypothesisVars hyps = generate_graph(tape, store, setup.model, fwd, quotas);

  ConfDraws draws;
  if (setup.hypo.lambda_conf > 0.0)
    draws = make_conf_draws(mix.step, setup.hypo.beta, setup.conf_samples_train, scene_rng);
  const double temp = setup.hypo.wta_temperature(epoch, setup.epochs);
  Var l_hypo = hypo_loss_graph(tape, setup.model, fwd.core, hyps, gt, setup.hypo, temp, draws);

  SceneLossParts parts;
  parts.total = ad::add(l_prob, l_hypo);
  parts.prob_value = tape.val(l_prob)(0, 0);
  parts.hypo_value = tape.val(l_hypo)(0, 0);
  return parts;
}

// ---------------------------------------------------------------------------
// Training

namespace {

void fisher_yates(std::vector<int>& order, Rng& rng) {
  for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
    const int j = rng.uniform_int(0, i);
    std::swap(order[i], order[j]);
  }
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  const int workers = std::min(threads, n);
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& t : pool) t.join();
}

void write_json_atomic(const json& j, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    TRAJCAST_CHECK(out.good(), ErrorCode::Io, "cannot write " + tmp);
    out << j.dump(2) << "\n";
    TRAJCAST_CHECK(out.good(), ErrorCode::Io, "short write: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  TRAJCAST_CHECK(!ec, ErrorCode::Io, "cannot move into place: " + path);
}

WindowOptions window_options(const TrainSetup& setup) {
  WindowOptions w;
  w.t_hist = setup.model.t_hist;
  w.t_fut = setup.model.t_fut;
  w.stride = setup.stride;
  w.frame_decimation = setup.decimation;
  w.grid_size = setup.model.grid_size;
  w.grid_radius = setup.model.grid_radius;
  return w;
}

std::vector<Matrix> snapshot_values(const ParamStore& store) {
  std::vector<Matrix> out(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) out[i] = store.entry(static_cast<int>(i)).value;
  return out;
}

void restore_values(ParamStore& store, const std::vector<Matrix>& values) {
  for (std::size_t i = 0; i < store.size(); ++i) store.entry(static_cast<int>(i)).value = values[i];
}

}  // namespace

TrainOutcome train(const KvConfig& kv, const std::string& out_dir, const ProgressFn& progress) {
  TrainSetup setup = setup_from_config(kv);
  TRAJCAST_CHECK(!setup.train_path.empty(), ErrorCode::InvalidArgument,
                 "train: data.train must be set");
  const std::string train_path = resolve_data_path(setup.train_path);
  std::vector<SceneSample> scenes = load_dataset(train_path, window_options(setup));
  TRAJCAST_CHECK(!scenes.empty(), ErrorCode::InvalidArgument,
                 "train: no usable scenes in " + train_path);
  const std::string snapshot = config_snapshot(kv);

  fs::create_directories(out_dir);
  Forecaster model(setup.model, setup.prune, setup.seed);
  model.set_config_text(snapshot);
  ParamStore& store = model.params();

  const int n = static_cast<int>(scenes.size());
  const int batches = (n + setup.batch_size - 1) / setup.batch_size;
  const std::int64_t total_steps = static_cast<std::int64_t>(setup.epochs) * batches;

  TrainOutcome outcome;
  const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.tckpt").string();
  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  outcome.checkpoint_path = ckpt_path;
  outcome.manifest_path = manifest_path;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<std::vector<Matrix>> scene_grads(setup.batch_size);
  std::vector<double> scene_loss(setup.batch_size);

  std::vector<Matrix> last_good = snapshot_values(store);
  int last_good_epoch = 0;
  std::int64_t gstep = 0;
  bool aborted = false;

  for (int e = 1; e <= setup.epochs && !aborted; ++e) {
    Rng shuffle_rng = Rng::derive(setup.seed, 0x5u, static_cast<std::uint64_t>(e));
    fisher_yates(order, shuffle_rng);
    double epoch_loss = 0.0;

    for (int b = 0; b < batches && !aborted; ++b) {
      const int start = b * setup.batch_size;
      const int count = std::min(setup.batch_size, n - start);
      int horizon = setup.model.t_hist;
      if (setup.dynamic_horizon) {
        Rng hrng = Rng::derive(setup.seed, 0x8u, static_cast<std::uint64_t>(e),
                               static_cast<std::uint64_t>(b));
        horizon = hrng.uniform_int(2, setup.model.t_hist);
      }

      parallel_for(count, setup.threads, [&](int i) {
        const int idx = order[start + i];
        SceneSample scene = truncate_history(scenes[idx], horizon);
        Rng srng = Rng::derive(setup.seed, static_cast<std::uint64_t>(e),
                               static_cast<std::uint64_t>(idx));
        Tape tape;
        SceneLossParts parts = build_scene_loss(tape, store, setup, scene, e, srng);
        scene_loss[i] = tape.val(parts.total)(0, 0);
        if (!std::isfinite(scene_loss[i])) return;
        tape.backward(parts.total);
        for (auto& g : scene_grads[i])
          g.setZero();
        tape.collect_param_grads(scene_grads[i], 1.0 / count);
      });

      double batch_loss = 0.0;
      bool finite = true;
      for (int i = 0; i < count; ++i) {
        batch_loss += scene_loss[i];
        finite = finite && std::isfinite(scene_loss[i]);
      }
      batch_loss /= count;
      if (!finite) {
        aborted = true;
        break;
      }

      store.zero_grad();
      for (int i = 0; i < count; ++i)
        for (std::size_t p = 0; p < scene_grads[i].size(); ++p)
          store.entry(static_cast<int>(p)).grad.noalias() += scene_grads[i][p];

      const double lr = cosine_lr(setup.optim, gstep, total_steps);
      adamw_step(store, setup.optim, lr, gstep + 1);
      ++gstep;
      epoch_loss += batch_loss;
    }

    if (aborted) break;
    epoch_loss /= batches;
    outcome.epoch_loss.push_back(epoch_loss);
    outcome.epochs_run = e;
    last_good = snapshot_values(store);
    last_good_epoch = e;
    if (progress) progress(e, setup.epochs, epoch_loss);

    if (setup.checkpoint_every > 0 && e % setup.checkpoint_every == 0 && e != setup.epochs) {
      CheckpointState st{snapshot, e, gstep, true};
      save_checkpoint((fs::path(out_dir) / ("checkpoint_epoch" + std::to_string(e) + ".tckpt"))
                          .string(),
                      store, st);
    }
  }

  if (aborted) {
    // non-finite loss: fall back to the last completed epoch
    restore_values(store, last_good);
    outcome.nan_abort = true;
    outcome.epochs_run = last_good_epoch;
  }

  CheckpointState st{snapshot, outcome.epochs_run, gstep, true};
  save_checkpoint(ckpt_path, store, st);
  // the returned in-memory model is exactly the persisted artifact
  load_checkpoint(ckpt_path, store);
  model.set_trained_epochs(outcome.epochs_run);

  json manifest;
  manifest["code_version"] = TRAJCAST_GIT_REV;
  manifest["seed"] = setup.seed;
  manifest["epochs_requested"] = setup.epochs;
  manifest["epochs_run"] = outcome.epochs_run;
  manifest["nan_abort"] = outcome.nan_abort;
  manifest["scenes"] = n;
  manifest["checkpoint"] = "checkpoint.tckpt";
  json cfg_echo = json::object();
  for (const auto& [k, v] : kv.effective()) cfg_echo[k] = v;
  manifest["config"] = cfg_echo;
  manifest["epoch_loss"] = outcome.epoch_loss;
  if (!outcome.epoch_loss.empty()) manifest["final"] = {{"train_loss", outcome.epoch_loss.back()}};
  write_json_atomic(manifest, manifest_path);

  if (outcome.nan_abort)
    fail(ErrorCode::Numeric,
         "training aborted on a non-finite loss; last-good checkpoint (epoch " +
             std::to_string(last_good_epoch) + ") saved to " + ckpt_path);
  return outcome;
}

// ---------------------------------------------------------------------------
// Evaluation / calibration

EvalOutcome evaluate_model(Forecaster& model, const std::vector<SceneSample>& scenes, int k,
                           int obs_len, int repeat, std::uint64_t seed,
                           const std::string& metrics_json_path,
                           const std::string& hypotheses_jsonl_path) {
  TRAJCAST_CHECK(!scenes.empty(), ErrorCode::InvalidArgument, "evaluate: no scenes");
  TRAJCAST_CHECK(repeat >= 1, ErrorCode::InvalidArgument, "evaluate: repeat >= 1");
  TRAJCAST_CHECK(obs_len >= 2 && obs_len <= model.config().t_hist, ErrorCode::InvalidArgument,
                 "evaluate: obs_len in [2, t_hist]");
  EvalOutcome out;
  out.k = k;
  out.obs_len = obs_len;
  out.scenes = static_cast<int>(scenes.size());

  std::ofstream jsonl;
  if (!hypotheses_jsonl_path.empty()) {
    jsonl.open(hypotheses_jsonl_path, std::ios::trunc);
    TRAJCAST_CHECK(jsonl.good(), ErrorCode::Io, "cannot write " + hypotheses_jsonl_path);
  }

  for (int r = 0; r < repeat; ++r) {
    double ade = 0.0, fde = 0.0;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
      SceneSample s = truncate_history(scenes[i], obs_len);
      auto pred = model.predict(s, k, Rng::derive(seed, r, i).next_u64());
      const DisplacementResult d = min_ade_fde(pred.hyps, s.future);
      ade += d.min_ade;
      fde += d.min_fde;
      if (r == 0 && jsonl.is_open()) {
        json rec;
        rec["scene"] = s.id;
        rec["k"] = k;
        json trajs = json::array();
        for (int h = 0; h < pred.hyps.k; ++h) {
          json t = json::array();
          for (int tf = 0; tf < pred.hyps.t_fut; ++tf)
            t.push_back({pred.hyps.at(h, tf, 0), pred.hyps.at(h, tf, 1)});
          trajs.push_back(std::move(t));
        }
        rec["trajectories"] = trajs;
        rec["confidences"] = pred.hyps.confidences;
        rec["source_mode"] = pred.hyps.source_mode;
        jsonl << rec.dump() << "\n";
      }
    }
    out.per_run_ade.push_back(ade / scenes.size());
    out.per_run_fde.push_back(fde / scenes.size());
  }
  out.min_ade = std::accumulate(out.per_run_ade.begin(), out.per_run_ade.end(), 0.0) / repeat;
  out.min_fde = std::accumulate(out.per_run_fde.begin(), out.per_run_fde.end(), 0.0) / repeat;

  if (!metrics_json_path.empty()) {
    json j;
    j["min_ade"] = out.min_ade;
    j["min_fde"] = out.min_fde;
    j["k"] = k;
    j["obs_len"] = obs_len;
    j["scenes"] = out.scenes;
    j["repeat"] = repeat;
    j["per_run_min_ade"] = out.per_run_ade;
    j["per_run_min_fde"] = out.per_run_fde;
    write_json_atomic(j, metrics_json_path);
  }
  return out;
}

CalibrationReport calibrate_model(Forecaster& model, const std::vector<SceneSample>& scenes,
                                  const std::vector<double>& levels, int n_mc, std::uint64_t seed,
                                  double dt_seconds, const std::string& out_dir) {
  TRAJCAST_CHECK(!scenes.empty(), ErrorCode::InvalidArgument, "calibrate: no scenes");
  std::vector<StepMixture> mixes;
  std::vector<GroundTruthFuture> gts;
  mixes.reserve(scenes.size());
  gts.reserve(scenes.size());
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    mixes.push_back(model.predict_mixtures(scenes[i], Rng::derive(seed, 0x11u, i).next_u64()).step);
    gts.push_back(scenes[i].future);
  }
  CalibrationReport rep = reliability(mixes, gts, levels, n_mc,
                                      Rng::derive(seed, 0x17u).next_u64(), dt_seconds);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    json j;
    j["r_avg"] = rep.r_avg;
    j["r_min"] = rep.r_min;
    j["levels"] = rep.levels;
    j["per_level_score"] = rep.per_level_score;
    j["scenes"] = scenes.size();
    j["mc_samples"] = n_mc;
    json table = json::array();
    for (std::size_t tf = 0; tf < rep.observed.size(); ++tf)
      table.push_back(rep.observed[tf]);
    j["observed"] = table;
    write_json_atomic(j, (fs::path(out_dir) / "calibration.json").string());
    emit_qq(rep, (fs::path(out_dir) / "qq.csv").string());
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Synthetic corpus command

OracleScenario scenario_from_config(const KvConfig& kv) {
  const std::string type = kv.get_str("scenario.type", "fork");
  TRAJCAST_CHECK(type == "fork", ErrorCode::InvalidArgument,
                 "scenario.type: only 'fork' is built in");
  const int t_hist = kv.get_int("scenario.t_hist", 8);
  const int t_fut = kv.get_int("scenario.t_fut", 12);
  const double dt = kv.get_double("scenario.dt", 0.4);
  const double speed = kv.get_double("scenario.speed", 1.2);
  std::vector<double> angles_deg = kv.get_list("scenario.branch_angles_deg", {-60.0, 60.0});
  std::vector<double> probs = kv.get_list("scenario.branch_probs", {0.5, 0.5});
  const double noise = kv.get_double("scenario.noise_std", 0.1);
  const double obs_noise = kv.get_double("scenario.obs_noise_std", 0.03);
  const double jitter = kv.get_double("scenario.jitter", 0.5);
  std::vector<double> angles;
  for (double a : angles_deg) angles.push_back(a * M_PI / 180.0);
  OracleScenario sc = make_fork_scenario(t_hist, t_fut, dt, speed, angles, probs, noise, obs_noise);
  sc.translation_jitter = jitter;
  return sc;
}

void synth_command(const KvConfig& kv, int n_scenes, std::uint64_t seed,
                   const std::string& out_dir) {
  const OracleScenario sc = scenario_from_config(kv);
  write_synth_corpus(sc, n_scenes, seed, out_dir);
}

}  // namespace trajcast
