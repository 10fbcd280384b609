#include "trajcast/capi.h"

#include <cstring>
#include <filesystem>
#include <string>

#include "trajcast/config.hpp"
#include "trajcast/data.hpp"
#include "trajcast/trainer.hpp"

namespace {

thread_local std::string g_last_error;

trajcast_status status_of(const trajcast::Error& e) {
  using trajcast::ErrorCode;
  switch (e.code) {
    case ErrorCode::InvalidArgument: return TRAJCAST_INVALID_ARGUMENT;
    case ErrorCode::ShapeMismatch: return TRAJCAST_SHAPE_MISMATCH;
    case ErrorCode::IndexOutOfRange: return TRAJCAST_INDEX_OUT_OF_RANGE;
    case ErrorCode::Io: return TRAJCAST_IO_ERROR;
    case ErrorCode::Parse: return TRAJCAST_PARSE_ERROR;
    case ErrorCode::Numeric: return TRAJCAST_NUMERIC_ERROR;
    case ErrorCode::Internal: return TRAJCAST_INTERNAL_ERROR;
  }
  return TRAJCAST_INTERNAL_ERROR;
}

template <typename Fn>
trajcast_status guarded(Fn&& fn) {
  try {
    fn();
    return TRAJCAST_OK;
  } catch (const trajcast::Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TRAJCAST_INTERNAL_ERROR;
  } catch (...) {
    g_last_error = "unknown error";
    return TRAJCAST_INTERNAL_ERROR;
  }
}

trajcast_status invalid(const char* msg) {
  g_last_error = msg;
  return TRAJCAST_INVALID_ARGUMENT;
}

}  // namespace

struct trajcast_config {
  trajcast::KvConfig kv;
  std::string scratch;  // backs trajcast_config_get
};

struct trajcast_model {
  trajcast::Forecaster model;
};

extern "C" {

const char* trajcast_version(void) { return "trajcast 1.0.0 (checkpoint format 1)"; }

const char* trajcast_last_error(void) { return g_last_error.c_str(); }

trajcast_config* trajcast_config_new(void) { return new trajcast_config(); }

trajcast_status trajcast_config_load(trajcast_config* cfg, const char* path) {
  if (!cfg || !path) return invalid("config_load: null argument");
  return guarded([&] {
    trajcast::KvConfig loaded = trajcast::KvConfig::load(path);
    // file contents underlay values set programmatically before the call
    for (const auto& [k, v] : cfg->kv.raw()) loaded.set(k, v);
    cfg->kv = std::move(loaded);
  });
}

trajcast_status trajcast_config_set(trajcast_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return invalid("config_set: null argument");
  return guarded([&] { cfg->kv.set(key, value); });
}

const char* trajcast_config_get(trajcast_config* cfg, const char* key) {
  if (!cfg || !key) return nullptr;
  auto it = cfg->kv.raw().find(key);
  if (it == cfg->kv.raw().end()) return nullptr;
  cfg->scratch = it->second;
  return cfg->scratch.c_str();
}

void trajcast_config_free(trajcast_config* cfg) { delete cfg; }

trajcast_status trajcast_train(trajcast_config* cfg, const char* out_dir) {
  if (!cfg || !out_dir) return invalid("train: null argument");
  return guarded([&] { trajcast::train(cfg->kv, out_dir); });
}

trajcast_status trajcast_synth(trajcast_config* cfg, int n_scenes, unsigned long long seed,
                               const char* out_dir) {
  if (!cfg || !out_dir) return invalid("synth: null argument");
  return guarded([&] { trajcast::synth_command(cfg->kv, n_scenes, seed, out_dir); });
}

trajcast_status trajcast_model_load(const char* checkpoint_path, trajcast_model** out_model) {
  if (!checkpoint_path || !out_model) return invalid("model_load: null argument");
  *out_model = nullptr;
  return guarded([&] {
    *out_model = new trajcast_model{trajcast::Forecaster::from_checkpoint(checkpoint_path)};
  });
}

void trajcast_model_free(trajcast_model* model) { delete model; }

trajcast_status trajcast_evaluate(trajcast_model* model, trajcast_config* cfg,
                                  const char* dataset_path, int k, int obs_len, int repeat,
                                  unsigned long long seed, const char* out_dir) {
  if (!model || !cfg || !dataset_path || !out_dir) return invalid("evaluate: null argument");
  return guarded([&] {
    namespace fs = std::filesystem;
    trajcast::TrainSetup setup = trajcast::setup_from_config(cfg->kv);
    trajcast::WindowOptions w;
    w.t_hist = model->model.config().t_hist;
    w.t_fut = model->model.config().t_fut;
    w.stride = setup.stride;
    w.frame_decimation = setup.decimation;
    w.grid_size = model->model.config().grid_size;
    w.grid_radius = model->model.config().grid_radius;
    auto scenes = trajcast::load_dataset(trajcast::resolve_data_path(dataset_path), w);
    fs::create_directories(out_dir);
    model->model.set_confidence_mc(setup.conf_samples_eval, setup.conf_bins);
    trajcast::evaluate_model(model->model, scenes, k, obs_len, repeat, seed,
                             (fs::path(out_dir) / "metrics.json").string(),
                             (fs::path(out_dir) / "hypotheses.jsonl").string());
  });
}

trajcast_status trajcast_calibrate(trajcast_model* model, trajcast_config* cfg,
                                   const char* dataset_path, unsigned long long seed,
                                   const char* out_dir) {
  if (!model || !cfg || !dataset_path || !out_dir) return invalid("calibrate: null argument");
  return guarded([&] {
    trajcast::TrainSetup setup = trajcast::setup_from_config(cfg->kv);
    trajcast::WindowOptions w;
    w.t_hist = model->model.config().t_hist;
    w.t_fut = model->model.config().t_fut;
    w.stride = setup.stride;
    w.frame_decimation = setup.decimation;
    w.grid_size = model->model.config().grid_size;
    w.grid_radius = model->model.config().grid_radius;
    auto scenes = trajcast::load_dataset(trajcast::resolve_data_path(dataset_path), w);
    trajcast::calibrate_model(model->model, scenes, setup.calib_levels, setup.calib_mc, seed,
                              1.0 / setup.rate_hz, out_dir);
  });
}

trajcast_status trajcast_predict(trajcast_model* model, const double* history_xy, int n_obs,
                                 const double* neighbors_xy, const int* neighbor_lens,
                                 int n_neighbors, const unsigned char* grid_cells, int grid_h,
                                 int grid_w, double grid_resolution, double grid_origin_x,
                                 double grid_origin_y, int k, unsigned long long seed,
                                 double* out_traj, double* out_conf, int* out_modes,
                                 int* out_t_fut) {
  if (!model || !history_xy || !out_traj || !out_conf || !out_modes || !out_t_fut)
    return invalid("predict: null argument");
  if (n_obs < 2) return invalid("predict: need at least 2 observed positions");
  if (n_neighbors > 0 && (!neighbors_xy || !neighbor_lens))
    return invalid("predict: neighbor buffers missing");
  return guarded([&] {
    const trajcast::ModelConfig& mc = model->model.config();
    trajcast::SceneSample scene;
    scene.id = "capi";
    scene.target.positions.resize(n_obs);
    for (int t = 0; t < n_obs; ++t)
      scene.target.positions[t] = {history_xy[2 * t], history_xy[2 * t + 1]};
    int off = 0;
    for (int nb = 0; nb < n_neighbors; ++nb) {
      trajcast::AgentHistory h;
      h.positions.resize(neighbor_lens[nb]);
      for (int t = 0; t < neighbor_lens[nb]; ++t)
        h.positions[t] = {neighbors_xy[2 * (off + t)], neighbors_xy[2 * (off + t) + 1]};
      off += neighbor_lens[nb];
      scene.neighbors.push_back(std::move(h));
    }
    const trajcast::Vec2 anchor = scene.target.positions.back();
    if (grid_cells) {
      auto grid = std::make_shared<trajcast::OccupancyGrid>();
      grid->height = grid_h;
      grid->width = grid_w;
      grid->resolution = grid_resolution;
      grid->origin = {grid_origin_x, grid_origin_y};
      grid->cells.assign(grid_cells,
                         grid_cells + static_cast<std::size_t>(grid_h) * grid_w);
      for (auto& c : grid->cells) c = c >= 128 ? 1 : 0;
      grid->validate();
      scene.grid = std::move(grid);
    } else {
      scene.grid = std::make_shared<trajcast::OccupancyGrid>(
          trajcast::make_centered_grid(anchor, mc.grid_size, mc.grid_radius));
    }
    // the forecaster works in the ego frame; future has the model horizon
    scene.future.positions.assign(mc.t_fut, anchor);
    trajcast::ego_transform(scene);

    auto pred = model->model.predict(scene, k, seed);
    *out_t_fut = pred.hyps.t_fut;
    for (int h = 0; h < pred.hyps.k; ++h) {
      for (int tf = 0; tf < pred.hyps.t_fut; ++tf) {
        out_traj[(static_cast<std::size_t>(h) * pred.hyps.t_fut + tf) * 2] =
            pred.hyps.at(h, tf, 0) + anchor.x;
        out_traj[(static_cast<std::size_t>(h) * pred.hyps.t_fut + tf) * 2 + 1] =
            pred.hyps.at(h, tf, 1) + anchor.y;
      }
      out_conf[h] = pred.hyps.confidences[h];
      out_modes[h] = pred.hyps.source_mode[h];
    }
  });
}

}  // extern "C"
