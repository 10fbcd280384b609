#ifndef TRAJCAST_CAPI_H
#define TRAJCAST_CAPI_H

/* Shared-library surface of the trajectory forecaster: opaque handles,
 * integer status codes, thread-local error messages. Everything heavier
 * (training, evaluation, calibration, corpus synthesis, single-scene
 * prediction) runs behind these calls; deployments and the bundled CLI
 * link only this header. */

#include <stddef.h>

#if defined(_WIN32)
#define TRAJCAST_API __declspec(dllexport)
#else
#define TRAJCAST_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum trajcast_status {
  TRAJCAST_OK = 0,
  TRAJCAST_INVALID_ARGUMENT = 1,
  TRAJCAST_SHAPE_MISMATCH = 2,
  TRAJCAST_INDEX_OUT_OF_RANGE = 3,
  TRAJCAST_IO_ERROR = 4,
  TRAJCAST_PARSE_ERROR = 5,
  TRAJCAST_NUMERIC_ERROR = 6,
  TRAJCAST_INTERNAL_ERROR = 7
} trajcast_status;

TRAJCAST_API const char* trajcast_version(void);

/* Message for the most recent failing call on this thread. */
TRAJCAST_API const char* trajcast_last_error(void);

/* --- configuration ------------------------------------------------------ */

typedef struct trajcast_config trajcast_config;

TRAJCAST_API trajcast_config* trajcast_config_new(void);
TRAJCAST_API trajcast_status trajcast_config_load(trajcast_config* cfg, const char* path);
TRAJCAST_API trajcast_status trajcast_config_set(trajcast_config* cfg, const char* key,
                                                 const char* value);
/* Returns NULL when the key is absent; the pointer stays valid until the next
 * call on this config. */
TRAJCAST_API const char* trajcast_config_get(trajcast_config* cfg, const char* key);
TRAJCAST_API void trajcast_config_free(trajcast_config* cfg);

/* --- commands ------------------------------------------------------------ */

/* Trains per the config (data.train required); writes checkpoint.tckpt and
 * manifest.json under out_dir. */
TRAJCAST_API trajcast_status trajcast_train(trajcast_config* cfg, const char* out_dir);

/* Writes a synthetic corpus (trajectories.txt, grid.pgm/.hdr, oracle.json). */
TRAJCAST_API trajcast_status trajcast_synth(trajcast_config* cfg, int n_scenes,
                                            unsigned long long seed, const char* out_dir);

/* --- models --------------------------------------------------------------- */

typedef struct trajcast_model trajcast_model;

TRAJCAST_API trajcast_status trajcast_model_load(const char* checkpoint_path,
                                                 trajcast_model** out_model);
TRAJCAST_API void trajcast_model_free(trajcast_model* model);

/* Best-of-K evaluation over a dataset; writes metrics.json and
 * hypotheses.jsonl under out_dir. obs_len < full history selects the
 * momentary-observation protocol. */
TRAJCAST_API trajcast_status trajcast_evaluate(trajcast_model* model, trajcast_config* cfg,
                                               const char* dataset_path, int k, int obs_len,
                                               int repeat, unsigned long long seed,
                                               const char* out_dir);

/* Reliability calibration over a dataset; writes calibration.json and qq.csv
 * under out_dir. */
TRAJCAST_API trajcast_status trajcast_calibrate(trajcast_model* model, trajcast_config* cfg,
                                                const char* dataset_path,
                                                unsigned long long seed, const char* out_dir);

/* Single-scene prediction. history_xy is n_obs (x, y) pairs in world meters,
 * most recent last; neighbors_xy concatenates n_neighbors histories whose
 * lengths are in neighbor_lens; grid may be NULL for an all-free surrounding.
 * Outputs: out_traj holds k * t_fut * 2 world-frame doubles, out_conf k
 * confidences, out_modes k source-mode indices; *out_t_fut reports the
 * horizon. Buffers must be sized for k hypotheses at the model horizon. */
TRAJCAST_API trajcast_status trajcast_predict(
    trajcast_model* model, const double* history_xy, int n_obs, const double* neighbors_xy,
    const int* neighbor_lens, int n_neighbors, const unsigned char* grid_cells, int grid_h,
    int grid_w, double grid_resolution, double grid_origin_x, double grid_origin_y, int k,
    unsigned long long seed, double* out_traj, double* out_conf, int* out_modes, int* out_t_fut);

#ifdef __cplusplus
}
#endif

#endif /* TRAJCAST_CAPI_H */
