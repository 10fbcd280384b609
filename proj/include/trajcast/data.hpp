#pragma once

// Dataset ingestion (ETH/UCY text layout), sliding-window extraction,
// ego-frame transforms, occupancy-grid raster I/O, and a synthetic
// multimodal oracle generator with a known ground-truth distribution.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trajcast/encoders.hpp"
#include "trajcast/gmm.hpp"

namespace trajcast {

struct SceneSample {
  std::string id;
  AgentHistory target;
  std::vector<AgentHistory> neighbors;  // time-aligned with the target history
  GroundTruthFuture future;
  std::shared_ptr<OccupancyGrid> grid;
  Vec2 world_anchor;       // world position mapped to the ego origin
  std::int64_t anchor_frame = 0;
  bool ego_frame = false;  // true once ego_transform has been applied
};

// --- ETH/UCY text ingestion -------------------------------------------------

struct AgentTable {
  struct Obs {
    std::int64_t frame;
    Vec2 pos;
  };
  std::map<std::int64_t, std::vector<Obs>> tracks;  // agent id -> frame-sorted observations
  std::vector<std::string> warnings;
};

// Whitespace-separated lines "frame_id agent_id x y" (meters). Malformed or
// duplicate (frame, agent) rows raise Parse errors naming the line.
AgentTable parse_ethucy(const std::string& path);

struct WindowOptions {
  int t_hist = 8;
  int t_fut = 12;
  int stride = 1;          // window hop, in frames of the (decimated) track
  int frame_decimation = 1;
  int grid_size = 64;
  double grid_radius = 10.0;
  const OccupancyGrid* world_map = nullptr;  // optional static map, world frame
};

// Sliding windows per agent over gap-free track runs; neighbors are agents
// observed at every frame of the observation span. Samples come out in
// world frame; apply ego_transform before encoding.
std::vector<SceneSample> extract_windows(const AgentTable& table, const WindowOptions& opt);

// Translates the scene so the target's last observed position is the origin
// (grid origin shifts consistently). ego_inverse maps ego-frame trajectories
// back to world coordinates.
void ego_transform(SceneSample& sample);
std::vector<Vec2> ego_inverse(const SceneSample& sample, const std::vector<Vec2>& trajectory);

// Keeps only the last `length` observed frames of the target and every
// neighbor. length in [2, current target length].
SceneSample truncate_history(const SceneSample& sample, int length);

// --- occupancy-grid raster I/O (binary PGM + sidecar text header) ----------

void write_grid(const OccupancyGrid& grid, const std::string& raster_path);
OccupancyGrid read_grid(const std::string& raster_path);

// --- synthetic oracle corpus ------------------------------------------------

// Generative description of a branching scenario. Branch polylines are
// offsets from the anchor (= last observed position), so the exact ego-frame
// future distribution is the same mixture for every scene:
//   x_tf ~ sum_b p_b N(branch_offsets[b][tf], max(noise_std^2, eps_var) I).
struct OracleScenario {
  std::vector<std::vector<Vec2>> branch_offsets;  // [branch][t_fut]
  std::vector<double> branch_probs;
  std::vector<Vec2> stem_offsets;  // [t_hist], ending at (0, 0)
  double noise_std = 0.1;          // future per-step noise, isotropic
  double obs_noise_std = 0.0;      // history observation noise
  double translation_jitter = 0.0; // uniform world placement jitter
  int t_hist = 8;
  int t_fut = 12;

  void validate() const;
};

// Straight approach along +x at `speed`, branches fanning out at the given
// angles (radians, relative to +x) from the anchor.
OracleScenario make_fork_scenario(int t_hist, int t_fut, double dt, double speed,
                                  const std::vector<double>& branch_angles,
                                  const std::vector<double>& branch_probs, double noise_std,
                                  double obs_noise_std = 0.03);

// Exact generative distribution in the ego frame (identical for every scene).
struct OracleDensity {
  StepMixture step;
  AnchorMixture anchor;
};
OracleDensity oracle_density(const OracleScenario& scenario);

struct SynthResult {
  std::vector<SceneSample> scenes;  // world frame
  OracleDensity oracle;
};
SynthResult synth_generate(const OracleScenario& scenario, int n_scenes, Rng& rng,
                           int grid_size = 64, double grid_radius = 10.0);

// K i.i.d. futures from the generative process, in the ego frame of a scene
// (used as the sampling oracle for best-of-K comparisons).
std::vector<std::vector<Vec2>> oracle_sample_futures(const OracleScenario& scenario, int k,
                                                     Rng& rng);

// Corpus files: trajectories.txt (ETH/UCY layout), grid.pgm/.hdr, oracle.json.
void write_synth_corpus(const OracleScenario& scenario, int n_scenes, std::uint64_t seed,
                        const std::string& out_dir);
OracleScenario read_oracle_manifest(const std::string& path);

// Loads a corpus (a trajectories file or a directory holding one) into
// ego-frame scene samples.
std::vector<SceneSample> load_dataset(const std::string& path, const WindowOptions& opt);

}  // namespace trajcast
