#include "trajcast/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace trajcast {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Parsing

AgentTable parse_ethucy(const std::string& path) {
  std::ifstream in(path);
  TRAJCAST_CHECK(in.good(), ErrorCode::Io, "cannot open trajectory file: " + path);
  AgentTable table;
  std::set<std::pair<std::int64_t, std::int64_t>> seen;
  std::string line;
  int line_no = 0;
  int rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip comments and blank lines
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    double frame_d, agent_d, x, y;
    if (!(ss >> frame_d)) continue;  // blank
    if (!(ss >> agent_d >> x >> y)) {
      fail(ErrorCode::Parse,
           path + ":" + std::to_string(line_no) + ": expected 'frame agent x y'");
    }
    std::string extra;
    if (ss >> extra) {
      fail(ErrorCode::Parse, path + ":" + std::to_string(line_no) + ": trailing fields");
    }
    TRAJCAST_CHECK(std::isfinite(x) && std::isfinite(y), ErrorCode::Parse,
                   path + ":" + std::to_string(line_no) + ": non-finite coordinates");
    const auto frame = static_cast<std::int64_t>(std::llround(frame_d));
    const auto agent = static_cast<std::int64_t>(std::llround(agent_d));
    if (!seen.insert({frame, agent}).second) {
      fail(ErrorCode::Parse, path + ":" + std::to_string(line_no) + ": duplicate (frame " +
                                 std::to_string(frame) + ", agent " + std::to_string(agent) +
                                 ") entry");
    }
    table.tracks[agent].push_back({frame, {x, y}});
    ++rows;
  }
  for (auto& [agent, obs] : table.tracks)
    std::sort(obs.begin(), obs.end(),
              [](const AgentTable::Obs& a, const AgentTable::Obs& b) { return a.frame < b.frame; });
  if (rows == 0) table.warnings.push_back(path + ": no trajectory rows found");
  return table;
}

// ---------------------------------------------------------------------------
// Windowing

namespace {

std::int64_t base_frame_step(const AgentTable& table) {
  std::int64_t step = 0;
  for (const auto& [agent, obs] : table.tracks)
    for (std::size_t i = 1; i < obs.size(); ++i) {
      const std::int64_t d = obs[i].frame - obs[i - 1].frame;
      if (d > 0 && (step == 0 || d < step)) step = d;
    }
  return step == 0 ? 1 : step;
}

std::shared_ptr<OccupancyGrid> build_scene_grid(Vec2 center, const WindowOptions& opt) {
  auto grid = std::make_shared<OccupancyGrid>(
      make_centered_grid(center, opt.grid_size, opt.grid_radius));
  if (opt.world_map) {
    const OccupancyGrid& map = *opt.world_map;
    for (int r = 0; r < grid->height; ++r)
      for (int c = 0; c < grid->width; ++c) {
        const Vec2 p = grid->cell_center(r, c);
        const int mc = static_cast<int>(std::lround((p.x - map.origin.x) / map.resolution));
        const int mr = static_cast<int>(std::lround((p.y - map.origin.y) / map.resolution));
        if (mr >= 0 && mr < map.height && mc >= 0 && mc < map.width)
          grid->at(r, c) = map.at(mr, mc);
      }
  }
  return grid;
}

}  // namespace

std::vector<SceneSample> extract_windows(const AgentTable& table, const WindowOptions& opt) {
  TRAJCAST_CHECK(opt.t_hist >= 2 && opt.t_fut >= 1, ErrorCode::InvalidArgument,
                 "extract_windows: t_hist >= 2 and t_fut >= 1");
  TRAJCAST_CHECK(opt.stride >= 1 && opt.frame_decimation >= 1, ErrorCode::InvalidArgument,
                 "extract_windows: stride and decimation must be >= 1");
  const std::int64_t raw_step = base_frame_step(table);
  const std::int64_t step = raw_step * opt.frame_decimation;
  const int span = opt.t_hist + opt.t_fut;

  // frame -> (agent -> position) lookup for neighbor alignment
  std::map<std::int64_t, std::map<std::int64_t, Vec2>> by_frame;
  for (const auto& [agent, obs] : table.tracks)
    for (const auto& o : obs) by_frame[o.frame][agent] = o.pos;

  std::vector<SceneSample> out;
  for (const auto& [agent, obs] : table.tracks) {
    // split into gap-free runs at the decimated step
    std::vector<std::vector<AgentTable::Obs>> runs;
    std::vector<AgentTable::Obs> run;
    for (const auto& o : obs) {
      if (!run.empty() && o.frame - run.back().frame != raw_step) {
        runs.push_back(std::move(run));
        run.clear();
      }
      run.push_back(o);
    }
    if (!run.empty()) runs.push_back(std::move(run));

    for (const auto& r : runs) {
      std::vector<AgentTable::Obs> track;
      for (std::size_t i = 0; i < r.size(); i += opt.frame_decimation) track.push_back(r[i]);
      if (static_cast<int>(track.size()) < span) continue;
      for (int start = 0; start + span <= static_cast<int>(track.size()); start += opt.stride) {
        SceneSample s;
        s.target.positions.reserve(opt.t_hist);
        for (int t = 0; t < opt.t_hist; ++t) s.target.positions.push_back(track[start + t].pos);
        s.future.positions.reserve(opt.t_fut);
        for (int t = 0; t < opt.t_fut; ++t)
          s.future.positions.push_back(track[start + opt.t_hist + t].pos);
        s.anchor_frame = track[start + opt.t_hist - 1].frame;
        s.world_anchor = track[start + opt.t_hist - 1].pos;
        s.id = "a" + std::to_string(agent) + "_f" + std::to_string(s.anchor_frame);

        // neighbors: present at every observation frame
        std::vector<std::int64_t> obs_frames(opt.t_hist);
        for (int t = 0; t < opt.t_hist; ++t) obs_frames[t] = track[start + t].frame;
        std::map<std::int64_t, AgentHistory> cand;
        bool first = true;
        for (const auto f : obs_frames) {
          auto it = by_frame.find(f);
          TRAJCAST_CHECK(it != by_frame.end(), ErrorCode::Internal, "frame index inconsistent");
          if (first) {
            for (const auto& [aid, pos] : it->second)
              if (aid != agent) cand[aid].positions.push_back(pos);
            first = false;
          } else {
            for (auto c = cand.begin(); c != cand.end();) {
              auto p = it->second.find(c->first);
              if (p == it->second.end()) {
                c = cand.erase(c);  // missing a frame: dropped, not interpolated
              } else {
                c->second.positions.push_back(p->second);
                ++c;
              }
            }
          }
        }
        for (auto& [aid, hist] : cand)
          if (hist.length() == opt.t_hist) s.neighbors.push_back(std::move(hist));

        s.grid = build_scene_grid(s.world_anchor, opt);
        (void)step;
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

void ego_transform(SceneSample& sample) {
  TRAJCAST_CHECK(!sample.ego_frame, ErrorCode::InvalidArgument,
                 "ego_transform: sample already in ego frame");
  TRAJCAST_CHECK(sample.target.length() >= 1, ErrorCode::InvalidArgument,
                 "ego_transform: empty target history");
  const Vec2 anchor = sample.target.positions.back();
  auto shift = [&](Vec2& p) {
    p.x -= anchor.x;
    p.y -= anchor.y;
  };
  for (auto& p : sample.target.positions) shift(p);
  for (auto& n : sample.neighbors)
    for (auto& p : n.positions) shift(p);
  for (auto& p : sample.future.positions) shift(p);
  if (sample.grid) {
    auto grid = std::make_shared<OccupancyGrid>(*sample.grid);  // grids may be shared
    shift(grid->origin);
    sample.grid = std::move(grid);
  }
  sample.world_anchor = anchor;
  sample.ego_frame = true;
}

std::vector<Vec2> ego_inverse(const SceneSample& sample, const std::vector<Vec2>& trajectory) {
  TRAJCAST_CHECK(sample.ego_frame, ErrorCode::InvalidArgument,
                 "ego_inverse: sample is not in ego frame");
  std::vector<Vec2> out = trajectory;
  for (auto& p : out) {
    p.x += sample.world_anchor.x;
    p.y += sample.world_anchor.y;
  }
  return out;
}

SceneSample truncate_history(const SceneSample& sample, int length) {
  TRAJCAST_CHECK(length >= 2 && length <= sample.target.length(), ErrorCode::InvalidArgument,
                 "truncate_history: length must be in [2, target length]");
  SceneSample out = sample;
  auto cut = [length](AgentHistory& h) {
    if (h.length() > length)
      h.positions.erase(h.positions.begin(), h.positions.end() - length);
  };
  cut(out.target);
  for (auto& n : out.neighbors) cut(n);
  return out;
}

// ---------------------------------------------------------------------------
// Grid raster I/O: binary PGM (0 = free, 255 = occupied) + sidecar header.

void write_grid(const OccupancyGrid& grid, const std::string& raster_path) {
  grid.validate();
  std::ofstream out(raster_path, std::ios::binary);
  TRAJCAST_CHECK(out.good(), ErrorCode::Io, "cannot write grid raster: " + raster_path);
  out << "P5\n" << grid.width << " " << grid.height << "\n255\n";
  std::vector<unsigned char> row(grid.width);
  for (int r = 0; r < grid.height; ++r) {
    for (int c = 0; c < grid.width; ++c) row[c] = grid.at(r, c) ? 255 : 0;
    out.write(reinterpret_cast<const char*>(row.data()), grid.width);
  }
  TRAJCAST_CHECK(out.good(), ErrorCode::Io, "short write: " + raster_path);

  std::string hdr_path = raster_path;
  const auto dot = hdr_path.rfind('.');
  hdr_path = (dot == std::string::npos ? hdr_path : hdr_path.substr(0, dot)) + ".hdr";
  std::ofstream hdr(hdr_path);
  TRAJCAST_CHECK(hdr.good(), ErrorCode::Io, "cannot write grid header: " + hdr_path);
  char buf[128];
  std::snprintf(buf, sizeof buf, "origin_x %.17g\norigin_y %.17g\nresolution %.17g\n",
                grid.origin.x, grid.origin.y, grid.resolution);
  hdr << buf;
}

OccupancyGrid read_grid(const std::string& raster_path) {
  std::ifstream in(raster_path, std::ios::binary);
  TRAJCAST_CHECK(in.good(), ErrorCode::Io, "cannot open grid raster: " + raster_path);
  std::string magic;
  in >> magic;
  TRAJCAST_CHECK(magic == "P5", ErrorCode::Parse, raster_path + ": expected binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  TRAJCAST_CHECK(in.good() && w > 0 && h > 0 && maxval == 255, ErrorCode::Parse,
                 raster_path + ": malformed PGM header");
  in.get();  // single whitespace after header
  OccupancyGrid grid;
  grid.width = w;
  grid.height = h;
  grid.cells.resize(static_cast<std::size_t>(w) * h);
  std::vector<unsigned char> row(w);
  for (int r = 0; r < h; ++r) {
    in.read(reinterpret_cast<char*>(row.data()), w);
    TRAJCAST_CHECK(in.good(), ErrorCode::Parse, raster_path + ": truncated raster data");
    for (int c = 0; c < w; ++c) grid.at(r, c) = row[c] >= 128 ? 1 : 0;
  }

  std::string hdr_path = raster_path;
  const auto dot = hdr_path.rfind('.');
  hdr_path = (dot == std::string::npos ? hdr_path : hdr_path.substr(0, dot)) + ".hdr";
  std::ifstream hdr(hdr_path);
  TRAJCAST_CHECK(hdr.good(), ErrorCode::Io, "cannot open grid header: " + hdr_path);
  std::string key;
  double val;
  while (hdr >> key >> val) {
    if (key == "origin_x") grid.origin.x = val;
    else if (key == "origin_y") grid.origin.y = val;
    else if (key == "resolution") grid.resolution = val;
    else fail(ErrorCode::Parse, hdr_path + ": unknown header key '" + key + "'");
  }
  grid.validate();
  return grid;
}

// ---------------------------------------------------------------------------
// Synthetic oracle

void OracleScenario::validate() const {
  TRAJCAST_CHECK(!branch_offsets.empty(), ErrorCode::InvalidArgument,
                 "scenario needs at least one branch");
  TRAJCAST_CHECK(branch_probs.size() == branch_offsets.size(), ErrorCode::InvalidArgument,
                 "scenario: one probability per branch");
  double s = 0.0;
  for (double p : branch_probs) {
    TRAJCAST_CHECK(p >= 0.0, ErrorCode::InvalidArgument, "scenario: negative branch probability");
    s += p;
  }
  TRAJCAST_CHECK(std::abs(s - 1.0) < 1e-9, ErrorCode::InvalidArgument,
                 "scenario: branch probabilities must sum to 1");
  TRAJCAST_CHECK(static_cast<int>(stem_offsets.size()) == t_hist, ErrorCode::InvalidArgument,
                 "scenario: stem length must equal t_hist");
  for (const auto& b : branch_offsets)
    TRAJCAST_CHECK(static_cast<int>(b.size()) == t_fut, ErrorCode::InvalidArgument,
                   "scenario: branch length must equal t_fut");
  TRAJCAST_CHECK(noise_std >= 0.0 && obs_noise_std >= 0.0, ErrorCode::InvalidArgument,
                 "scenario: negative noise");
}

OracleScenario make_fork_scenario(int t_hist, int t_fut, double dt, double speed,
                                  const std::vector<double>& branch_angles,
                                  const std::vector<double>& branch_probs, double noise_std,
                                  double obs_noise_std) {
  OracleScenario sc;
  sc.t_hist = t_hist;
  sc.t_fut = t_fut;
  sc.noise_std = noise_std;
  sc.obs_noise_std = obs_noise_std;
  sc.branch_probs = branch_probs;
  const double step = speed * dt;
  sc.stem_offsets.resize(t_hist);
  for (int t = 0; t < t_hist; ++t)
    sc.stem_offsets[t] = {-step * (t_hist - 1 - t), 0.0};
  for (double angle : branch_angles) {
    std::vector<Vec2> branch(t_fut);
    for (int t = 0; t < t_fut; ++t)
      branch[t] = {step * (t + 1) * std::cos(angle), step * (t + 1) * std::sin(angle)};
    sc.branch_offsets.push_back(std::move(branch));
  }
  sc.validate();
  return sc;
}

OracleDensity oracle_density(const OracleScenario& sc) {
  sc.validate();
  const int B = static_cast<int>(sc.branch_offsets.size());
  const double var = std::max(sc.noise_std * sc.noise_std, kVarianceFloor);
  const double sd = std::sqrt(var);
  auto core = std::make_shared<GaussGrid>(sc.t_fut, B);
  for (int tf = 0; tf < sc.t_fut; ++tf)
    for (int b = 0; b < B; ++b) {
      core->mean_at(tf, b, 0) = sc.branch_offsets[b][tf].x;
      core->mean_at(tf, b, 1) = sc.branch_offsets[b][tf].y;
      core->factor_at(tf, b, 0) = sd;
      core->factor_at(tf, b, 1) = 0.0;
      core->factor_at(tf, b, 2) = sd;
    }
  std::vector<double> step_w(static_cast<std::size_t>(sc.t_fut) * B);
  for (int tf = 0; tf < sc.t_fut; ++tf)
    for (int b = 0; b < B; ++b) step_w[static_cast<std::size_t>(tf) * B + b] = sc.branch_probs[b];
  OracleDensity d{make_step_mixture(core, std::move(step_w)),
                  build_anchor_mixture(core, sc.branch_probs)};
  return d;
}

SynthResult synth_generate(const OracleScenario& sc, int n_scenes, Rng& rng, int grid_size,
                           double grid_radius) {
  sc.validate();
  TRAJCAST_CHECK(n_scenes >= 1, ErrorCode::InvalidArgument, "synth_generate: n_scenes >= 1");
  SynthResult res;
  res.oracle = oracle_density(sc);
  res.scenes.reserve(n_scenes);
  const std::uint64_t corpus_seed = rng.next_u64();
  for (int i = 0; i < n_scenes; ++i) {
    Rng srng = Rng::derive(corpus_seed, static_cast<std::uint64_t>(i));
    SceneSample s;
    const Vec2 base = {srng.uniform(-sc.translation_jitter, sc.translation_jitter),
                       srng.uniform(-sc.translation_jitter, sc.translation_jitter)};
    s.target.positions.resize(sc.t_hist);
    for (int t = 0; t < sc.t_hist; ++t) {
      s.target.positions[t] = {base.x + sc.stem_offsets[t].x + sc.obs_noise_std * srng.normal(),
                               base.y + sc.stem_offsets[t].y + sc.obs_noise_std * srng.normal()};
    }
    const Vec2 anchor = s.target.positions.back();
    const int b = srng.categorical(sc.branch_probs);
    s.future.positions.resize(sc.t_fut);
    for (int t = 0; t < sc.t_fut; ++t) {
      s.future.positions[t] = {anchor.x + sc.branch_offsets[b][t].x + sc.noise_std * srng.normal(),
                               anchor.y + sc.branch_offsets[b][t].y + sc.noise_std * srng.normal()};
    }
    s.world_anchor = anchor;
    s.anchor_frame = static_cast<std::int64_t>(i) * 100 + sc.t_hist - 1;
    s.id = "a" + std::to_string(i + 1) + "_f" + std::to_string(s.anchor_frame);
    s.grid = std::make_shared<OccupancyGrid>(make_centered_grid(anchor, grid_size, grid_radius));
    res.scenes.push_back(std::move(s));
  }
  return res;
}

std::vector<std::vector<Vec2>> oracle_sample_futures(const OracleScenario& sc, int k, Rng& rng) {
  sc.validate();
  std::vector<std::vector<Vec2>> out(k);
  for (int i = 0; i < k; ++i) {
    const int b = rng.categorical(sc.branch_probs);
    out[i].resize(sc.t_fut);
    for (int t = 0; t < sc.t_fut; ++t)
      out[i][t] = {sc.branch_offsets[b][t].x + sc.noise_std * rng.normal(),
                   sc.branch_offsets[b][t].y + sc.noise_std * rng.normal()};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus files

void write_synth_corpus(const OracleScenario& sc, int n_scenes, std::uint64_t seed,
                        const std::string& out_dir) {
  sc.validate();
  fs::create_directories(out_dir);
  Rng rng(seed);
  SynthResult res = synth_generate(sc, n_scenes, rng);

  const std::string traj_path = (fs::path(out_dir) / "trajectories.txt").string();
  std::ofstream out(traj_path);
  TRAJCAST_CHECK(out.good(), ErrorCode::Io, "cannot write " + traj_path);
  char buf[160];
  for (int i = 0; i < n_scenes; ++i) {
    const SceneSample& s = res.scenes[i];
    const std::int64_t frame0 = static_cast<std::int64_t>(i) * 100;
    const std::int64_t agent = i + 1;
    for (int t = 0; t < sc.t_hist; ++t) {
      std::snprintf(buf, sizeof buf, "%lld %lld %.17g %.17g\n",
                    static_cast<long long>(frame0 + t), static_cast<long long>(agent),
                    s.target.positions[t].x, s.target.positions[t].y);
      out << buf;
    }
    for (int t = 0; t < sc.t_fut; ++t) {
      std::snprintf(buf, sizeof buf, "%lld %lld %.17g %.17g\n",
                    static_cast<long long>(frame0 + sc.t_hist + t), static_cast<long long>(agent),
                    s.future.positions[t].x, s.future.positions[t].y);
      out << buf;
    }
  }
  out.close();

  OccupancyGrid map = make_centered_grid({0.0, 0.0}, 64, 32.0);
  write_grid(map, (fs::path(out_dir) / "grid.pgm").string());

  json j;
  j["type"] = "branching_oracle";
  j["seed"] = seed;
  j["n_scenes"] = n_scenes;
  j["t_hist"] = sc.t_hist;
  j["t_fut"] = sc.t_fut;
  j["noise_std"] = sc.noise_std;
  j["obs_noise_std"] = sc.obs_noise_std;
  j["translation_jitter"] = sc.translation_jitter;
  j["branch_probs"] = sc.branch_probs;
  json stems = json::array();
  for (const auto& p : sc.stem_offsets) stems.push_back({p.x, p.y});
  j["stem_offsets"] = stems;
  json branches = json::array();
  for (const auto& b : sc.branch_offsets) {
    json br = json::array();
    for (const auto& p : b) br.push_back({p.x, p.y});
    branches.push_back(br);
  }
  j["branch_offsets"] = branches;
  std::ofstream mf((fs::path(out_dir) / "oracle.json").string());
  TRAJCAST_CHECK(mf.good(), ErrorCode::Io, "cannot write oracle manifest");
  mf << j.dump(2) << "\n";
}

OracleScenario read_oracle_manifest(const std::string& path) {
  std::ifstream in(path);
  TRAJCAST_CHECK(in.good(), ErrorCode::Io, "cannot open oracle manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail(ErrorCode::Parse, path + ": " + e.what());
  }
  OracleScenario sc;
  sc.t_hist = j.at("t_hist").get<int>();
  sc.t_fut = j.at("t_fut").get<int>();
  sc.noise_std = j.at("noise_std").get<double>();
  sc.obs_noise_std = j.at("obs_noise_std").get<double>();
  sc.translation_jitter = j.value("translation_jitter", 0.0);
  sc.branch_probs = j.at("branch_probs").get<std::vector<double>>();
  for (const auto& p : j.at("stem_offsets")) sc.stem_offsets.push_back({p[0], p[1]});
  for (const auto& br : j.at("branch_offsets")) {
    std::vector<Vec2> b;
    for (const auto& p : br) b.push_back({p[0], p[1]});
    sc.branch_offsets.push_back(std::move(b));
  }
  sc.validate();
  return sc;
}

std::vector<SceneSample> load_dataset(const std::string& path, const WindowOptions& opt) {
  fs::path p(path);
  OccupancyGrid world_map;
  WindowOptions effective = opt;
  if (fs::is_directory(p)) {
    const fs::path grid_path = p / "grid.pgm";
    if (fs::exists(grid_path) && !effective.world_map) {
      world_map = read_grid(grid_path.string());
      effective.world_map = &world_map;
    }
    p /= "trajectories.txt";
  }
  AgentTable table = parse_ethucy(p.string());
  std::vector<SceneSample> scenes = extract_windows(table, effective);
  for (auto& s : scenes) ego_transform(s);
  return scenes;
}

}  // namespace trajcast
