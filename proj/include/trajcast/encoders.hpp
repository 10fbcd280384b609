#pragma once

// Conditioning features from agent histories and the occupancy grid:
//   h_temporal — recurrent encoder over displacement+position features with
//                self-attention pooling,
//   h_spatial  — coordinate-augmented occupancy grid through a small strided
//                CNN with attention pooling,
//   h_social   — gated cross-attention of the target feature over neighbor
//                features (empty neighborhood falls back to a learned null
//                embedding added to the target).
// All encoders are pure functions of (input, params) and built on the tape.

#include <cstdint>
#include <optional>
#include <vector>

#include "trajcast/ad.hpp"
#include "trajcast/common.hpp"

namespace trajcast {

struct AgentHistory {
  std::vector<Vec2> positions;  // ego frame, oldest first
  int length() const { return static_cast<int>(positions.size()); }
  void validate(int t_hist) const;
};

struct OccupancyGrid {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> cells;  // row-major, 1 = inaccessible
  double resolution = 0.3125;      // meters per cell
  Vec2 origin;                     // world position of the center of cell (0,0)

  std::uint8_t at(int row, int col) const {
    return cells[static_cast<std::size_t>(row) * width + col];
  }
  std::uint8_t& at(int row, int col) {
    return cells[static_cast<std::size_t>(row) * width + col];
  }
  Vec2 cell_center(int row, int col) const {
    return {origin.x + col * resolution, origin.y + row * resolution};
  }
  void validate() const;
};

// Makes an all-free grid of size x size cells covering a square of the given
// radius around `center` (cell 0,0 at the lower-left).
OccupancyGrid make_centered_grid(Vec2 center, int size, double radius);

struct EncoderDims {
  int d_temporal = 64;
  int d_spatial = 64;
  int cnn_channels[3] = {8, 16, 32};
};

// Parameter registration (fixed names under "temporal.", "spatial.", "social.").
void init_temporal_params(ad::ParamStore& store, const EncoderDims& dims, Rng& rng);
void init_spatial_params(ad::ParamStore& store, const EncoderDims& dims, Rng& rng);
void init_social_params(ad::ParamStore& store, const EncoderDims& dims, Rng& rng);

// Occupancy + normalized coordinate channels, 3 x (H*W). Channel 1 carries
// the world-x (column) coordinate, channel 2 the world-y (row) coordinate,
// each affinely mapped to [-1, 1] over the grid extent.
ad::Matrix augment_grid_with_coords(const OccupancyGrid& grid);

ad::Var encode_temporal(ad::Tape& tape, ad::ParamStore& store, const EncoderDims& dims,
                        const AgentHistory& history);

ad::Var encode_spatial(ad::Tape& tape, ad::ParamStore& store, const EncoderDims& dims,
                       const ad::Matrix& aug_grid, int grid_h, int grid_w);

// `gate_override`, when set, replaces the learned relevance gates (one value
// per neighbor, original order).
ad::Var social_attention(ad::Tape& tape, ad::ParamStore& store, const EncoderDims& dims,
                         ad::Var target, const std::vector<ad::Var>& neighbors,
                         const std::vector<double>* gate_override = nullptr);

struct ContextVars {
  ad::Var h_temporal;
  ad::Var h_spatial;
  ad::Var h_social;
  ad::Var h_context;  // [h_temporal | h_spatial]
};

}  // namespace trajcast
