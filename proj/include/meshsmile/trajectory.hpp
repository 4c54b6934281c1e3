#pragma once

#include <string>
#include <vector>

#include "meshsmile/graph.hpp"
#include "meshsmile/layers.hpp"
#include "meshsmile/rng.hpp"

namespace meshsmile {

// Token-sequence network: mixes per-frame landmark features into a fixed
// token count, then attends over tokens within each frame (spatial) and over
// frames within each token (temporal). Features travel as one [T, d] matrix
// per frame.

struct TrajectoryParams {
  Parameter* mix_w = nullptr;  // [T, L]
  Parameter* mix_b = nullptr;  // [T], one bias per token
  std::vector<BlockParams> spatial;
  std::vector<BlockParams> temporal;
  Parameter* pos = nullptr;  // [N_clip, d] learned frame-position table
  std::string block_order = "stacked";  // or "interleaved"
  bool use_spatial = true;
  bool use_temporal = true;
};

TrajectoryParams make_trajectory(ParamStore& store, const std::string& prefix, std::size_t L,
                                 std::size_t tokens, std::size_t d, std::size_t heads,
                                 std::size_t n_spatial, std::size_t n_temporal,
                                 std::size_t n_clip, const std::string& block_order,
                                 bool use_spatial, bool use_temporal, Rng& rng);

// Learned linear map across the landmark axis, shared by frames and
// channels: token t of a frame is sum_l W[t,l] h_l + b[t].
std::vector<Var> mix_tokens(Graph& g, const std::vector<Var>& frames,
                            const TrajectoryParams& p);

// All spatial blocks, frames independent.
std::vector<Var> spatial_pass(Graph& g, const std::vector<Var>& x, const TrajectoryParams& p);

// Adds the frame-position table to every token's time slice, then all
// temporal blocks, tokens independent. Clip length must match the table.
std::vector<Var> temporal_pass(Graph& g, const std::vector<Var>& x, const TrajectoryParams& p);

// mix_tokens then the configured block order: "stacked" runs every spatial
// block then every temporal block (the composition of the passes above);
// "interleaved" spreads the temporal blocks between spatial groups, adding
// the position table before the first temporal block.
std::vector<Var> trajectory_forward(Graph& g, const std::vector<Var>& h_frames,
                                    const TrajectoryParams& p);

}  // namespace meshsmile
