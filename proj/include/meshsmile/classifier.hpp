#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshsmile/config.hpp"
#include "meshsmile/graph.hpp"
#include "meshsmile/landmark.hpp"
#include "meshsmile/layers.hpp"
#include "meshsmile/relativity.hpp"
#include "meshsmile/trajectory.hpp"

namespace meshsmile {

// Whole-model assembly: per-frame geometry features, token-sequence
// attention, then pool / layer norm / linear / sigmoid down to one score.

struct Prediction {
  double score = 0.0;  // probability of the posed class, in [0, 1]
};

// Architecture and preprocessing settings resolved from a RunConfig.
struct ModelConfig {
  std::size_t landmarks = 478;
  std::size_t d = 64;
  std::size_t tokens = 32;
  std::size_t heads = 4;
  std::size_t blocks_spatial = 6;
  std::size_t blocks_temporal = 3;
  std::string block_order = "stacked";
  std::size_t curves = 8;
  std::size_t curve_len = 16;
  std::size_t knn = 8;
  double tau = 1.0;
  bool use_curvenet = true;
  bool use_spatial = true;
  bool use_temporal = true;
  std::string pool = "mean";
  NormalizeMode normalize = NormalizeMode::Frame;
  std::size_t clip_len = 16;   // frames per clip, N_clip
  std::size_t eval_clips = 5;  // clips averaged per video at eval

  CurveConfig curve_config() const { return {curves, curve_len, knn, d}; }
};

// Reads model.* plus train.clip_len / train.eval_clips and validates the
// combination (head divisibility, neighborhood size, pool name, ...).
ModelConfig model_config_from(const RunConfig& cfg);

struct HeadParams {
  LayerNormParams ln;
  LinearParams out;  // d -> 1 logit
};

// All weights plus the settings they were built for. Parameter structs point
// into the store, so a model stays where it was built.
struct Model {
  ModelConfig cfg;
  ParamStore store;
  RelativityParams relativity;
  TrajectoryParams trajectory;
  HeadParams head;

  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
};

void build_model(Model& m, const ModelConfig& cfg, std::uint64_t seed);

// Pools token features over frames and tokens (mean or max per config) into
// one d-vector, then layer norm, linear to a single logit, sigmoid.
Var classify_head(Graph& g, const std::vector<Var>& tokens, const HeadParams& head,
                  const std::string& pool);

// Per-frame [L, 3] coordinate tensors after the configured normalization:
// frame = each frame by its own stats, video = every frame by the first
// frame's stats (preserves global motion), off = raw.
std::vector<Tensor> normalized_coords(const Clip& clip, NormalizeMode mode);

using ClipPlan = std::vector<FramePlan>;  // one frame plan per clip frame

struct ClipForward {
  Var score;                // [1, 1]
  std::vector<Var> coords;  // per-frame inputs; saliency reads their gradients
};

// Whole clip in one graph so gradients flow to every parameter and input.
// Used by training, gradient checks, and saliency; eval-scale inference goes
// through forward_clip below instead.
ClipForward forward_clip_graph(Graph& g, Model& m, const Clip& clip, WalkMode mode, Rng* rng,
                               const ClipPlan* forced = nullptr, ClipPlan* record = nullptr);

// Scores one clip. Eval mode runs each frame's geometry network in a scratch
// graph (forward only, no gradients) so wide default-size models stay cheap;
// other modes delegate to forward_clip_graph.
Prediction forward_clip(Model& m, const Clip& clip, WalkMode mode = WalkMode::Eval,
                        Rng* rng = nullptr);

// Arithmetic mean of eval scores over the configured number of evenly
// spaced clips of the sequence.
Prediction predict_video(Model& m, const LandmarkSequence& seq);

// Decision rule: score >= 0.5 reads as posed (label 1).
inline bool decide_posed(double score) { return score >= 0.5; }
inline int decide_label(double score) { return decide_posed(score) ? 1 : 0; }

}  // namespace meshsmile
