#include "meshsmile/classifier.hpp"

#include "meshsmile/errors.hpp"

namespace meshsmile {

ModelConfig model_config_from(const RunConfig& cfg) {
  ModelConfig m;
  m.landmarks = cfg.count("model.landmarks");
  m.d = cfg.count("model.d");
  m.tokens = cfg.count("model.tokens");
  m.heads = cfg.count("model.heads");
  m.blocks_spatial = cfg.count("model.blocks_spatial");
  m.blocks_temporal = cfg.count("model.blocks_temporal");
  m.block_order = cfg.text("model.block_order");
  m.curves = cfg.count("model.curves");
  m.curve_len = cfg.count("model.curve_len");
  m.knn = cfg.count("model.knn");
  m.tau = cfg.number("model.tau");
  m.use_curvenet = cfg.flag("model.use_curvenet");
  m.use_spatial = cfg.flag("model.use_spatial");
  m.use_temporal = cfg.flag("model.use_temporal");
  m.pool = cfg.text("model.pool");
  m.normalize = parse_normalize_mode(cfg.text("model.normalize"));
  m.clip_len = cfg.count("train.clip_len");
  m.eval_clips = cfg.count("train.eval_clips");

  require(m.landmarks >= 1 && m.d >= 1 && m.tokens >= 1, ErrorKind::ConfigInvalid,
          "model.landmarks, model.d, and model.tokens must be positive");
  require(m.heads >= 1 && m.d % m.heads == 0, ErrorKind::ConfigInvalid,
          "model.heads must be positive and divide model.d");
  require(m.block_order == "stacked" || m.block_order == "interleaved",
          ErrorKind::ConfigInvalid, "model.block_order must be stacked or interleaved");
  require(m.pool == "mean" || m.pool == "max", ErrorKind::ConfigInvalid,
          "model.pool must be mean or max");
  require(m.tau > 0.0, ErrorKind::ConfigInvalid, "model.tau must be positive");
  require(m.clip_len >= 1 && m.eval_clips >= 1, ErrorKind::ConfigInvalid,
          "train.clip_len and train.eval_clips must be positive");
  if (m.use_curvenet) {
    require(m.curves >= 1 && m.curves <= m.landmarks, ErrorKind::ConfigInvalid,
            "model.curves must be positive and at most model.landmarks");
    require(m.curve_len >= 1, ErrorKind::ConfigInvalid, "model.curve_len must be positive");
    require(m.knn >= 1 && m.knn + 1 <= m.landmarks, ErrorKind::ConfigInvalid,
            "model.knn needs that many other landmarks per frame");
  }
  return m;
}

void build_model(Model& m, const ModelConfig& cfg, std::uint64_t seed) {
  require(m.store.count() == 0, ErrorKind::InvariantViolation, "model already built");
  m.cfg = cfg;
  Rng rng(seed);
  m.relativity = make_relativity(m.store, "rel", cfg.curve_config(), cfg.use_curvenet, rng);
  m.trajectory = make_trajectory(m.store, "traj", cfg.landmarks, cfg.tokens, cfg.d, cfg.heads,
                                 cfg.blocks_spatial, cfg.blocks_temporal, cfg.clip_len,
                                 cfg.block_order, cfg.use_spatial, cfg.use_temporal, rng);
  m.head.ln = make_layer_norm(m.store, "head.ln", cfg.d);
  m.head.out = make_linear(m.store, "head.out", 1, cfg.d, rng);
}

Var classify_head(Graph& g, const std::vector<Var>& tokens, const HeadParams& head,
                  const std::string& pool) {
  require(!tokens.empty(), ErrorKind::ShapeMismatch, "classify_head needs token features");
  Var stacked = tokens.size() == 1 ? tokens[0] : g.concat_rows(tokens);
  Var pooled;
  if (pool == "mean")
    pooled = g.mean_rows(stacked);
  else if (pool == "max")
    pooled = g.max_rows(stacked);
  else
    fail(ErrorKind::ConfigInvalid, "pool must be mean or max: " + pool);
  return g.sigmoid(linear(g, layer_norm(g, pooled, head.ln), head.out));
}

std::vector<Tensor> normalized_coords(const Clip& clip, NormalizeMode mode) {
  std::vector<Tensor> out;
  out.reserve(clip.frames.size());
  if (mode == NormalizeMode::Video) {
    require(!clip.frames.empty(), ErrorKind::ShapeMismatch, "empty clip");
    FrameStats stats = compute_frame_stats(clip.frames[0].as_tensor());
    for (const LandmarkFrame& f : clip.frames)
      out.push_back(normalize_coords_with(f.as_tensor(), stats));
    return out;
  }
  for (const LandmarkFrame& f : clip.frames)
    out.push_back(mode == NormalizeMode::Frame ? normalize_coords(f.as_tensor())
                                               : f.as_tensor());
  return out;
}

namespace {

void check_clip(const Model& m, const Clip& clip) {
  require(clip.frames.size() == m.cfg.clip_len, ErrorKind::ShapeMismatch,
          "clip length disagrees with the configured frame count");
  for (const LandmarkFrame& f : clip.frames)
    require(f.landmark_count() == m.cfg.landmarks, ErrorKind::ShapeMismatch,
            "clip landmark count disagrees with the model");
}

}  // namespace

ClipForward forward_clip_graph(Graph& g, Model& m, const Clip& clip, WalkMode mode, Rng* rng,
                               const ClipPlan* forced, ClipPlan* record) {
  check_clip(m, clip);
  if (forced != nullptr)
    require(forced->size() == clip.frames.size(), ErrorKind::InvariantViolation,
            "clip plan length disagrees with the clip");
  if (record != nullptr) record->assign(clip.frames.size(), FramePlan{});

  std::vector<Tensor> coords = normalized_coords(clip, m.cfg.normalize);
  CurveConfig cc = m.cfg.curve_config();
  ClipForward out;
  std::vector<Var> features;
  features.reserve(coords.size());
  for (std::size_t i = 0; i < coords.size(); ++i) {
    RelativityOut ro = relativity_forward(g, coords[i], m.relativity, cc, m.cfg.tau, mode, rng,
                                          forced != nullptr ? &(*forced)[i] : nullptr,
                                          record != nullptr ? &(*record)[i] : nullptr);
    features.push_back(ro.features);
    out.coords.push_back(ro.coords);
  }
  std::vector<Var> tokens = trajectory_forward(g, features, m.trajectory);
  out.score = classify_head(g, tokens, m.head, m.cfg.pool);
  return out;
}

Prediction forward_clip(Model& m, const Clip& clip, WalkMode mode, Rng* rng) {
  if (mode != WalkMode::Eval) {
    Graph g;
    return {g.value(forward_clip_graph(g, m, clip, mode, rng).score).item()};
  }
  check_clip(m, clip);
  std::vector<Tensor> coords = normalized_coords(clip, m.cfg.normalize);
  CurveConfig cc = m.cfg.curve_config();
  Graph main;
  std::vector<Var> features;
  features.reserve(coords.size());
  for (const Tensor& c : coords) {
    // Forward-only scratch graph per frame; only the final features survive.
    Graph scratch;
    RelativityOut ro =
        relativity_forward(scratch, c, m.relativity, cc, m.cfg.tau, WalkMode::Eval);
    features.push_back(main.constant(scratch.value(ro.features)));
  }
  std::vector<Var> tokens = trajectory_forward(main, features, m.trajectory);
  return {main.value(classify_head(main, tokens, m.head, m.cfg.pool)).item()};
}

Prediction predict_video(Model& m, const LandmarkSequence& seq) {
  std::vector<Clip> clips = sample_eval_clips(seq, m.cfg.clip_len, m.cfg.eval_clips);
  double sum = 0.0;
  for (const Clip& c : clips) sum += forward_clip(m, c).score;
  return {sum / static_cast<double>(clips.size())};
}

}  // namespace meshsmile
