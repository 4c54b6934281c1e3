#pragma once

#include <cstdint>
#include <vector>

#include "meshsmile/graph.hpp"
#include "meshsmile/layers.hpp"
#include "meshsmile/rng.hpp"
#include "meshsmile/tensor.hpp"

namespace meshsmile {

// Per-frame geometry network: CIC layers interleaved with grouped curve
// walks, mapping [L, 3] coordinates to [L, d] landmark features.

struct CurveConfig {
  std::size_t n_curves = 8;   // curves walked per grouping stage
  std::size_t curve_len = 16; // landmarks per curve including the start
  std::size_t knn = 8;        // neighborhood size for edges and walks
  std::size_t d = 64;         // feature width
};

// How walk picks behave:
//   Train - hard straight-through picks with Gumbel noise; start features
//           gated by sigmoid(score) so the scorer learns.
//   Eval  - deterministic argmax picks, hard gathers, no gating.
//   Soft  - deterministic picks but the features that flow onward are the
//           soft candidate mixtures, and gating stays on. Every parameter
//           influences the output smoothly, which makes this the mode the
//           finite-difference checks run in (with a frozen plan).
enum class WalkMode { Train, Eval, Soft };

// Recorded discrete decisions of one frame's forward pass. Replaying a plan
// pins the neighbor tables and every pick, turning the pass into a smooth
// function of parameters and coordinates.
struct WalkRecord {
  std::size_t start = 0;
  std::vector<std::size_t> picks;  // landmark chosen at each executed step
};
struct GroupPlan {
  std::vector<std::size_t> starts;
  std::vector<WalkRecord> walks;
};
struct FramePlan {
  std::vector<std::vector<std::size_t>> knn;
  std::vector<GroupPlan> groups;
};

struct Curve {
  std::vector<std::size_t> indices;  // visited landmarks, no repeats
  Var steps;                         // [curve_len, d], padded by repetition
};

struct CicParams {
  MlpParams edge;  // [f_j ; f_j - f_l ; p_j - p_l] -> width
};

struct CurveGroupParams {
  LinearParams start_score;  // d -> 1
  LinearParams phi;          // walk-state query projection
  LinearParams psi;          // candidate key projection
  MlpParams state;           // [r ; picked] -> next state
  MlpParams descriptor;      // [max ; mean] over steps -> curve descriptor
};

struct RelativityParams {
  bool use_curvenet = true;
  CicParams cic1, cic2, cic3, cic4;
  CurveGroupParams group1, group2;
  LinearParams lift;  // 3 -> d direct path when use_curvenet is off
};

// Registers all weights in the store under `prefix.`.
RelativityParams make_relativity(ParamStore& store, const std::string& prefix,
                                 const CurveConfig& cfg, bool use_curvenet, Rng& rng);

// Lowest-scoring-index tie rule; scores is the [L, 1] projection column.
std::vector<std::size_t> select_curve_starts(const Tensor& scores, std::size_t c);

// One local-geometry layer: per landmark, max over kNN edge messages
// MLP([f_j ; f_j - f_l ; p_j - p_l]), residual when widths match.
Var cic_layer(Graph& g, Var features, Var coords,
              const std::vector<std::vector<std::size_t>>& knn, const MlpParams& edge);

// Walks one curve from `start`. Candidates at each step are the current
// landmark's kNN minus already-visited landmarks, scanned in neighbor order
// (nearest first; exact ties keep the earlier candidate). Terminates early
// when no candidate remains and pads step features by repeating the last row.
Curve walk_curve(Graph& g, Var features, std::size_t start,
                 const std::vector<std::vector<std::size_t>>& knn,
                 const CurveGroupParams& params, const CurveConfig& cfg, double tau,
                 WalkMode mode, Rng* rng, const WalkRecord* forced, WalkRecord* record);

// Fuses curve descriptors back into landmark features:
// h'_l = f_l + sum_c alpha_{l,c} D_c, alpha = softmax_c(<f_l, D_c>/sqrt(d)).
Var aggregate_curves(Graph& g, Var features, const std::vector<Curve>& curves,
                     const MlpParams& descriptor);

// Full grouping stage: score starts, walk c curves, aggregate.
Var curve_grouping(Graph& g, Var features, const std::vector<std::vector<std::size_t>>& knn,
                   const CurveGroupParams& params, const CurveConfig& cfg, double tau,
                   WalkMode mode, Rng* rng, const GroupPlan* forced, GroupPlan* record,
                   std::vector<Curve>* curves_out = nullptr);

struct RelativityOut {
  Var features;  // [L, d]
  Var coords;    // the [L, 3] graph input; saliency reads its gradient
};

// coords: [L, 3] normalized landmark positions. When `forced` is given its
// neighbor tables and picks replace live decisions; when `record` is given
// the decisions taken are written there.
RelativityOut relativity_forward(Graph& g, const Tensor& coords, RelativityParams& params,
                                 const CurveConfig& cfg, double tau, WalkMode mode,
                                 Rng* rng = nullptr, const FramePlan* forced = nullptr,
                                 FramePlan* record = nullptr);

}  // namespace meshsmile
