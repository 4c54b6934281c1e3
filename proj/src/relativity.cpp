#include "meshsmile/relativity.hpp"

#include <algorithm>
#include <cmath>

#include "meshsmile/errors.hpp"

namespace meshsmile {

RelativityParams make_relativity(ParamStore& store, const std::string& prefix,
                                 const CurveConfig& cfg, bool use_curvenet, Rng& rng) {
  RelativityParams p;
  p.use_curvenet = use_curvenet;
  const std::size_t d = cfg.d;
  require(d >= 1, ErrorKind::ConfigInvalid, "feature width must be at least 1");
  if (!use_curvenet) {
    p.lift = make_linear(store, prefix + ".lift", d, 3, rng);
    return p;
  }
  p.cic1.edge = make_mlp(store, prefix + ".cic1.edge", 2 * 3 + 3, d, d, rng);
  p.cic2.edge = make_mlp(store, prefix + ".cic2.edge", 2 * d + 3, d, d, rng);
  p.cic3.edge = make_mlp(store, prefix + ".cic3.edge", 2 * d + 3, d, d, rng);
  p.cic4.edge = make_mlp(store, prefix + ".cic4.edge", 2 * d + 3, d, d, rng);
  for (std::size_t gi = 0; gi < 2; ++gi) {
    CurveGroupParams& grp = gi == 0 ? p.group1 : p.group2;
    const std::string base = prefix + ".group" + std::to_string(gi + 1);
    grp.start_score = make_linear(store, base + ".score", 1, d, rng);
    grp.phi = make_linear(store, base + ".phi", d, d, rng);
    grp.psi = make_linear(store, base + ".psi", d, d, rng);
    grp.state = make_mlp(store, base + ".state", 2 * d, d, d, rng);
    grp.descriptor = make_mlp(store, base + ".desc", 2 * d, d, d, rng);
  }
  return p;
}

std::vector<std::size_t> select_curve_starts(const Tensor& scores, std::size_t c) {
  require(scores.rank() == 1 || (scores.rank() == 2 && scores.cols() == 1),
          ErrorKind::ShapeMismatch, "start scores must be a column");
  require(c >= 1 && c <= scores.size(), ErrorKind::COutOfRange,
          "curve count outside [1, L]");
  Tensor flat = Tensor::vector(scores.values());
  return top_k_select(flat, c);
}

Var cic_layer(Graph& g, Var features, Var coords,
              const std::vector<std::vector<std::size_t>>& knn, const MlpParams& edge) {
  // Dimensions are copied out immediately: node storage reallocates as ops
  // are added, so references from value() must not be held across them.
  require(g.value(features).rank() == 2 && g.value(coords).rank() == 2 &&
              g.value(coords).cols() == 3,
          ErrorKind::ShapeMismatch, "cic_layer expects [L, w] features and [L, 3] coords");
  const std::size_t L = g.value(features).rows();
  const std::size_t w_in = g.value(features).cols();
  require(g.value(coords).rows() == L && knn.size() == L, ErrorKind::ShapeMismatch,
          "features, coords, and neighbor table must agree on L");

  std::vector<std::size_t> centers, nbrs, group_of_row;
  for (std::size_t l = 0; l < L; ++l) {
    require(!knn[l].empty(), ErrorKind::KOutOfRange, "empty neighbor list");
    for (std::size_t j : knn[l]) {
      require(j < L, ErrorKind::KOutOfRange, "neighbor index out of range");
      centers.push_back(l);
      nbrs.push_back(j);
      group_of_row.push_back(l);
    }
  }

  Var f_center = g.gather_rows(features, centers);
  Var f_nbr = g.gather_rows(features, nbrs);
  Var p_center = g.gather_rows(coords, centers);
  Var p_nbr = g.gather_rows(coords, nbrs);
  Var edge_in = g.concat_cols(
      {f_nbr, g.sub(f_nbr, f_center), g.sub(p_nbr, p_center)});
  Var messages = mlp(g, edge_in, edge);
  Var pooled = g.group_max_rows(messages, group_of_row, L);
  if (g.value(pooled).cols() == w_in) pooled = g.add(pooled, features);
  return pooled;
}

namespace {

// Neighbor-order candidate list at the current landmark, visited excluded.
std::vector<std::size_t> walk_candidates(const std::vector<std::size_t>& neighbors,
                                         const std::vector<bool>& visited) {
  std::vector<std::size_t> out;
  for (std::size_t j : neighbors)
    if (!visited[j]) out.push_back(j);
  return out;
}

}  // namespace

Curve walk_curve(Graph& g, Var features, std::size_t start,
                 const std::vector<std::vector<std::size_t>>& knn,
                 const CurveGroupParams& params, const CurveConfig& cfg, double tau,
                 WalkMode mode, Rng* rng, const WalkRecord* forced, WalkRecord* record) {
  const std::size_t L = g.value(features).rows();
  const std::size_t d = g.value(features).cols();
  require(start < L, ErrorKind::InvariantViolation, "walk start out of range");
  require(cfg.curve_len >= 1, ErrorKind::ConfigInvalid, "curve length must be at least 1");
  if (mode != WalkMode::Eval)
    require(tau > 0.0, ErrorKind::NonPositiveTemperature, "temperature must be positive");
  if (mode == WalkMode::Train && forced == nullptr)
    require(rng != nullptr, ErrorKind::InvariantViolation, "training walks need a random stream");
  if (record != nullptr) {
    record->start = start;
    record->picks.clear();
  }

  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Curve curve;
  curve.indices.push_back(start);
  std::vector<bool> visited(L, false);
  visited[start] = true;

  Var r = g.gather_rows(features, {start});
  if (mode != WalkMode::Eval) {
    Var gate = g.sigmoid(linear(g, r, params.start_score));  // [1, 1]
    r = g.matmul(gate, r);
  }
  std::vector<Var> steps;
  steps.push_back(r);

  std::size_t cur = start;
  for (std::size_t step = 1; step < cfg.curve_len; ++step) {
    const std::vector<std::size_t> candidates = walk_candidates(knn[cur], visited);
    if (candidates.empty()) break;

    Var cand_f = g.gather_rows(features, candidates);
    Var logits = g.scale(
        g.matmul(linear(g, r, params.phi), g.transpose(linear(g, cand_f, params.psi))),
        inv_sqrt_d);

    std::size_t pick_pos;
    Var picked{0};
    if (mode == WalkMode::Train && forced == nullptr) {
      Tensor noise = Tensor::zeros({1, candidates.size()});
      for (std::size_t i = 0; i < noise.size(); ++i) noise[i] = rng->gumbel();
      PickResult pick = st_pick(g, logits, tau, &noise);
      pick_pos = pick.index;
      picked = g.matmul(pick.onehot, cand_f);
    } else {
      if (forced != nullptr) {
        require(step - 1 < forced->picks.size(), ErrorKind::InvariantViolation,
                "walk plan shorter than the walk");
        const std::size_t target = forced->picks[step - 1];
        auto it = std::find(candidates.begin(), candidates.end(), target);
        require(it != candidates.end(), ErrorKind::InvariantViolation,
                "walk plan names a landmark that is not a candidate");
        pick_pos = static_cast<std::size_t>(it - candidates.begin());
      } else {
        pick_pos = argmax_index(g.value(logits));
      }
      if (mode == WalkMode::Eval) {
        picked = g.gather_rows(cand_f, {pick_pos});
      } else if (mode == WalkMode::Soft) {
        Var soft = g.softmax_rows(g.scale(logits, 1.0 / tau));
        picked = g.matmul(soft, cand_f);
      } else {  // forced train replay: straight-through without fresh noise
        Var soft = g.softmax_rows(g.scale(logits, 1.0 / tau));
        Var onehot = g.straight_through_onehot(soft, pick_pos);
        picked = g.matmul(onehot, cand_f);
      }
    }

    cur = candidates[pick_pos];
    visited[cur] = true;
    curve.indices.push_back(cur);
    if (record != nullptr) record->picks.push_back(cur);
    r = mlp(g, g.concat_cols({r, picked}), params.state);
    steps.push_back(picked);
  }

  while (steps.size() < cfg.curve_len) steps.push_back(steps.back());
  curve.steps = steps.size() == 1 ? steps[0] : g.concat_rows(steps);
  return curve;
}

Var aggregate_curves(Graph& g, Var features, const std::vector<Curve>& curves,
                     const MlpParams& descriptor) {
  require(!curves.empty(), ErrorKind::NoCurves, "no curves to aggregate");
  const std::size_t d = g.value(features).cols();
  std::vector<Var> descs;
  descs.reserve(curves.size());
  for (const Curve& c : curves) {
    Var pooled = g.concat_cols({g.max_rows(c.steps), g.mean_rows(c.steps)});
    descs.push_back(mlp(g, pooled, descriptor));
  }
  Var D = descs.size() == 1 ? descs[0] : g.concat_rows(descs);
  Var alpha = g.softmax_rows(
      g.scale(g.matmul(features, g.transpose(D)), 1.0 / std::sqrt(static_cast<double>(d))));
  return g.add(features, g.matmul(alpha, D));
}

Var curve_grouping(Graph& g, Var features, const std::vector<std::vector<std::size_t>>& knn,
                   const CurveGroupParams& params, const CurveConfig& cfg, double tau,
                   WalkMode mode, Rng* rng, const GroupPlan* forced, GroupPlan* record,
                   std::vector<Curve>* curves_out) {
  require(cfg.n_curves >= 1, ErrorKind::COutOfRange, "need at least one curve");
  std::vector<std::size_t> starts;
  if (forced != nullptr) {
    starts = forced->starts;
    require(starts.size() == cfg.n_curves, ErrorKind::InvariantViolation,
            "plan start count disagrees with the configuration");
  } else {
    Var score_col = linear(g, features, params.start_score);
    starts = select_curve_starts(g.value(score_col), cfg.n_curves);
  }
  if (record != nullptr) {
    record->starts = starts;
    record->walks.assign(cfg.n_curves, WalkRecord{});
  }

  std::vector<Curve> curves;
  curves.reserve(cfg.n_curves);
  for (std::size_t c = 0; c < cfg.n_curves; ++c) {
    curves.push_back(walk_curve(g, features, starts[c], knn, params, cfg, tau, mode, rng,
                                forced != nullptr ? &forced->walks[c] : nullptr,
                                record != nullptr ? &record->walks[c] : nullptr));
  }
  Var out = aggregate_curves(g, features, curves, params.descriptor);
  if (curves_out != nullptr) *curves_out = std::move(curves);
  return out;
}

RelativityOut relativity_forward(Graph& g, const Tensor& coords, RelativityParams& params,
                                 const CurveConfig& cfg, double tau, WalkMode mode, Rng* rng,
                                 const FramePlan* forced, FramePlan* record) {
  require(coords.rank() == 2 && coords.cols() == 3, ErrorKind::ShapeMismatch,
          "expected [L, 3] coordinates");
  Var coord_var = g.input(coords);
  if (!params.use_curvenet) {
    if (record != nullptr) *record = FramePlan{};
    return RelativityOut{linear(g, coord_var, params.lift), coord_var};
  }

  const std::vector<std::vector<std::size_t>> knn =
      forced != nullptr ? forced->knn : knn_indices(coords, cfg.knn);
  if (forced != nullptr)
    require(forced->groups.size() == 2, ErrorKind::InvariantViolation,
            "frame plan must carry both grouping stages");
  if (record != nullptr) {
    record->knn = knn;
    record->groups.assign(2, GroupPlan{});
  }

  Var f = cic_layer(g, coord_var, coord_var, knn, params.cic1.edge);
  f = cic_layer(g, f, coord_var, knn, params.cic2.edge);
  f = curve_grouping(g, f, knn, params.group1, cfg, tau, mode, rng,
                     forced != nullptr ? &forced->groups[0] : nullptr,
                     record != nullptr ? &record->groups[0] : nullptr);
  f = cic_layer(g, f, coord_var, knn, params.cic3.edge);
  f = cic_layer(g, f, coord_var, knn, params.cic4.edge);
  f = curve_grouping(g, f, knn, params.group2, cfg, tau, mode, rng,
                     forced != nullptr ? &forced->groups[1] : nullptr,
                     record != nullptr ? &record->groups[1] : nullptr);
  return RelativityOut{f, coord_var};
}

}  // namespace meshsmile
