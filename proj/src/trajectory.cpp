#include "meshsmile/trajectory.hpp"

#include "meshsmile/errors.hpp"

namespace meshsmile {

TrajectoryParams make_trajectory(ParamStore& store, const std::string& prefix, std::size_t L,
                                 std::size_t tokens, std::size_t d, std::size_t heads,
                                 std::size_t n_spatial, std::size_t n_temporal,
                                 std::size_t n_clip, const std::string& block_order,
                                 bool use_spatial, bool use_temporal, Rng& rng) {
  require(block_order == "stacked" || block_order == "interleaved", ErrorKind::ConfigInvalid,
          "block order must be stacked or interleaved");
  require(tokens >= 1 && L >= 1 && n_clip >= 1, ErrorKind::ConfigInvalid,
          "token, landmark, and clip counts must be positive");
  TrajectoryParams p;
  p.block_order = block_order;
  p.use_spatial = use_spatial;
  p.use_temporal = use_temporal;
  p.mix_w = &store.weight(prefix + ".mix.w", tokens, L, rng);
  p.mix_b = &store.zeros(prefix + ".mix.b", tokens);
  if (use_spatial)
    for (std::size_t i = 0; i < n_spatial; ++i)
      p.spatial.push_back(make_block(store, prefix + ".sp" + std::to_string(i), d, heads, rng));
  if (use_temporal) {
    for (std::size_t i = 0; i < n_temporal; ++i)
      p.temporal.push_back(make_block(store, prefix + ".tm" + std::to_string(i), d, heads, rng));
    p.pos = &store.zero_matrix(prefix + ".pos", n_clip, d);
  }
  return p;
}

std::vector<Var> mix_tokens(Graph& g, const std::vector<Var>& frames,
                            const TrajectoryParams& p) {
  require(!frames.empty(), ErrorKind::ShapeMismatch, "mix_tokens needs at least one frame");
  const std::size_t L = p.mix_w->value.cols();
  Var w = g.param(*p.mix_w);
  Var b = g.param(*p.mix_b);
  std::vector<Var> out;
  out.reserve(frames.size());
  for (Var f : frames) {
    require(g.value(f).rank() == 2 && g.value(f).rows() == L, ErrorKind::ShapeMismatch,
            "frame features disagree with the mixing width");
    out.push_back(g.add_bias_cols(g.matmul(w, f), b));
  }
  return out;
}

namespace {

std::vector<Var> run_blocks(Graph& g, std::vector<Var> x,
                            const std::vector<BlockParams>& blocks, std::size_t first,
                            std::size_t count) {
  for (std::size_t i = first; i < first + count; ++i)
    for (Var& f : x) f = transformer_block(g, f, blocks[i]);
  return x;
}

// [frame][T, d] -> [token][N, d].
std::vector<Var> to_token_major(Graph& g, const std::vector<Var>& x) {
  const std::size_t tokens = g.value(x[0]).rows();
  std::vector<Var> out;
  out.reserve(tokens);
  for (std::size_t t = 0; t < tokens; ++t) {
    std::vector<Var> rows;
    rows.reserve(x.size());
    for (Var f : x) rows.push_back(g.gather_rows(f, {t}));
    out.push_back(rows.size() == 1 ? rows[0] : g.concat_rows(rows));
  }
  return out;
}

std::vector<Var> to_frame_major(Graph& g, const std::vector<Var>& z, std::size_t n_frames) {
  std::vector<Var> out;
  out.reserve(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    std::vector<Var> rows;
    rows.reserve(z.size());
    for (Var t : z) rows.push_back(g.gather_rows(t, {f}));
    out.push_back(rows.size() == 1 ? rows[0] : g.concat_rows(rows));
  }
  return out;
}

std::vector<Var> temporal_blocks(Graph& g, std::vector<Var> x, const TrajectoryParams& p,
                                 bool add_position, std::size_t first, std::size_t count) {
  const std::size_t n_frames = x.size();
  require(p.pos != nullptr && p.pos->value.rows() == n_frames, ErrorKind::ShapeMismatch,
          "clip length must match the positional table");
  std::vector<Var> tokens = to_token_major(g, x);
  if (add_position) {
    Var pos = g.param(*p.pos);
    for (Var& t : tokens) t = g.add(t, pos);
  }
  tokens = run_blocks(g, std::move(tokens), p.temporal, first, count);
  return to_frame_major(g, tokens, n_frames);
}

}  // namespace

std::vector<Var> spatial_pass(Graph& g, const std::vector<Var>& x, const TrajectoryParams& p) {
  return run_blocks(g, x, p.spatial, 0, p.spatial.size());
}

std::vector<Var> temporal_pass(Graph& g, const std::vector<Var>& x, const TrajectoryParams& p) {
  return temporal_blocks(g, x, p, true, 0, p.temporal.size());
}

std::vector<Var> trajectory_forward(Graph& g, const std::vector<Var>& h_frames,
                                    const TrajectoryParams& p) {
  std::vector<Var> x = mix_tokens(g, h_frames, p);
  const bool spatial_on = p.use_spatial && !p.spatial.empty();
  const bool temporal_on = p.use_temporal && !p.temporal.empty();
  if (p.block_order == "stacked" || !spatial_on || !temporal_on) {
    if (spatial_on) x = spatial_pass(g, x, p);
    if (temporal_on) x = temporal_pass(g, x, p);
    return x;
  }
  // Interleaved: temporal block k follows the spatial slice [k S/T, (k+1) S/T),
  // with the position table added before the first temporal block.
  const std::size_t S = p.spatial.size();
  const std::size_t T = p.temporal.size();
  std::size_t done = 0;
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t until = (k + 1) * S / T;
    x = run_blocks(g, std::move(x), p.spatial, done, until - done);
    done = until;
    x = temporal_blocks(g, std::move(x), p, k == 0, k, 1);
  }
  x = run_blocks(g, std::move(x), p.spatial, done, S - done);
  return x;
}

}  // namespace meshsmile
