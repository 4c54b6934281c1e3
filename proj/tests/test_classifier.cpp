#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "meshsmile/classifier.hpp"
#include "meshsmile/errors.hpp"

using namespace meshsmile;
using meshsmile::testing::random_tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.landmarks = 6;
  c.d = 4;
  c.tokens = 3;
  c.heads = 2;
  c.blocks_spatial = 1;
  c.blocks_temporal = 1;
  c.curves = 2;
  c.curve_len = 3;
  c.knn = 2;
  c.clip_len = 3;
  c.eval_clips = 2;
  c.normalize = NormalizeMode::Off;
  return c;
}

LandmarkFrame random_frame(std::size_t L, Rng& rng) {
  LandmarkFrame f;
  f.coords.resize(3 * L);
  for (float& v : f.coords) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return f;
}

Clip random_clip(std::size_t n, std::size_t L, Rng& rng) {
  Clip c;
  c.source_id = "clip";
  for (std::size_t i = 0; i < n; ++i) c.frames.push_back(random_frame(L, rng));
  return c;
}

LandmarkSequence random_sequence(std::size_t n, std::size_t L, Rng& rng) {
  LandmarkSequence s;
  s.fps = 25.0;
  s.video_id = "vid";
  s.subject_id = "subj";
  for (std::size_t i = 0; i < n; ++i) s.frames.push_back(random_frame(L, rng));
  return s;
}

double o_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Head oracle: mean or max pool rows, layer norm, linear to one logit.
double o_head(const std::vector<Tensor>& tokens, const Tensor& gamma, const Tensor& beta,
              const Tensor& w, double b, const std::string& pool) {
  const std::size_t d = tokens[0].cols();
  std::vector<double> pooled(d, pool == "max" ? -1e300 : 0.0);
  std::size_t rows = 0;
  for (const Tensor& t : tokens) {
    for (std::size_t r = 0; r < t.rows(); ++r, ++rows)
      for (std::size_t c = 0; c < d; ++c) {
        if (pool == "max")
          pooled[c] = std::max(pooled[c], t.at(r, c));
        else
          pooled[c] += t.at(r, c);
      }
  }
  if (pool == "mean")
    for (double& v : pooled) v /= static_cast<double>(rows);
  double mean = 0.0;
  for (double v : pooled) mean += v;
  mean /= static_cast<double>(d);
  double var = 0.0;
  for (double v : pooled) var += (v - mean) * (v - mean);
  var /= static_cast<double>(d);
  double logit = b;
  for (std::size_t c = 0; c < d; ++c) {
    double n = gamma[c] * (pooled[c] - mean) / std::sqrt(var + 1e-5) + beta[c];
    logit += w.at(0, c) * n;
  }
  return o_sigmoid(logit);
}

}  // namespace

TEST_CASE("classification head") {
  ParamStore store;
  Rng rng(1);
  HeadParams head;
  head.ln = make_layer_norm(store, "h.ln", 4);
  head.out = make_linear(store, "h.out", 1, 4, rng);

  SUBCASE("zero weights and bias give exactly one half") {
    for (std::size_t i = 0; i < head.out.w->value.size(); ++i) head.out.w->value[i] = 0.0;
    head.out.b->value[0] = 0.0;
    Rng dr(2);
    Graph g;
    Var t = g.input(random_tensor({3, 4}, dr));
    CHECK(g.value(classify_head(g, {t}, head, "mean")).item() == 0.5);
  }
  SUBCASE("bias ten saturates the sigmoid") {
    for (std::size_t i = 0; i < head.out.w->value.size(); ++i) head.out.w->value[i] = 0.0;
    head.out.b->value[0] = 10.0;
    Rng dr(3);
    Graph g;
    Var t = g.input(random_tensor({2, 4}, dr));
    CHECK(g.value(classify_head(g, {t}, head, "mean")).item() ==
          doctest::Approx(0.9999546021312976).epsilon(1e-12));
  }
  SUBCASE("constant pooled vector reduces the norm to its shift") {
    // Zero-variance input: the normalized value is 0, so only beta reaches
    // the linear layer.
    for (std::size_t i = 0; i < 4; ++i) head.ln.beta->value[i] = 0.1 * (i + 1.0);
    Graph g;
    Tensor c = Tensor::zeros({2, 4});
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.75;
    Var t = g.input(c);
    double logit = head.out.b->value[0];
    for (std::size_t i = 0; i < 4; ++i)
      logit += head.out.w->value.at(0, i) * head.ln.beta->value[i];
    CHECK(g.value(classify_head(g, {t}, head, "mean")).item() ==
          doctest::Approx(o_sigmoid(logit)).epsilon(1e-9));
  }
  SUBCASE("mean and max pooling match the hand oracle over two frames") {
    Rng dr(4);
    for (std::size_t i = 0; i < 4; ++i) {
      head.ln.gamma->value[i] = dr.uniform(0.5, 1.5);
      head.ln.beta->value[i] = dr.uniform(-0.3, 0.3);
    }
    std::vector<Tensor> toks = {random_tensor({3, 4}, dr), random_tensor({3, 4}, dr)};
    for (const char* pool : {"mean", "max"}) {
      Graph g;
      std::vector<Var> tv = {g.input(toks[0]), g.input(toks[1])};
      double got = g.value(classify_head(g, tv, head, pool)).item();
      double want = o_head(toks, head.ln.gamma->value, head.ln.beta->value,
                           head.out.w->value, head.out.b->value[0], pool);
      CHECK(got == doctest::Approx(want).epsilon(1e-9));
      CHECK(got >= 0.0);
      CHECK(got <= 1.0);
    }
  }
  SUBCASE("rejections") {
    Graph g;
    CHECK_THROWS_AS(classify_head(g, {}, head, "mean"), Error);
    Var t = g.input(Tensor::zeros({2, 4}));
    CHECK_THROWS_AS(classify_head(g, {t}, head, "sum"), Error);
  }
}

TEST_CASE("model configuration") {
  SUBCASE("defaults resolve to the published architecture") {
    RunConfig rc;
    ModelConfig m = model_config_from(rc);
    CHECK(m.landmarks == 478);
    CHECK(m.d == 64);
    CHECK(m.tokens == 32);
    CHECK(m.heads == 4);
    CHECK(m.blocks_spatial == 6);
    CHECK(m.blocks_temporal == 3);
    CHECK(m.block_order == "stacked");
    CHECK(m.curves == 8);
    CHECK(m.curve_len == 16);
    CHECK(m.knn == 8);
    CHECK(m.tau == 1.0);
    CHECK(m.use_curvenet);
    CHECK(m.use_spatial);
    CHECK(m.use_temporal);
    CHECK(m.pool == "mean");
    CHECK(m.normalize == NormalizeMode::Frame);
    CHECK(m.clip_len == 16);
    CHECK(m.eval_clips == 5);
  }
  SUBCASE("invalid combinations are rejected") {
    auto with = [](std::initializer_list<std::pair<const char*, const char*>> kvs) {
      RunConfig rc;
      for (auto& [k, v] : kvs) rc.set(k, v);
      return rc;
    };
    CHECK_THROWS_AS(model_config_from(with({{"model.heads", "3"}})), Error);
    CHECK_THROWS_AS(model_config_from(with({{"model.pool", "sum"}})), Error);
    CHECK_THROWS_AS(model_config_from(with({{"model.tau", "0"}})), Error);
    CHECK_THROWS_AS(model_config_from(with({{"model.normalize", "banana"}})), Error);
    CHECK_THROWS_AS(model_config_from(with({{"model.block_order", "mixed"}})), Error);
    CHECK_THROWS_AS(
        model_config_from(with({{"model.landmarks", "8"}, {"model.knn", "8"}})), Error);
    CHECK_THROWS_AS(
        model_config_from(with({{"model.landmarks", "4"}, {"model.curves", "5"}})), Error);
    // Without the curve network the curve constraints do not apply.
    RunConfig off = with({{"model.landmarks", "8"}, {"model.knn", "8"}});
    off.set("model.use_curvenet", "false");
    CHECK(model_config_from(off).landmarks == 8);
  }
  SUBCASE("building registers every sub-network") {
    Model m;
    build_model(m, tiny_config(), 5);
    CHECK(m.store.count() > 0);
    bool has_rel = false, has_traj = false, has_head = false;
    for (Parameter* p : m.store.all()) {
      has_rel |= p->name.rfind("rel.", 0) == 0;
      has_traj |= p->name.rfind("traj.", 0) == 0;
      has_head |= p->name.rfind("head.", 0) == 0;
    }
    CHECK(has_rel);
    CHECK(has_traj);
    CHECK(has_head);
    CHECK(m.trajectory.spatial.size() == 1);
    CHECK(m.trajectory.temporal.size() == 1);
    CHECK_THROWS_AS(build_model(m, tiny_config(), 5), Error);
  }
}

TEST_CASE("normalization mode wiring") {
  Rng rng(7);
  LandmarkFrame base = random_frame(6, rng);
  LandmarkFrame moved = base;
  const float shift[3] = {0.25f, -0.5f, 0.125f};
  for (std::size_t l = 0; l < 6; ++l)
    for (std::size_t a = 0; a < 3; ++a) moved.coords[3 * l + a] += shift[a];
  Clip clip;
  clip.frames = {base, moved};

  SUBCASE("frame mode erases per-frame motion") {
    auto out = normalized_coords(clip, NormalizeMode::Frame);
    REQUIRE(out.size() == 2);
    for (std::size_t i = 0; i < out[0].size(); ++i)
      CHECK(out[1][i] == doctest::Approx(out[0][i]).epsilon(1e-6));
  }
  SUBCASE("video mode keeps motion relative to the first frame") {
    auto out = normalized_coords(clip, NormalizeMode::Video);
    FrameStats stats = compute_frame_stats(base.as_tensor());
    // (x + t - c0) / r0 = normalized(x) + t / r0.
    for (std::size_t l = 0; l < 6; ++l)
      for (std::size_t a = 0; a < 3; ++a)
        CHECK(out[1].at(l, a) == doctest::Approx(out[0].at(l, a) +
                                                 shift[a] / stats.mean_radius)
                                     .epsilon(1e-5));
  }
  SUBCASE("off mode passes coordinates through unchanged") {
    auto out = normalized_coords(clip, NormalizeMode::Off);
    Tensor raw = moved.as_tensor();
    for (std::size_t i = 0; i < raw.size(); ++i) CHECK(out[1][i] == raw[i]);
  }
}

TEST_CASE("clip scoring") {
  Model m;
  build_model(m, tiny_config(), 11);
  Rng rng(12);
  Clip clip = random_clip(3, 6, rng);

  SUBCASE("eval scoring is deterministic and in range") {
    Prediction a = forward_clip(m, clip);
    Prediction b = forward_clip(m, clip);
    CHECK(a.score == b.score);
    CHECK(a.score >= 0.0);
    CHECK(a.score <= 1.0);
  }
  SUBCASE("the scratch-graph eval path equals the single-graph pass") {
    Graph g;
    ClipForward full = forward_clip_graph(g, m, clip, WalkMode::Eval, nullptr);
    CHECK(forward_clip(m, clip).score == g.value(full.score).item());
  }
  SUBCASE("training mode scores stay in range") {
    Rng walk(13);
    Prediction p = forward_clip(m, clip, WalkMode::Train, &walk);
    CHECK(p.score >= 0.0);
    CHECK(p.score <= 1.0);
  }
  SUBCASE("shape errors") {
    Rng r2(14);
    CHECK_THROWS_AS(forward_clip(m, random_clip(2, 6, r2)), Error);   // wrong length
    CHECK_THROWS_AS(forward_clip(m, random_clip(3, 5, r2)), Error);   // wrong landmarks
  }
}

TEST_CASE("video prediction") {
  Model m;
  build_model(m, tiny_config(), 21);
  Rng rng(22);

  SUBCASE("the video score is exactly the mean of its clip scores") {
    LandmarkSequence seq = random_sequence(10, 6, rng);
    std::vector<Clip> clips = sample_eval_clips(seq, m.cfg.clip_len, m.cfg.eval_clips);
    REQUIRE(clips.size() == m.cfg.eval_clips);
    double sum = 0.0;
    for (const Clip& c : clips) sum += forward_clip(m, c).score;
    CHECK(predict_video(m, seq).score == sum / static_cast<double>(clips.size()));
  }
  SUBCASE("a short video collapses to one repeated clip") {
    LandmarkSequence seq = random_sequence(2, 6, rng);
    std::vector<Clip> clips = sample_eval_clips(seq, m.cfg.clip_len, m.cfg.eval_clips);
    for (std::size_t i = 1; i < clips.size(); ++i)
      for (std::size_t f = 0; f < clips[i].frames.size(); ++f)
        CHECK(std::memcmp(clips[i].frames[f].coords.data(), clips[0].frames[f].coords.data(),
                          clips[0].frames[f].coords.size() * sizeof(float)) == 0);
    CHECK(predict_video(m, seq).score ==
          doctest::Approx(forward_clip(m, clips[0]).score).epsilon(1e-15));
  }
  SUBCASE("decision rule") {
    CHECK(decide_posed(0.5));
    CHECK(decide_posed(0.7));
    CHECK_FALSE(decide_posed(0.4999));
    CHECK(decide_label(0.5) == 1);
    CHECK(decide_label(0.1) == 0);
  }
  SUBCASE("positive logit scaling never flips the decision") {
    Rng pr(23);
    for (int i = 0; i < 100; ++i) {
      double z = pr.uniform(-4.0, 4.0);
      double c = pr.uniform(0.01, 50.0);
      CHECK(decide_posed(o_sigmoid(c * z)) == decide_posed(o_sigmoid(z)));
    }
  }
}

TEST_CASE("full-pipeline gradients") {
  Model m;
  build_model(m, tiny_config(), 31);
  Rng rng(32);
  Clip clip = random_clip(3, 6, rng);
  std::vector<Tensor> coords;
  for (const LandmarkFrame& f : clip.frames) coords.push_back(f.as_tensor());
  CurveConfig cc = m.cfg.curve_config();

  // Same pipeline as the clip pass, but fed double-precision coordinate
  // tensors directly so finite differences are not quantized by the float
  // storage of clips. Probe loss is the score itself. The step ladder is
  // needed at this depth: the sigmoid end gives steep coordinates strong
  // curvature (small steps required) while walk-state parameters influence
  // the score at the 1e-9 level where only large steps rise above roundoff.
  auto score_graph = [&](Graph& g, const std::vector<Tensor>& cs, WalkMode mode,
                         const ClipPlan* plan, ClipPlan* record,
                         std::vector<Var>* coord_vars) {
    std::vector<Var> feats;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      RelativityOut ro =
          relativity_forward(g, cs[i], m.relativity, cc, m.cfg.tau, mode, nullptr,
                             plan != nullptr ? &(*plan)[i] : nullptr,
                             record != nullptr ? &(*record)[i] : nullptr);
      feats.push_back(ro.features);
      if (coord_vars != nullptr) coord_vars->push_back(ro.coords);
    }
    std::vector<Var> toks = trajectory_forward(g, feats, m.trajectory);
    return classify_head(g, toks, m.head, m.cfg.pool);
  };

  SUBCASE("the manual pipeline is the clip pass") {
    ClipPlan plan(3);
    Graph g1;
    Var s1 = score_graph(g1, coords, WalkMode::Soft, nullptr, &plan, nullptr);
    Graph g2;
    ClipForward cf = forward_clip_graph(g2, m, clip, WalkMode::Soft, nullptr);
    CHECK(g1.value(s1).item() == g2.value(cf.score).item());
  }

  for (WalkMode mode : {WalkMode::Soft, WalkMode::Eval}) {
    CAPTURE(static_cast<int>(mode));
    ClipPlan plan(3);
    {
      Graph g;
      score_graph(g, coords, mode, nullptr, &plan, nullptr);
    }
    auto loss_of = [&](const std::vector<Tensor>& cs) {
      Graph g;
      return g.value(score_graph(g, cs, mode, &plan, nullptr, nullptr)).item();
    };

    m.store.zero_grads();
    Graph g;
    std::vector<Var> coord_vars;
    Var score = score_graph(g, coords, mode, &plan, nullptr, &coord_vars);
    g.backward(score);
    g.add_param_grads(1.0);

    for (std::size_t f = 0; f < coords.size(); ++f) {
      auto fd = [&](const Tensor& x) {
        auto probe = coords;
        probe[f] = x;
        return loss_of(probe);
      };
      GradCheckReport rep =
          grad_check_multi(fd, coords[f], g.grad(coord_vars[f]), {3e-5, 1e-4, 3e-4});
      CHECK(rep.max_rel_err <= 1e-4);
    }
    for (Parameter* prm : m.store.all()) {
      auto fd = [&](const Tensor& pval) {
        Tensor saved = prm->value;
        prm->value = pval;
        double v = loss_of(coords);
        prm->value = saved;
        return v;
      };
      GradCheckReport rep = grad_check_multi(fd, prm->value, prm->grad, {3e-5, 1e-4, 3e-4});
      CAPTURE(prm->name);
      CHECK(rep.max_rel_err <= 1e-4);
    }
  }
}
