// Command-line entry point: landmark import, synthetic data generation,
// training, cross-validation, evaluation, saliency maps, and a finite-
// difference gradient audit.
//
// Exit codes: 0 success, 1 gradient-check failure, 2 configuration or data
// errors. Configuration precedence: dedicated flags > --set overrides >
// --config file > (for eval/saliency) the checkpoint's config sidecar >
// built-in defaults.
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "meshsmile/checkpoint.hpp"
#include "meshsmile/classifier.hpp"
#include "meshsmile/config.hpp"
#include "meshsmile/errors.hpp"
#include "meshsmile/gradcheck.hpp"
#include "meshsmile/graph.hpp"
#include "meshsmile/landmark.hpp"
#include "meshsmile/relativity.hpp"
#include "meshsmile/rng.hpp"
#include "meshsmile/synthetic.hpp"
#include "meshsmile/training.hpp"
#include "meshsmile/trajectory.hpp"

namespace fs = std::filesystem;
using namespace meshsmile;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Options shared by every config-driven command. Dedicated flags are kept as
// strings so "not passed" is distinguishable from any real value; RunConfig
// validates the text on set().
struct ConfigOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::string seed, fps, clip_len, epochs, folds, jobs;
};

void add_config_flags(CLI::App* cmd, ConfigOpts& o, bool with_folds_jobs) {
  cmd->add_option("--config", o.config_path,
                  "JSON file of configuration overrides (default: none)");
  cmd->add_option("--set", o.sets,
                  "override one configuration key, e.g. --set model.d=32; repeatable "
                  "(default: none)");
  cmd->add_option("--seed", o.seed, "master random seed (default: config train.seed = 0)");
  cmd->add_option("--fps", o.fps,
                  "resample videos to this rate, 0 keeps native (default: config data.fps = 0)");
  cmd->add_option("--clip-len", o.clip_len,
                  "frames per training clip (default: config train.clip_len = 16)");
  cmd->add_option("--epochs", o.epochs,
                  "training epochs (default: config train.epochs = 30)");
  if (with_folds_jobs) {
    cmd->add_option("--folds", o.folds,
                    "cross-validation fold count (default: config train.folds = 10)");
    cmd->add_option("--jobs", o.jobs,
                    "fold-level worker threads (default: config train.jobs = 1)");
  }
}

void apply_set(RunConfig& cfg, const std::string& pair) {
  const std::size_t eq = pair.find('=');
  require(eq != std::string::npos && eq > 0, ErrorKind::ConfigInvalid,
          "--set expects key=value, got '" + pair + "'");
  cfg.set(pair.substr(0, eq), pair.substr(eq + 1));
}

RunConfig resolve_config(const ConfigOpts& o, const std::string& sidecar_path = "") {
  RunConfig cfg;
  if (!sidecar_path.empty() && fs::exists(sidecar_path)) cfg.load_file(sidecar_path);
  if (!o.config_path.empty()) cfg.load_file(o.config_path);
  for (const std::string& pair : o.sets) apply_set(cfg, pair);
  if (!o.seed.empty()) cfg.set("train.seed", o.seed);
  if (!o.fps.empty()) cfg.set("data.fps", o.fps);
  if (!o.clip_len.empty()) cfg.set("train.clip_len", o.clip_len);
  if (!o.epochs.empty()) cfg.set("train.epochs", o.epochs);
  if (!o.folds.empty()) cfg.set("train.folds", o.folds);
  if (!o.jobs.empty()) cfg.set("train.jobs", o.jobs);
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::IoFailure, path + ": cannot open for writing");
  out << text;
  require(out.good(), ErrorKind::IoFailure, path + ": write failed");
}

int run_import(const std::string& csv, double fps, const std::string& out) {
  LandmarkSequence seq = import_csv(csv, fps);
  write_landmark_file(seq, out);
  std::cout << "wrote " << out << " (" << seq.frames.size() << " frames, "
            << seq.landmark_count() << " landmarks, " << fmt(seq.fps) << " fps)\n";
  return 0;
}

int run_gen_synthetic(std::size_t subjects, std::size_t per_class, std::uint64_t seed,
                      const std::string& out_dir, const ConfigOpts& opts) {
  RunConfig cfg = resolve_config(opts);
  KinematicsConfig kin = kinematics_from(cfg);
  DatasetManifest man = generate_dataset(subjects, per_class, kin, seed, out_dir);
  std::cout << "wrote " << man.videos.size() << " videos\n"
            << "manifest " << (fs::path(out_dir) / "manifest.json").string() << "\n";
  return 0;
}

// Seed derivation mirrors the cross-validation protocol's first task, so a
// train run and fold 0 of trial 0 start from the same streams.
int run_train(const std::string& manifest_path, const std::string& out,
              const ConfigOpts& opts) {
  RunConfig cfg = resolve_config(opts);
  DatasetManifest manifest = read_manifest(manifest_path);
  const Rng root(cfg.count("train.seed"));
  Model m;
  build_model(m, model_config_from(cfg), root.split("model", 0).seed());
  TrainResult tr = train_fold(m, manifest, {}, cfg, root.split("train", 0).seed());
  save_checkpoint(m.store, out);
  write_text(out + ".json", cfg.to_json_text());
  write_loss_csv(tr.loss_history, out + ".loss.csv");
  std::cout << "checkpoint " << out << "\n"
            << "config " << out << ".json\n"
            << "loss-csv " << out << ".loss.csv\n"
            << "final-loss " << fmt(tr.loss_history.back()) << "\n";
  return 0;
}

int run_cross_validate(const std::string& manifest_path, const std::string& out,
                       const ConfigOpts& opts) {
  RunConfig cfg = resolve_config(opts);
  DatasetManifest manifest = read_manifest(manifest_path);
  CrossValidation cv = cross_validate(manifest, cfg);
  write_results_json(cv, out);
  std::cout << "results " << out << "\n";
  for (const FoldResult& fr : cv.folds)
    std::cout << "fold " << fr.fold_index << " accuracy " << fmt(fr.accuracy) << "\n";
  std::cout << "mean-accuracy " << fmt(cv.mean_accuracy) << "\n";
  return 0;
}

void load_model(Model& m, const std::string& checkpoint, const RunConfig& cfg) {
  build_model(m, model_config_from(cfg), 0);
  load_checkpoint(m.store, checkpoint);
}

int run_eval(const std::string& manifest_path, const std::string& checkpoint,
             const std::string& folds_text, std::size_t fold_index, const ConfigOpts& opts) {
  RunConfig cfg = resolve_config(opts, checkpoint + ".json");
  DatasetManifest manifest = read_manifest(manifest_path);
  Model m;
  load_model(m, checkpoint, cfg);

  std::vector<std::string> test_ids;
  if (folds_text.empty()) {
    for (const VideoRecord& r : manifest.videos) test_ids.push_back(r.id);
  } else {
    RunConfig probe;  // validate the flag text through the same parser
    probe.set("train.folds", folds_text);
    const std::size_t k = probe.count("train.folds");
    // Same fold derivation as cross-validation trial 0 for this seed.
    const std::uint64_t fold_seed = Rng(cfg.count("train.seed")).split("folds", 0).seed();
    std::vector<std::vector<std::string>> folds = make_folds(manifest, k, fold_seed);
    require(fold_index < folds.size(), ErrorKind::ConfigInvalid,
            "--fold " + std::to_string(fold_index) + " is out of range for " +
                std::to_string(k) + " folds");
    test_ids = folds[fold_index];
  }

  FoldResult fr = evaluate_fold(m, manifest, test_ids, cfg, fold_index);
  std::cout << "videos " << fr.scores.size() << "\n"
            << "accuracy " << fmt(fr.accuracy) << "\n";
  return 0;
}

int run_saliency(const std::string& manifest_path, const std::string& checkpoint,
                 const std::string& out, const ConfigOpts& opts) {
  RunConfig cfg = resolve_config(opts, checkpoint + ".json");
  DatasetManifest manifest = read_manifest(manifest_path);
  Model m;
  load_model(m, checkpoint, cfg);
  std::vector<LandmarkSequence> seqs = load_videos(manifest, cfg.number("data.fps"));
  SaliencyMap map = saliency(m, seqs);

  std::string svg = out;
  if (svg.size() > 4 && svg.substr(svg.size() - 4) == ".csv")
    svg = svg.substr(0, svg.size() - 4) + ".svg";
  else
    svg += ".svg";
  write_saliency_csv(map, out);
  write_saliency_svg(map, mean_landmark_positions(seqs), svg);
  std::cout << "saliency-csv " << out << "\n"
            << "saliency-svg " << svg << "\n";
  return 0;
}

// Full-model finite-difference audit on a small fixed architecture: every
// parameter and every input coordinate, with walks frozen to a recorded plan
// so the probed function is smooth. Eval mode covers the hard argmax path the
// saliency map differentiates; soft mode covers the relaxed mixture and
// gating path that training gradients flow through.
int run_gradcheck(std::uint64_t seed) {
  RunConfig rc;
  rc.set("model.landmarks", "12");
  rc.set("model.tokens", "4");
  rc.set("model.d", "8");
  rc.set("model.heads", "2");
  rc.set("model.blocks_spatial", "1");
  rc.set("model.blocks_temporal", "1");
  rc.set("model.curves", "2");
  rc.set("model.curve_len", "3");
  rc.set("model.knn", "3");
  rc.set("model.normalize", "off");
  rc.set("train.clip_len", "4");
  rc.set("train.eval_clips", "1");

  const Rng root(seed);
  Model m;
  build_model(m, model_config_from(rc), root.split("model", 0).seed());
  Rng drng = root.split("data", 0);
  std::vector<Tensor> coords;
  for (int f = 0; f < 4; ++f) {
    Tensor t = Tensor::zeros({12, 3});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = drng.uniform(-1.0, 1.0);
    coords.push_back(t);
  }
  CurveConfig cc = m.cfg.curve_config();

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

  // Smallest-first after the usual sweet spot: tiny-derivative coordinates
  // need the 1e-5 rung (truncation error dominates them), while near-zero
  // ones need the coarse end (roundoff dominates). The lazy checker stops at
  // the first passing rung, so easy coordinates stay cheap.
  const std::vector<double> ladder = {3e-5, 1e-5, 1e-4, 3e-4};
  const double tol = 1e-4;
  bool ok = true;
  for (WalkMode mode : {WalkMode::Eval, WalkMode::Soft}) {
    const char* mode_name = mode == WalkMode::Eval ? "eval" : "soft";
    ClipPlan plan(coords.size());
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

    double worst_input = 0.0;
    for (std::size_t f = 0; f < coords.size(); ++f) {
      auto fd = [&](const Tensor& x) {
        auto probe = coords;
        probe[f] = x;
        return loss_of(probe);
      };
      GradCheckReport rep = grad_check_lazy(fd, coords[f], g.grad(coord_vars[f]), ladder, tol);
      worst_input = std::max(worst_input, rep.max_rel_err);
    }
    const bool inputs_ok = worst_input <= tol;
    ok = ok && inputs_ok;
    std::cout << "[" << (inputs_ok ? "ok" : "FAIL") << "] " << mode_name
              << " input gradients: worst rel err " << fmt(worst_input) << "\n";

    double worst_param = 0.0;
    std::string worst_name;
    for (Parameter* p : m.store.all()) {
      auto fd = [&](const Tensor& pv) {
        Tensor saved = p->value;
        p->value = pv;
        double v = loss_of(coords);
        p->value = saved;
        return v;
      };
      GradCheckReport rep = grad_check_multi(fd, p->value, p->grad, ladder);
      if (rep.max_rel_err > worst_param) {
        worst_param = rep.max_rel_err;
        worst_name = p->name;
      }
    }
    const bool params_ok = worst_param <= tol;
    ok = ok && params_ok;
    std::cout << "[" << (params_ok ? "ok" : "FAIL") << "] " << mode_name
              << " parameter gradients: worst rel err " << fmt(worst_param) << " ("
              << worst_name << ")\n";
  }

  std::cout << "gradcheck " << (ok ? "PASS" : "FAIL") << " (tolerance " << fmt(tol) << ")\n";
  return ok ? 0 : 1;
}

int run_config_keys() {
  for (const auto& [key, value] : RunConfig::describe_defaults())
    std::cout << key << " = " << value << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"smile-veracity classification over 3D facial-landmark sequences"};
  app.require_subcommand(1);

  // import
  auto* import_cmd =
      app.add_subcommand("import", "convert a landmark CSV (header row, then x,y,z per "
                                   "landmark per row) to a binary sequence file");
  std::string import_csv_path, import_out;
  double import_fps = 25.0;
  import_cmd->add_option("csv", import_csv_path, "input CSV path")->required();
  import_cmd->add_option("--fps", import_fps, "frame rate to stamp into the file")
      ->capture_default_str();
  import_cmd->add_option("--out", import_out, "output .mslm path")->required();

  // gen-synthetic
  auto* gen_cmd = app.add_subcommand(
      "gen-synthetic", "generate a labeled synthetic smile-kinematics dataset");
  std::size_t gen_subjects = 40, gen_per_class = 1;
  std::uint64_t gen_seed = 0;
  std::string gen_out = "synthetic_data";
  ConfigOpts gen_opts;
  gen_cmd->add_option("--subjects", gen_subjects, "number of subjects")
      ->capture_default_str();
  gen_cmd->add_option("--per-class", gen_per_class, "videos per subject per label")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen_seed, "master generation seed")->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen_cmd->add_option("--config", gen_opts.config_path,
                      "JSON file of synth.* overrides (default: none)");
  gen_cmd->add_option("--set", gen_opts.sets,
                      "override one configuration key, e.g. --set synth.noise_sd=0; "
                      "repeatable (default: none)");

  // train
  auto* train_cmd =
      app.add_subcommand("train", "train on every video in a manifest and save a checkpoint "
                                  "plus its config sidecar and loss curve");
  std::string train_manifest, train_out = "model.mswt";
  ConfigOpts train_opts;
  train_cmd->add_option("--manifest", train_manifest, "dataset manifest JSON")->required();
  train_cmd->add_option("--out", train_out, "checkpoint path; also writes <out>.json and "
                                            "<out>.loss.csv")
      ->capture_default_str();
  add_config_flags(train_cmd, train_opts, false);

  // cross-validate
  auto* cv_cmd = app.add_subcommand(
      "cross-validate", "subject-disjoint k-fold cross-validation; writes per-fold and mean "
                        "accuracy as JSON");
  std::string cv_manifest, cv_out = "results.json";
  ConfigOpts cv_opts;
  cv_cmd->add_option("--manifest", cv_manifest, "dataset manifest JSON")->required();
  cv_cmd->add_option("--out", cv_out, "results JSON path")->capture_default_str();
  add_config_flags(cv_cmd, cv_opts, true);

  // eval
  auto* eval_cmd = app.add_subcommand(
      "eval", "score a checkpoint on a manifest and print accuracy");
  std::string eval_manifest, eval_checkpoint, eval_folds;
  std::size_t eval_fold = 0;
  ConfigOpts eval_opts;
  eval_cmd->add_option("--manifest", eval_manifest, "dataset manifest JSON")->required();
  eval_cmd->add_option("--checkpoint", eval_checkpoint,
                       "checkpoint path; its <path>.json sidecar supplies the architecture")
      ->required();
  eval_cmd->add_option("--folds", eval_folds,
                       "evaluate one fold of this many, split as cross-validation would for "
                       "the same seed (default: evaluate every video)");
  eval_cmd->add_option("--fold", eval_fold, "fold index to evaluate when --folds is given")
      ->capture_default_str();
  add_config_flags(eval_cmd, eval_opts, false);

  // saliency
  auto* sal_cmd = app.add_subcommand(
      "saliency", "per-landmark gradient importance for a checkpoint over a manifest; "
                  "writes a CSV table and an SVG figure");
  std::string sal_manifest, sal_checkpoint, sal_out = "saliency.csv";
  ConfigOpts sal_opts;
  sal_cmd->add_option("--manifest", sal_manifest, "dataset manifest JSON")->required();
  sal_cmd->add_option("--checkpoint", sal_checkpoint,
                      "checkpoint path; its <path>.json sidecar supplies the architecture")
      ->required();
  sal_cmd->add_option("--out", sal_out,
                      "output CSV path; the SVG lands next to it with a .svg extension")
      ->capture_default_str();
  add_config_flags(sal_cmd, sal_opts, false);

  // gradcheck
  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "finite-difference audit of every parameter and input gradient on a "
                   "small fixed architecture; exits 1 on any mismatch");
  std::uint64_t grad_seed = 0;
  grad_cmd->add_option("--seed", grad_seed, "seed for weights and probe coordinates")
      ->capture_default_str();

  // config-keys
  app.add_subcommand("config-keys",
                     "print every configuration key with its built-in default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*import_cmd) return run_import(import_csv_path, import_fps, import_out);
    if (*gen_cmd)
      return run_gen_synthetic(gen_subjects, gen_per_class, gen_seed, gen_out, gen_opts);
    if (*train_cmd) return run_train(train_manifest, train_out, train_opts);
    if (*cv_cmd) return run_cross_validate(cv_manifest, cv_out, cv_opts);
    if (*eval_cmd)
      return run_eval(eval_manifest, eval_checkpoint, eval_folds, eval_fold, eval_opts);
    if (*sal_cmd) return run_saliency(sal_manifest, sal_checkpoint, sal_out, sal_opts);
    if (*grad_cmd) return run_gradcheck(grad_seed);
    return run_config_keys();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
