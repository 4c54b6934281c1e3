#include "meshsmile/training.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

#include "meshsmile/errors.hpp"
#include "meshsmile/optim.hpp"

namespace meshsmile {

namespace {

LandmarkSequence load_one(const VideoRecord& record, double target_fps) {
  LandmarkSequence seq = load_video(record);
  if (target_fps > 0.0) seq = resample_fps(seq, target_fps);
  return seq;
}

std::set<std::string> subjects_of(const DatasetManifest& manifest,
                                  const std::set<std::string>& ids) {
  std::set<std::string> subjects;
  for (const VideoRecord& r : manifest.videos)
    if (ids.count(r.id)) subjects.insert(r.subject);
  return subjects;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::IoFailure, "cannot open for writing: " + path);
  out << text;
  require(out.good(), ErrorKind::IoFailure, "write failed: " + path);
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

std::vector<LandmarkSequence> load_videos(const DatasetManifest& manifest, double target_fps) {
  std::vector<LandmarkSequence> out;
  out.reserve(manifest.videos.size());
  for (const VideoRecord& r : manifest.videos) out.push_back(load_one(r, target_fps));
  return out;
}

TrainResult train_fold(Model& model, const DatasetManifest& manifest,
                       const std::vector<std::string>& test_ids, const RunConfig& cfg,
                       std::uint64_t seed) {
  const std::size_t batch_size = cfg.count("train.batch_size");
  const std::size_t epochs = cfg.count("train.epochs");
  require(batch_size >= 1, ErrorKind::ConfigInvalid, "train.batch_size must be at least 1");
  require(epochs >= 1, ErrorKind::ConfigInvalid, "train.epochs must be at least 1");

  const std::set<std::string> held_out(test_ids.begin(), test_ids.end());
  const std::set<std::string> test_subjects = subjects_of(manifest, held_out);
  std::vector<LandmarkSequence> train_set;
  for (const VideoRecord& r : manifest.videos) {
    if (held_out.count(r.id)) continue;
    // The protocol's core guarantee: no subject appears on both sides.
    require(!test_subjects.count(r.subject), ErrorKind::InvariantViolation,
            "subject " + r.subject + " has videos in both the train and test sets");
    train_set.push_back(load_one(r, cfg.number("data.fps")));
  }
  require(!train_set.empty(), ErrorKind::EmptyTrainSet, "fold leaves no videos to train on");

  AdamWConfig acfg;
  acfg.lr = cfg.number("train.lr");
  acfg.weight_decay = cfg.number("train.weight_decay");
  AdamW opt(model.store.all(), acfg);

  const std::size_t clip_len = model.cfg.clip_len;
  Rng root(seed);
  TrainResult result;
  result.loss_history.reserve(epochs);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    Rng erng = root.split("epoch", epoch);
    erng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t n = std::min(batch_size, order.size() - begin);
      opt.zero_grads();
      for (std::size_t i = 0; i < n; ++i) {
        const LandmarkSequence& seq = train_set[order[begin + i]];
        Clip clip = sample_train_clip(seq, clip_len, erng);
        Graph g;
        ClipForward fwd = forward_clip_graph(g, model, clip, WalkMode::Train, &erng);
        Var loss = bce_loss(g, fwd.score, seq.label);
        const double value = g.value(loss).item();
        require(std::isfinite(value), ErrorKind::NonFiniteValue,
                "training loss diverged on video " + seq.video_id);
        epoch_loss += value;
        g.backward(loss);
        // Accumulating scaled per-video gradients reproduces the gradient of
        // the batch-mean loss without holding the whole batch in one graph.
        g.add_param_grads(1.0 / static_cast<double>(n));
      }
      opt.step();
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(train_set.size()));
  }
  return result;
}

FoldResult evaluate_fold(Model& model, const DatasetManifest& manifest,
                         const std::vector<std::string>& test_ids, const RunConfig& cfg,
                         std::size_t fold_index) {
  require(!test_ids.empty(), ErrorKind::EmptyTestSet, "fold has no test videos");
  std::map<std::string, const VideoRecord*> by_id;
  for (const VideoRecord& r : manifest.videos) by_id[r.id] = &r;

  FoldResult result;
  result.fold_index = fold_index;
  std::size_t correct = 0;
  for (const std::string& id : test_ids) {
    auto found = by_id.find(id);
    require(found != by_id.end(), ErrorKind::ConfigInvalid,
            "fold references a video missing from the manifest: " + id);
    const LandmarkSequence seq = load_one(*found->second, cfg.number("data.fps"));
    const double score = predict_video(model, seq).score;
    if (decide_label(score) == seq.label) ++correct;
    result.scores.push_back({id, score, seq.label});
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(test_ids.size());
  return result;
}

CrossValidation cross_validate(const DatasetManifest& manifest, const RunConfig& cfg) {
  const std::size_t k = cfg.count("train.folds");
  require(k >= 2, ErrorKind::ConfigInvalid, "cross-validation needs at least 2 folds");
  const std::size_t trials = cfg.count("train.trials");
  require(trials >= 1, ErrorKind::ConfigInvalid, "train.trials must be at least 1");
  const bool reseed_folds = cfg.flag("train.reseed_folds");
  const std::size_t jobs = std::max<std::size_t>(1, cfg.count("train.jobs"));
  const ModelConfig mcfg = model_config_from(cfg);
  const Rng root(cfg.count("train.seed"));

  std::vector<std::vector<std::vector<std::string>>> folds_by_trial(trials);
  for (std::size_t t = 0; t < trials; ++t)
    folds_by_trial[t] =
        make_folds(manifest, k, root.split("folds", reseed_folds ? t : 0).seed());

  struct Task {
    std::size_t trial, fold;
    std::uint64_t model_seed, train_seed;
  };
  std::vector<Task> tasks;
  for (std::size_t t = 0; t < trials; ++t)
    for (std::size_t f = 0; f < k; ++f)
      tasks.push_back({t, f, root.split("model", t * k + f).seed(),
                       root.split("train", t * k + f).seed()});

  std::vector<FoldResult> fold_results(tasks.size());
  std::vector<std::vector<double>> histories(tasks.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> failures(std::max<std::size_t>(1, jobs));

  auto worker = [&](std::size_t slot) {
    try {
      for (std::size_t i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) {
        const Task& task = tasks[i];
        Model model;
        build_model(model, mcfg, task.model_seed);
        TrainResult tr =
            train_fold(model, manifest, folds_by_trial[task.trial][task.fold], cfg,
                       task.train_seed);
        fold_results[i] = evaluate_fold(model, manifest, folds_by_trial[task.trial][task.fold],
                                        cfg, task.fold);
        histories[i] = std::move(tr.loss_history);
      }
    } catch (...) {
      failures[slot] = std::current_exception();
    }
  };

  if (jobs == 1 || tasks.size() == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < std::min(jobs, tasks.size()); ++j)
      pool.emplace_back(worker, j);
    for (std::thread& th : pool) th.join();
  }
  for (const std::exception_ptr& e : failures)
    if (e) std::rethrow_exception(e);

  CrossValidation cv;
  cv.folds.resize(k);
  cv.loss_histories.resize(k);
  for (std::size_t f = 0; f < k; ++f) {
    double sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t) sum += fold_results[t * k + f].accuracy;
    cv.folds[f] = std::move(fold_results[f]);  // trial 0 carries the scores
    cv.folds[f].accuracy = sum / static_cast<double>(trials);
    cv.loss_histories[f] = std::move(histories[f]);
  }
  double mean = 0.0;
  for (const FoldResult& fr : cv.folds) mean += fr.accuracy;
  cv.mean_accuracy = mean / static_cast<double>(k);
  return cv;
}

TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  require(a.size() == b.size(), ErrorKind::ShapeMismatch,
          "paired t-test needs equally long lists");
  const std::size_t n = a.size();
  require(n >= 2, ErrorKind::ConfigInvalid, "paired t-test needs at least two pairs");

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  double mean = 0.0;
  for (double v : d) mean += v;
  mean /= static_cast<double>(n);
  bool all_equal = true;
  double ss = 0.0;
  for (double v : d) {
    if (v != d[0]) all_equal = false;
    ss += (v - mean) * (v - mean);
  }
  if (all_equal) {
    if (d[0] == 0.0) return {0.0, 1.0};
    fail(ErrorKind::DegenerateVariance, "all paired differences are identical");
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t_distribution<double> dist(static_cast<double>(n - 1));
  const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  return {t, p};
}

SaliencyMap saliency(Model& model, const std::vector<LandmarkSequence>& dataset) {
  require(!dataset.empty(), ErrorKind::ConfigInvalid, "saliency needs at least one sequence");
  const std::size_t L = dataset.front().landmark_count();
  for (const LandmarkSequence& seq : dataset)
    require(seq.landmark_count() == L, ErrorKind::ShapeMismatch,
            "all sequences must share one landmark count");

  std::vector<double> accum(L, 0.0);
  std::size_t n_frames = 0;
  for (const LandmarkSequence& seq : dataset) {
    for (const Clip& clip : sample_eval_clips(seq, model.cfg.clip_len, model.cfg.eval_clips)) {
      Graph g;
      ClipForward fwd = forward_clip_graph(g, model, clip, WalkMode::Eval, nullptr);
      g.backward(fwd.score);
      for (const Var& coords : fwd.coords) {
        const Tensor& grad = g.grad(coords);
        for (std::size_t l = 0; l < L; ++l) {
          const double gx = grad.at(l, 0), gy = grad.at(l, 1), gz = grad.at(l, 2);
          accum[l] += std::sqrt(gx * gx + gy * gy + gz * gz);
        }
        ++n_frames;
      }
    }
  }

  SaliencyMap map;
  map.importance.resize(L);
  double peak = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    map.importance[l] = accum[l] / static_cast<double>(n_frames);
    peak = std::max(peak, map.importance[l]);
  }
  if (peak > 0.0)
    for (double& v : map.importance) v /= peak;
  return map;
}

Tensor mean_landmark_positions(const std::vector<LandmarkSequence>& dataset) {
  require(!dataset.empty(), ErrorKind::ConfigInvalid, "need at least one sequence");
  const std::size_t L = dataset.front().landmark_count();
  Tensor mean = Tensor::zeros({L, 3});
  std::size_t n = 0;
  for (const LandmarkSequence& seq : dataset)
    for (const LandmarkFrame& f : seq.frames) {
      require(f.landmark_count() == L, ErrorKind::ShapeMismatch,
              "all sequences must share one landmark count");
      for (std::size_t l = 0; l < L; ++l)
        for (std::size_t a = 0; a < 3; ++a)
          mean.at(l, a) += static_cast<double>(f.coords[3 * l + a]);
      ++n;
    }
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t a = 0; a < 3; ++a) mean.at(l, a) /= static_cast<double>(n);
  return mean;
}

void write_loss_csv(const std::vector<double>& history, const std::string& path) {
  std::string text = "epoch,mean_loss\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    text += std::to_string(i + 1) + "," + fmt(history[i]) + "\n";
  write_text_file(path, text);
}

void write_results_json(const CrossValidation& cv, const std::string& path) {
  nlohmann::json doc;
  doc["folds"] = nlohmann::json::array();
  for (const FoldResult& fr : cv.folds)
    doc["folds"].push_back({{"fold", fr.fold_index}, {"accuracy", fr.accuracy}});
  doc["mean"] = cv.mean_accuracy;
  write_text_file(path, doc.dump(2) + "\n");
}

void write_saliency_csv(const SaliencyMap& map, const std::string& path) {
  std::string text = "landmark_index,importance\n";
  for (std::size_t l = 0; l < map.importance.size(); ++l)
    text += std::to_string(l) + "," + fmt(map.importance[l]) + "\n";
  write_text_file(path, text);
}

void write_saliency_svg(const SaliencyMap& map, const Tensor& positions,
                        const std::string& path) {
  const std::size_t L = map.importance.size();
  require(positions.rows() == L, ErrorKind::ShapeMismatch,
          "positions and importance disagree on the landmark count");

  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (std::size_t l = 0; l < L; ++l) {
    min_x = std::min(min_x, positions.at(l, 0));
    max_x = std::max(max_x, positions.at(l, 0));
    min_y = std::min(min_y, positions.at(l, 1));
    max_y = std::max(max_y, positions.at(l, 1));
  }
  const double span_x = std::max(max_x - min_x, 1e-9);
  const double span_y = std::max(max_y - min_y, 1e-9);
  const double size = 640.0, margin = 40.0, inner = size - 2.0 * margin;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << " " << size << "\">\n"
      << "<rect width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n";
  for (std::size_t l = 0; l < L; ++l) {
    const double px = margin + inner * (positions.at(l, 0) - min_x) / span_x;
    // Image rows grow downward; face y grows upward.
    const double py = margin + inner * (max_y - positions.at(l, 1)) / span_y;
    const double v = map.importance[l];
    const int r = static_cast<int>(std::lround(255.0 * v));
    const int b = static_cast<int>(std::lround(255.0 * (1.0 - v)));
    svg << std::setprecision(6) << "<circle cx=\"" << px << "\" cy=\"" << py
        << "\" r=\"6\" fill=\"rgb(" << r << ",60," << b << ")\"><title>landmark " << l
        << ": " << v << "</title></circle>\n";
  }
  svg << "</svg>\n";
  write_text_file(path, svg.str());
}

}  // namespace meshsmile
