#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshsmile/classifier.hpp"
#include "meshsmile/config.hpp"
#include "meshsmile/landmark.hpp"

namespace meshsmile {

// Training loop, cross-validation protocol, significance testing, and
// gradient-based landmark attribution.

struct VideoScore {
  std::string id;
  double score = 0.0;  // predicted probability of the posed class
  int label = 0;       // ground truth
};

struct FoldResult {
  std::size_t fold_index = 0;
  double accuracy = 0.0;  // correct / total over the fold's test videos
  std::vector<VideoScore> scores;
};

struct TrainResult {
  std::vector<double> loss_history;  // mean training loss per epoch
};

// Loads every manifest video; a positive target_fps downsamples each one.
std::vector<LandmarkSequence> load_videos(const DatasetManifest& manifest, double target_fps);

// Trains `model` on every manifest video NOT in test_ids. Per epoch: shuffle
// the train videos, walk them in batches of train.batch_size, draw one random
// clip per video, and take one optimizer step per batch on the batch-mean
// loss between sigmoid score and label. The recorded epoch loss is
// the mean over all of the epoch's videos. Refuses folds whose test subjects
// appear in the train set. Bit-reproducible from (model, manifest, cfg, seed).
TrainResult train_fold(Model& model, const DatasetManifest& manifest,
                       const std::vector<std::string>& test_ids, const RunConfig& cfg,
                       std::uint64_t seed);

// Scores each test video with the clip-averaged prediction and classifies at
// the 0.5 threshold (exactly 0.5 reads as posed).
FoldResult evaluate_fold(Model& model, const DatasetManifest& manifest,
                         const std::vector<std::string>& test_ids, const RunConfig& cfg,
                         std::size_t fold_index = 0);

struct CrossValidation {
  // One entry per fold; with train.trials > 1 each accuracy is the mean over
  // trials and the recorded scores come from the first trial.
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;  // arithmetic mean of the fold accuracies
  // First trial's per-fold training curves, parallel to `folds`.
  std::vector<std::vector<double>> loss_histories;
};

// Subject-disjoint k-fold protocol: split by train.folds, then train a
// freshly initialized model per fold and evaluate it on the held-out
// subjects. train.trials repeats the whole protocol with new model seeds
// (train.reseed_folds additionally redraws the fold split per trial) and
// averages. train.jobs > 1 runs (trial, fold) tasks on that many threads;
// all seeds are preassigned, so the result does not depend on the thread
// count.
CrossValidation cross_validate(const DatasetManifest& manifest, const RunConfig& cfg);

struct TTest {
  double t = 0.0;
  double p = 1.0;  // two-sided
};

// Paired t-test over per-fold metrics: t = mean(d) / (sd(d)/sqrt(n)) with the
// n-1 sample deviation, p from Student's t with n-1 degrees of freedom.
// Identical inputs return {0, 1}; equal but nonzero differences have no
// spread to test against and are rejected.
TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

struct SaliencyMap {
  // Per-landmark importance: mean over videos, clips, and frames of the
  // Euclidean norm of the score's gradient with respect to that landmark's
  // (normalized) coordinates, rescaled so the largest entry is 1.
  std::vector<double> importance;
};

// All sequences must share the model's landmark count. Clips are the same
// evenly spaced eval clips prediction uses.
SaliencyMap saliency(Model& model, const std::vector<LandmarkSequence>& dataset);

// Mean position of each landmark over every frame of every sequence, [L, 3];
// the backdrop for the saliency figure.
Tensor mean_landmark_positions(const std::vector<LandmarkSequence>& dataset);

// epoch,mean_loss rows, epochs numbered from 1.
void write_loss_csv(const std::vector<double>& history, const std::string& path);
// {"folds":[{"fold":i,"accuracy":a},...],"mean":m}
void write_results_json(const CrossValidation& cv, const std::string& path);
// landmark_index,importance rows.
void write_saliency_csv(const SaliencyMap& map, const std::string& path);
// Static scatter of the landmarks' mean x/y positions, one circle per
// landmark colored from cold to hot by importance.
void write_saliency_svg(const SaliencyMap& map, const Tensor& positions, const std::string& path);

}  // namespace meshsmile
