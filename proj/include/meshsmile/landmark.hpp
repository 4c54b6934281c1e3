#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meshsmile/rng.hpp"
#include "meshsmile/tensor.hpp"

namespace meshsmile {

// One frame of L landmarks, landmark-major x,y,z triples. Storage is 32-bit
// float, the on-disk precision, so file round-trips are bit-exact.
struct LandmarkFrame {
  std::vector<float> coords;

  std::size_t landmark_count() const { return coords.size() / 3; }
  // [L, 3] double tensor for network consumption.
  Tensor as_tensor() const;
  static LandmarkFrame from_tensor(const Tensor& pts);
};

// Label convention: 0 = spontaneous, 1 = posed.
struct LandmarkSequence {
  std::vector<LandmarkFrame> frames;
  double fps = 0.0;
  std::string video_id;
  std::string subject_id;
  int label = 0;

  std::size_t landmark_count() const { return frames.empty() ? 0 : frames[0].landmark_count(); }
};

struct Clip {
  std::vector<LandmarkFrame> frames;
  std::string source_id;
};

struct VideoRecord {
  std::string id;
  std::string subject;
  int label = 0;
  double fps = 0.0;
  std::string path;
};

struct DatasetManifest {
  std::vector<VideoRecord> videos;
};

// Binary landmark container: magic "MSLM", version u16, frame count u32,
// landmark count u32, fps f32, then frame-major landmark-major xyz f32
// payload, all little-endian.
LandmarkSequence read_landmark_file(const std::string& path);
void write_landmark_file(const LandmarkSequence& seq, const std::string& path);

// CSV layout: header "f0_x,f0_y,f0_z,...", one row per frame.
LandmarkSequence import_csv(const std::string& path, double fps);

DatasetManifest read_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);
// Loads a manifest entry's landmark file and stamps id, subject, label, fps.
LandmarkSequence load_video(const VideoRecord& record);

// Keeps frames at floor(i * source_fps / target_fps); downsampling only.
LandmarkSequence resample_fps(const LandmarkSequence& seq, double target_fps);

// Uniform random start when the video is long enough; shorter videos repeat
// cyclically until clip_len frames exist.
Clip sample_train_clip(const LandmarkSequence& seq, std::size_t clip_len, Rng& rng);
// Deterministic: n_clips starts spread evenly over [0, max(0, N - clip_len)],
// rounded to nearest, duplicates allowed; same pad rule as training.
std::vector<Clip> sample_eval_clips(const LandmarkSequence& seq, std::size_t clip_len,
                                    std::size_t n_clips);

struct FrameStats {
  double centroid[3] = {0, 0, 0};
  double mean_radius = 0.0;
};

enum class NormalizeMode { Frame, Video, Off };
NormalizeMode parse_normalize_mode(const std::string& text);

FrameStats compute_frame_stats(const Tensor& pts);
// Centroid to origin, mean landmark-to-centroid distance to 1.
Tensor normalize_coords(const Tensor& pts);
// Same transform but with externally supplied statistics (video mode applies
// the first frame's stats to every frame).
Tensor normalize_coords_with(const Tensor& pts, const FrameStats& stats);
LandmarkFrame normalize_frame(const LandmarkFrame& frame);

// Subject-disjoint partition: subjects sorted, shuffled by seed, split into k
// near-equal groups; every video lands in its subject's fold. Returns the k
// test-video id lists.
std::vector<std::vector<std::string>> make_folds(const DatasetManifest& manifest, std::size_t k,
                                                 std::uint64_t seed);

}  // namespace meshsmile
