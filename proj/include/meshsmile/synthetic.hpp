#pragma once

#include <cstdint>
#include <string>

#include "meshsmile/config.hpp"
#include "meshsmile/landmark.hpp"
#include "meshsmile/rng.hpp"
#include "meshsmile/tensor.hpp"

namespace meshsmile {

// Parametric smile-kinematics generator. Every video is a neutral face
// template deformed by a fixed smile displacement field scaled by a
// time-amplitude curve: raised-cosine onset ramp, apex plateau, raised-cosine
// offset ramp, plus i.i.d. Gaussian coordinate noise and a per-video
// left/right asymmetry factor. The class label controls nothing but the
// distribution the onset duration is drawn from, so onset speed is the only
// signal separating the classes.

struct KinematicsConfig {
  std::size_t n_landmarks = 68;
  double fps = 25.0;
  double duration_s = 4.0;
  double onset_spont_lo = 0.8, onset_spont_hi = 1.5;  // seconds, label 0
  double onset_posed_lo = 0.2, onset_posed_hi = 0.5;  // seconds, label 1
  double amplitude_lo = 0.6, amplitude_hi = 1.0;
  double noise_sd = 0.01;
  double asym_lo = 0.85, asym_hi = 1.15;
  double offset_lo = 0.5, offset_hi = 1.0;  // full offset-ramp seconds
};

// Reads synth.* keys and validates. synth.null_mode replaces the posed onset
// range with the spontaneous one, removing all label signal.
KinematicsConfig kinematics_from(const RunConfig& cfg);

// The subject's neutral face: landmarks spread over a face-like ellipse with
// depth, jittered by a stream seeded only from subject_seed, so every video
// of a subject shares it bit-for-bit. [L, 3].
Tensor subject_template(std::uint64_t subject_seed, const KinematicsConfig& cfg);

// Onset durations are drawn as the 10 to 90 percent rise time of the
// amplitude curve; the full raised-cosine ramp is correspondingly longer.
// The slowest onset plus the slowest offset must fit inside duration_s.
LandmarkSequence generate_video(int label, std::uint64_t subject_seed,
                                const KinematicsConfig& cfg, Rng& rng);

// Time for the mean landmark displacement from the first frame to rise from
// 10 to 90 percent of its peak, with linear interpolation between frames.
// This is the quantity the onset ranges are expressed in.
double measure_onset_duration(const LandmarkSequence& seq);

// Writes balanced MSLM files plus manifest.json under out_dir: for every
// subject, videos_per_class videos of each label. All randomness derives
// from `seed` through per-video split streams, so reruns are byte-identical.
DatasetManifest generate_dataset(std::size_t n_subjects, std::size_t videos_per_class,
                                 const KinematicsConfig& cfg, std::uint64_t seed,
                                 const std::string& out_dir);

}  // namespace meshsmile
