#include "meshsmile/synthetic.hpp"

#include <cmath>
#include <filesystem>
#include <vector>

#include "meshsmile/errors.hpp"

namespace meshsmile {

namespace {

// Fraction of a raised-cosine ramp spent between 10 and 90 percent of its
// height: (acos(-0.8) - acos(0.8)) / pi. Dividing a drawn rise time by this
// gives the full ramp duration whose measured rise time equals the draw.
const double kRiseFraction = (std::acos(-0.8) - std::acos(0.8)) / M_PI;

double ease(double s) {
  s = std::min(1.0, std::max(0.0, s));
  return 0.5 * (1.0 - std::cos(M_PI * s));
}

void check_interval(double lo, double hi, const char* what, bool allow_zero = false) {
  require(lo <= hi, ErrorKind::ConfigInvalid, std::string(what) + " interval is inverted");
  require(allow_zero ? lo >= 0.0 : lo > 0.0, ErrorKind::ConfigInvalid,
          std::string(what) + " interval must be positive");
}

void validate(const KinematicsConfig& cfg) {
  require(cfg.n_landmarks >= 12, ErrorKind::ConfigInvalid,
          "the face template needs at least 12 landmarks");
  require(cfg.fps > 0.0 && cfg.duration_s > 0.0, ErrorKind::ConfigInvalid,
          "fps and duration must be positive");
  check_interval(cfg.onset_spont_lo, cfg.onset_spont_hi, "spontaneous onset");
  check_interval(cfg.onset_posed_lo, cfg.onset_posed_hi, "posed onset");
  check_interval(cfg.amplitude_lo, cfg.amplitude_hi, "amplitude", true);
  check_interval(cfg.asym_lo, cfg.asym_hi, "asymmetry");
  check_interval(cfg.offset_lo, cfg.offset_hi, "offset");
  require(cfg.noise_sd >= 0.0, ErrorKind::ConfigInvalid, "noise_sd must be non-negative");
  const double slowest = std::max(cfg.onset_spont_hi, cfg.onset_posed_hi) / kRiseFraction +
                         cfg.offset_hi;
  require(slowest <= cfg.duration_s, ErrorKind::ConfigInvalid,
          "duration too short for the slowest onset and offset ramps");
  require(cfg.duration_s * cfg.fps >= 20.0, ErrorKind::ConfigInvalid,
          "a video needs at least 20 frames");
}

// Smile displacement directions, a fixed function of the neutral template:
// a pull at each mouth corner (outward, up, slightly forward) and a raise
// over each cheek, both with Gaussian spatial falloff.
Tensor smile_field(const Tensor& tmpl) {
  const std::size_t L = tmpl.rows();
  Tensor field = Tensor::zeros({L, 3});
  const double mouth_x = 0.55, mouth_y = -0.65, mouth_z = 0.1;
  const double cheek_x = 0.85, cheek_y = 0.15, cheek_z = 0.05;
  const double sigma_m = 0.30, sigma_c = 0.35;
  for (std::size_t l = 0; l < L; ++l) {
    const double x = tmpl.at(l, 0), y = tmpl.at(l, 1), z = tmpl.at(l, 2);
    const double side = x < 0.0 ? -1.0 : 1.0;
    auto falloff = [&](double ax, double ay, double az, double sigma) {
      const double dx = x - ax, dy = y - ay, dz = z - az;
      return std::exp(-(dx * dx + dy * dy + dz * dz) / (2.0 * sigma * sigma));
    };
    const double wm = falloff(side * mouth_x, mouth_y, mouth_z, sigma_m);
    const double wc = falloff(side * cheek_x, cheek_y, cheek_z, sigma_c);
    field.at(l, 0) = wm * side * 0.30;
    field.at(l, 1) = wm * 0.18 + wc * 0.20;
    field.at(l, 2) = wm * 0.08 + wc * 0.12;
  }
  return field;
}

}  // namespace

KinematicsConfig kinematics_from(const RunConfig& cfg) {
  KinematicsConfig k;
  k.n_landmarks = cfg.count("synth.landmarks");
  k.fps = cfg.number("synth.fps");
  k.duration_s = cfg.number("synth.duration");
  k.onset_spont_lo = cfg.number("synth.onset_spont_lo");
  k.onset_spont_hi = cfg.number("synth.onset_spont_hi");
  k.onset_posed_lo = cfg.number("synth.onset_posed_lo");
  k.onset_posed_hi = cfg.number("synth.onset_posed_hi");
  k.amplitude_lo = cfg.number("synth.amplitude_lo");
  k.amplitude_hi = cfg.number("synth.amplitude_hi");
  k.noise_sd = cfg.number("synth.noise_sd");
  k.asym_lo = cfg.number("synth.asym_lo");
  k.asym_hi = cfg.number("synth.asym_hi");
  k.offset_lo = cfg.number("synth.offset_lo");
  k.offset_hi = cfg.number("synth.offset_hi");
  if (cfg.flag("synth.null_mode")) {
    k.onset_posed_lo = k.onset_spont_lo;
    k.onset_posed_hi = k.onset_spont_hi;
  }
  validate(k);
  return k;
}

Tensor subject_template(std::uint64_t subject_seed, const KinematicsConfig& cfg) {
  const std::size_t L = cfg.n_landmarks;
  Tensor tmpl = Tensor::zeros({L, 3});
  Rng rng(subject_seed);
  for (std::size_t l = 0; l < L; ++l) {
    const double theta = 2.0 * M_PI * static_cast<double>(l) / static_cast<double>(L);
    tmpl.at(l, 0) = 0.95 * std::cos(theta) + rng.uniform(-0.08, 0.08);
    tmpl.at(l, 1) = 1.25 * std::sin(theta) + rng.uniform(-0.08, 0.08);
    tmpl.at(l, 2) = 0.35 * std::cos(2.0 * theta) - 0.2 + rng.uniform(-0.08, 0.08);
  }
  return tmpl;
}

LandmarkSequence generate_video(int label, std::uint64_t subject_seed,
                                const KinematicsConfig& cfg, Rng& rng) {
  require(label == 0 || label == 1, ErrorKind::ConfigInvalid, "label must be 0 or 1");
  validate(cfg);

  Tensor tmpl = subject_template(subject_seed, cfg);
  Tensor field = smile_field(tmpl);

  // The label decides only which interval the rise time comes from; the
  // uniform draw itself is consumed identically either way, so equal
  // intervals give bit-identical videos regardless of label.
  const double u = rng.uniform();
  const double rise = label == 1 ? cfg.onset_posed_lo + u * (cfg.onset_posed_hi - cfg.onset_posed_lo)
                                 : cfg.onset_spont_lo + u * (cfg.onset_spont_hi - cfg.onset_spont_lo);
  const double t_on = rise / kRiseFraction;
  const double t_off = rng.uniform(cfg.offset_lo, cfg.offset_hi);
  const double apex = rng.uniform(cfg.amplitude_lo, cfg.amplitude_hi);
  const double asym = rng.uniform(cfg.asym_lo, cfg.asym_hi);

  const std::size_t n_frames = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.fps));
  LandmarkSequence seq;
  seq.fps = cfg.fps;
  seq.label = label;
  seq.frames.reserve(n_frames);
  const std::size_t L = cfg.n_landmarks;
  for (std::size_t i = 0; i < n_frames; ++i) {
    const double t = static_cast<double>(i) / cfg.fps;
    double a;
    if (t < t_on)
      a = apex * ease(t / t_on);
    else if (t < cfg.duration_s - t_off)
      a = apex;
    else
      a = apex * ease((cfg.duration_s - t) / t_off);
    LandmarkFrame frame;
    frame.coords.resize(3 * L);
    for (std::size_t l = 0; l < L; ++l) {
      const double scale = a * (tmpl.at(l, 0) < 0.0 ? asym : 1.0);
      for (std::size_t axis = 0; axis < 3; ++axis) {
        double v = tmpl.at(l, axis) + scale * field.at(l, axis);
        if (cfg.noise_sd > 0.0) v += rng.normal(0.0, cfg.noise_sd);
        frame.coords[3 * l + axis] = static_cast<float>(v);
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

double measure_onset_duration(const LandmarkSequence& seq) {
  require(seq.frames.size() >= 2 && seq.fps > 0.0, ErrorKind::InvariantViolation,
          "need a timed multi-frame sequence to measure");
  const std::size_t L = seq.landmark_count();
  std::vector<double> m(seq.frames.size(), 0.0);
  const LandmarkFrame& base = seq.frames[0];
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    double sum = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      double d2 = 0.0;
      for (std::size_t a = 0; a < 3; ++a) {
        const double d = static_cast<double>(seq.frames[i].coords[3 * l + a]) -
                         static_cast<double>(base.coords[3 * l + a]);
        d2 += d * d;
      }
      sum += std::sqrt(d2);
    }
    m[i] = sum / static_cast<double>(L);
  }
  double peak = 0.0;
  std::size_t peak_at = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] > peak) {
      peak = m[i];
      peak_at = i;
    }
  require(peak > 0.0, ErrorKind::InvariantViolation, "no deformation to measure");

  auto crossing = [&](double level) {
    for (std::size_t i = 1; i <= peak_at; ++i)
      if (m[i] >= level) {
        const double frac = (level - m[i - 1]) / (m[i] - m[i - 1]);
        return (static_cast<double>(i - 1) + frac) / seq.fps;
      }
    return static_cast<double>(peak_at) / seq.fps;
  };
  return crossing(0.9 * peak) - crossing(0.1 * peak);
}

DatasetManifest generate_dataset(std::size_t n_subjects, std::size_t videos_per_class,
                                 const KinematicsConfig& cfg, std::uint64_t seed,
                                 const std::string& out_dir) {
  require(n_subjects >= 1 && videos_per_class >= 1, ErrorKind::ConfigInvalid,
          "need at least one subject and one video per class");
  validate(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  require(!ec, ErrorKind::IoFailure, "cannot create output directory: " + out_dir);

  Rng master(seed);
  DatasetManifest manifest;
  for (std::size_t s = 0; s < n_subjects; ++s) {
    const std::uint64_t subject_seed = master.split("subject", s).seed();
    char subj[16];
    std::snprintf(subj, sizeof subj, "s%03zu", s);
    for (int label = 0; label <= 1; ++label) {
      for (std::size_t v = 0; v < videos_per_class; ++v) {
        Rng vid_rng = master.split("video", (s * 2 + static_cast<std::size_t>(label)) *
                                                videos_per_class +
                                            v);
        LandmarkSequence seq = generate_video(label, subject_seed, cfg, vid_rng);
        std::string id = std::string(subj) + "_l" + std::to_string(label) + "_v" +
                         std::to_string(v);
        std::string path = (std::filesystem::path(out_dir) / (id + ".mslm")).string();
        seq.video_id = id;
        seq.subject_id = subj;
        write_landmark_file(seq, path);
        manifest.videos.push_back({id, subj, label, cfg.fps, path});
      }
    }
  }
  write_manifest(manifest, (std::filesystem::path(out_dir) / "manifest.json").string());
  return manifest;
}

}  // namespace meshsmile
