#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "meshsmile/errors.hpp"
#include "meshsmile/landmark.hpp"
#include "meshsmile/synthetic.hpp"

using namespace meshsmile;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "meshsmile_synth" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Mean landmark displacement of frame i from frame 0, recomputed here as an
// independent oracle for the amplitude curve (displacement is proportional to
// a(t) when noise is off).
double mean_displacement(const LandmarkSequence& seq, std::size_t i) {
  const std::size_t L = seq.landmark_count();
  double sum = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    double d2 = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      const double d = static_cast<double>(seq.frames[i].coords[3 * l + a]) -
                       static_cast<double>(seq.frames[0].coords[3 * l + a]);
      d2 += d * d;
    }
    sum += std::sqrt(d2);
  }
  return sum / static_cast<double>(L);
}

bool frames_equal(const LandmarkFrame& a, const LandmarkFrame& b) {
  return a.coords == b.coords;
}

}  // namespace

TEST_CASE("neutral template is a pure function of the subject seed") {
  KinematicsConfig cfg;
  const Tensor t1 = subject_template(7, cfg);
  const Tensor t2 = subject_template(7, cfg);
  REQUIRE(t1.rows() == 68);
  bool same = true;
  for (std::size_t l = 0; l < t1.rows(); ++l)
    for (std::size_t a = 0; a < 3; ++a)
      if (t1.at(l, a) != t2.at(l, a)) same = false;
  CHECK(same);

  const Tensor t3 = subject_template(8, cfg);
  bool differs = false;
  for (std::size_t l = 0; l < t1.rows() && !differs; ++l)
    for (std::size_t a = 0; a < 3; ++a)
      if (t1.at(l, a) != t3.at(l, a)) differs = true;
  CHECK(differs);

  // Kinematics knobs do not leak into the geometry stream.
  KinematicsConfig other = cfg;
  other.noise_sd = 0.5;
  other.fps = 12.5;
  other.amplitude_lo = other.amplitude_hi = 0.0;
  const Tensor t4 = subject_template(7, other);
  for (std::size_t l = 0; l < t1.rows(); ++l)
    for (std::size_t a = 0; a < 3; ++a) CHECK(t4.at(l, a) == t1.at(l, a));

  KinematicsConfig small = cfg;
  small.n_landmarks = 12;
  CHECK(subject_template(7, small).rows() == 12);
}

TEST_CASE("zero amplitude and zero noise reproduce the neutral template") {
  KinematicsConfig cfg;
  cfg.amplitude_lo = cfg.amplitude_hi = 0.0;
  cfg.noise_sd = 0.0;
  const Tensor tmpl = subject_template(42, cfg);

  for (int label = 0; label <= 1; ++label) {
    Rng rng(3 + static_cast<std::uint64_t>(label));
    const LandmarkSequence seq = generate_video(label, 42, cfg, rng);
    CHECK(seq.frames.size() == 100);  // 4 s at 25 fps
    CHECK(seq.fps == 25.0);
    CHECK(seq.label == label);
    CHECK(seq.landmark_count() == 68);
    for (const LandmarkFrame& f : seq.frames)
      for (std::size_t l = 0; l < 68; ++l)
        for (std::size_t a = 0; a < 3; ++a)
          CHECK(f.coords[3 * l + a] == static_cast<float>(tmpl.at(l, a)));
  }
}

TEST_CASE("noise-free amplitude curve is monotone on both ramps") {
  KinematicsConfig cfg;
  cfg.noise_sd = 0.0;
  Rng rng(11);
  const LandmarkSequence seq = generate_video(0, 5, cfg, rng);

  std::vector<double> m(seq.frames.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = mean_displacement(seq, i);
  CHECK(m[0] == 0.0);

  const double peak = *std::max_element(m.begin(), m.end());
  CHECK(peak > 0.0);
  std::size_t first_peak = 0, last_peak = 0;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (m[i] >= peak - 1e-9) {
      if (first_peak == 0) first_peak = i;
      last_peak = i;
    }
  REQUIRE(first_peak > 0);
  REQUIRE(last_peak > first_peak);  // a real apex plateau exists

  // Non-decreasing up the onset, non-increasing down the offset. The slack
  // only absorbs float-storage rounding of an exactly monotone curve.
  for (std::size_t i = 1; i <= first_peak; ++i) CHECK(m[i] >= m[i - 1] - 1e-6);
  for (std::size_t i = last_peak + 1; i < m.size(); ++i) CHECK(m[i] <= m[i - 1] + 1e-6);
}

TEST_CASE("measured onset durations land inside the label's configured range") {
  // Dense sampling makes the 10-90% crossing interpolation error far smaller
  // than the distance of any drawn duration to its interval's edges, so the
  // in-range checks can be strict.
  KinematicsConfig cfg;
  cfg.noise_sd = 0.0;
  cfg.fps = 100.0;

  double max_posed = 0.0, min_spont = 1e9;
  for (std::uint64_t v = 0; v < 10; ++v) {
    Rng pr(100 + v);
    const double dp = measure_onset_duration(generate_video(1, 1000 + v, cfg, pr));
    CAPTURE(v);
    CHECK(dp >= cfg.onset_posed_lo);
    CHECK(dp <= cfg.onset_posed_hi);
    max_posed = std::max(max_posed, dp);

    Rng sr(200 + v);
    const double ds = measure_onset_duration(generate_video(0, 2000 + v, cfg, sr));
    CHECK(ds >= cfg.onset_spont_lo);
    CHECK(ds <= cfg.onset_spont_hi);
    min_spont = std::min(min_spont, ds);
  }
  CHECK(max_posed < min_spont);
}

TEST_CASE("a threshold on measured onset duration separates the classes") {
  const double threshold = 0.65;  // between posed_hi = 0.5 and spont_lo = 0.8

  SUBCASE("noise-free at the default frame rate") {
    KinematicsConfig cfg;
    cfg.noise_sd = 0.0;
    const double slack = 2.0 / cfg.fps;  // crossing resolution at 25 fps
    for (std::uint64_t v = 0; v < 10; ++v) {
      Rng pr(300 + v);
      const double dp = measure_onset_duration(generate_video(1, 3000 + v, cfg, pr));
      CAPTURE(v);
      CHECK(dp < threshold);
      CHECK(dp >= cfg.onset_posed_lo - slack);
      CHECK(dp <= cfg.onset_posed_hi + slack);

      Rng sr(400 + v);
      const double ds = measure_onset_duration(generate_video(0, 4000 + v, cfg, sr));
      CHECK(ds > threshold);
      CHECK(ds >= cfg.onset_spont_lo - slack);
      CHECK(ds <= cfg.onset_spont_hi + slack);
    }
  }

  SUBCASE("default coordinate noise keeps the classes separated") {
    // Noise puts a floor under the displacement signal (norms of noise
    // differences do not cancel), which sits above the 10%-of-peak crossing
    // level and drags the measured start toward frame zero. That shifts both
    // classes up by a similar factor, so the noise-free threshold value does
    // not transfer — but the class gap survives intact.
    KinematicsConfig cfg;  // noise_sd = 0.01
    double max_posed = 0.0, min_spont = 1e9;
    for (std::uint64_t v = 0; v < 10; ++v) {
      Rng pr(500 + v);
      max_posed = std::max(max_posed,
                           measure_onset_duration(generate_video(1, 5000 + v, cfg, pr)));
      Rng sr(600 + v);
      min_spont = std::min(min_spont,
                           measure_onset_duration(generate_video(0, 6000 + v, cfg, sr)));
    }
    CHECK(max_posed < min_spont);
  }
}

TEST_CASE("videos of one subject share the template but not the performance") {
  KinematicsConfig cfg;
  cfg.noise_sd = 0.0;
  Rng r1(21), r2(22);
  const LandmarkSequence a = generate_video(1, 77, cfg, r1);
  const LandmarkSequence b = generate_video(1, 77, cfg, r2);

  // At t = 0 the amplitude is zero, so both first frames ARE the shared
  // neutral template, bit for bit.
  CHECK(frames_equal(a.frames[0], b.frames[0]));

  // Mid-video the independently drawn amplitude/timing/asymmetry differ.
  bool differs = false;
  for (std::size_t i = 1; i < a.frames.size() && !differs; ++i)
    differs = !frames_equal(a.frames[i], b.frames[i]);
  CHECK(differs);

  // With coordinate noise on, even the first frames differ.
  cfg.noise_sd = 0.01;
  Rng r3(21), r4(22);
  const LandmarkSequence c = generate_video(1, 77, cfg, r3);
  const LandmarkSequence d = generate_video(1, 77, cfg, r4);
  CHECK_FALSE(frames_equal(c.frames[0], d.frames[0]));
}

TEST_CASE("null mode erases every trace of the label but the label field") {
  RunConfig rc;
  rc.set("synth.null_mode", "true");
  const KinematicsConfig cfg = kinematics_from(rc);
  CHECK(cfg.onset_posed_lo == cfg.onset_spont_lo);
  CHECK(cfg.onset_posed_hi == cfg.onset_spont_hi);

  // Equal onset intervals consume the random stream identically, so the two
  // labels generate bit-identical geometry.
  Rng ra(77), rb(77);
  const LandmarkSequence v0 = generate_video(0, 9, cfg, ra);
  const LandmarkSequence v1 = generate_video(1, 9, cfg, rb);
  CHECK(v0.label == 0);
  CHECK(v1.label == 1);
  REQUIRE(v0.frames.size() == v1.frames.size());
  for (std::size_t i = 0; i < v0.frames.size(); ++i) CHECK(frames_equal(v0.frames[i], v1.frames[i]));

  // Sanity: outside null mode the same experiment separates the labels.
  const KinematicsConfig live = kinematics_from(RunConfig());
  Rng rc0(77), rc1(77);
  const LandmarkSequence w0 = generate_video(0, 9, live, rc0);
  const LandmarkSequence w1 = generate_video(1, 9, live, rc1);
  bool differs = false;
  for (std::size_t i = 0; i < w0.frames.size() && !differs; ++i)
    differs = !frames_equal(w0.frames[i], w1.frames[i]);
  CHECK(differs);
}

TEST_CASE("kinematics configuration reading and validation") {
  SUBCASE("defaults round-trip through the run configuration") {
    const KinematicsConfig k = kinematics_from(RunConfig());
    const KinematicsConfig d;
    CHECK(k.n_landmarks == d.n_landmarks);
    CHECK(k.fps == d.fps);
    CHECK(k.duration_s == d.duration_s);
    CHECK(k.onset_spont_lo == d.onset_spont_lo);
    CHECK(k.onset_spont_hi == d.onset_spont_hi);
    CHECK(k.onset_posed_lo == d.onset_posed_lo);
    CHECK(k.onset_posed_hi == d.onset_posed_hi);
    CHECK(k.amplitude_lo == d.amplitude_lo);
    CHECK(k.amplitude_hi == d.amplitude_hi);
    CHECK(k.noise_sd == d.noise_sd);
    CHECK(k.asym_lo == d.asym_lo);
    CHECK(k.asym_hi == d.asym_hi);
    CHECK(k.offset_lo == d.offset_lo);
    CHECK(k.offset_hi == d.offset_hi);
  }

  SUBCASE("bad values are rejected") {
    auto with = [](const std::string& key, const std::string& value) {
      RunConfig rc;
      rc.set(key, value);
      return rc;
    };
    CHECK_THROWS_WITH_AS(kinematics_from(with("synth.onset_spont_lo", "2.0")),
                         doctest::Contains("inverted"), Error);
    CHECK_THROWS_WITH_AS(kinematics_from(with("synth.onset_posed_hi", "0.1")),
                         doctest::Contains("inverted"), Error);
    CHECK_THROWS_WITH_AS(kinematics_from(with("synth.noise_sd", "-0.1")),
                         doctest::Contains("non-negative"), Error);
    CHECK_THROWS_WITH_AS(kinematics_from(with("synth.fps", "0")),
                         doctest::Contains("positive"), Error);
    CHECK_THROWS_WITH_AS(kinematics_from(with("synth.landmarks", "8")),
                         doctest::Contains("12 landmarks"), Error);
    CHECK_THROWS_WITH_AS(kinematics_from(with("synth.amplitude_lo", "-0.1")),
                         doctest::Contains("positive"), Error);
    // The slowest measured onset (1.5 s) needs a ramp longer than itself,
    // plus up to 1 s of offset: 3 s cannot hold it.
    CHECK_THROWS_WITH_AS(kinematics_from(with("synth.duration", "3.0")),
                         doctest::Contains("too short"), Error);
    // 4 s x 4 fps = 16 frames, under the 20-frame floor.
    CHECK_THROWS_WITH_AS(kinematics_from(with("synth.fps", "4")),
                         doctest::Contains("20 frames"), Error);

    KinematicsConfig cfg;
    Rng rng(1);
    CHECK_THROWS_WITH_AS(generate_video(2, 0, cfg, rng), doctest::Contains("label"), Error);
  }
}

TEST_CASE("dataset generation is balanced, foldable, and byte-reproducible") {
  KinematicsConfig cfg;
  cfg.n_landmarks = 16;  // small but valid geometry for speed
  const fs::path dir_a = temp_dir("set_a");
  const DatasetManifest manifest = generate_dataset(5, 1, cfg, 1234, dir_a.string());

  REQUIRE(manifest.videos.size() == 10);
  std::map<std::string, std::set<int>> labels_by_subject;
  std::set<std::string> ids;
  int posed = 0;
  for (const VideoRecord& r : manifest.videos) {
    ids.insert(r.id);
    labels_by_subject[r.subject].insert(r.label);
    posed += r.label;
    CHECK(r.fps == cfg.fps);
    CHECK(fs::exists(r.path));
  }
  CHECK(ids.size() == 10);
  CHECK(posed == 5);
  CHECK(labels_by_subject.size() == 5);
  for (const auto& [subject, labels] : labels_by_subject)
    CHECK(labels == std::set<int>{0, 1});

  // The manifest on disk describes exactly what was returned.
  const DatasetManifest reread = read_manifest((dir_a / "manifest.json").string());
  REQUIRE(reread.videos.size() == manifest.videos.size());
  for (std::size_t i = 0; i < reread.videos.size(); ++i) {
    CHECK(reread.videos[i].id == manifest.videos[i].id);
    CHECK(reread.videos[i].subject == manifest.videos[i].subject);
    CHECK(reread.videos[i].label == manifest.videos[i].label);
    CHECK(reread.videos[i].path == manifest.videos[i].path);
  }

  // Loading a record yields a fully stamped sequence.
  const LandmarkSequence loaded = load_video(manifest.videos[0]);
  CHECK(loaded.landmark_count() == 16);
  CHECK(loaded.frames.size() == 100);
  CHECK(loaded.video_id == manifest.videos[0].id);
  CHECK(loaded.subject_id == manifest.videos[0].subject);
  CHECK(loaded.label == manifest.videos[0].label);

  // Subject-disjoint folding works directly on the generated manifest.
  const auto folds = make_folds(manifest, 5, 99);
  REQUIRE(folds.size() == 5);
  std::set<std::string> seen;
  std::map<std::string, std::string> subject_of;
  for (const VideoRecord& r : manifest.videos) subject_of[r.id] = r.subject;
  for (const auto& fold : folds) {
    CHECK(fold.size() == 2);
    std::set<std::string> subjects;
    for (const std::string& id : fold) {
      subjects.insert(subject_of.at(id));
      seen.insert(id);
    }
    CHECK(subjects.size() == 1);  // 5 folds over 5 subjects: one subject each
  }
  CHECK(seen == ids);

  // Same seed, fresh directory: every landmark file byte-identical, manifest
  // identical up to the directory prefix.
  const fs::path dir_b = temp_dir("set_b");
  const DatasetManifest again = generate_dataset(5, 1, cfg, 1234, dir_b.string());
  REQUIRE(again.videos.size() == manifest.videos.size());
  for (std::size_t i = 0; i < again.videos.size(); ++i) {
    CHECK(again.videos[i].id == manifest.videos[i].id);
    CHECK(slurp_bytes(again.videos[i].path) == slurp_bytes(manifest.videos[i].path));
  }

  // Regenerating in place leaves the manifest file bit-for-bit unchanged.
  const std::string manifest_bytes = slurp_bytes(dir_a / "manifest.json");
  generate_dataset(5, 1, cfg, 1234, dir_a.string());
  CHECK(slurp_bytes(dir_a / "manifest.json") == manifest_bytes);

  // A different seed changes the data.
  const fs::path dir_c = temp_dir("set_c");
  const DatasetManifest other = generate_dataset(5, 1, cfg, 4321, dir_c.string());
  bool any_differs = false;
  for (std::size_t i = 0; i < other.videos.size() && !any_differs; ++i)
    any_differs = slurp_bytes(other.videos[i].path) != slurp_bytes(manifest.videos[i].path);
  CHECK(any_differs);

  CHECK_THROWS_WITH_AS(generate_dataset(0, 1, cfg, 1, temp_dir("set_d").string()),
                       doctest::Contains("at least one subject"), Error);
}

TEST_CASE("onset measurement rejects sequences with nothing to measure") {
  LandmarkFrame f;
  f.coords = {1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f};
  LandmarkSequence flat;
  flat.fps = 25.0;
  flat.frames = {f, f, f, f};
  CHECK_THROWS_WITH_AS(measure_onset_duration(flat), doctest::Contains("no deformation"), Error);

  LandmarkSequence single;
  single.fps = 25.0;
  single.frames = {f};
  CHECK_THROWS_WITH_AS(measure_onset_duration(single), doctest::Contains("multi-frame"), Error);

  LandmarkSequence untimed;
  untimed.frames = {f, f};
  CHECK_THROWS_WITH_AS(measure_onset_duration(untimed), doctest::Contains("multi-frame"), Error);
}

TEST_CASE("deformation concentrates on the lower face and obeys the asymmetry factor") {
  KinematicsConfig cfg;
  cfg.noise_sd = 0.0;
  cfg.amplitude_lo = cfg.amplitude_hi = 1.0;
  cfg.asym_lo = cfg.asym_hi = 1.0;
  const Tensor tmpl = subject_template(3, cfg);
  Rng rng(1);
  const LandmarkSequence seq = generate_video(1, 3, cfg, rng);
  const std::size_t mid = seq.frames.size() / 2;  // apex plateau

  std::vector<double> disp(68);
  for (std::size_t l = 0; l < 68; ++l) {
    double d2 = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      const double d = static_cast<double>(seq.frames[mid].coords[3 * l + a]) -
                       static_cast<double>(seq.frames[0].coords[3 * l + a]);
      d2 += d * d;
    }
    disp[l] = std::sqrt(d2);
  }

  // The most displaced landmark sits in the lower half of the face, and the
  // mouth region moves far more than the upper face.
  const std::size_t peak_l =
      static_cast<std::size_t>(std::max_element(disp.begin(), disp.end()) - disp.begin());
  CHECK(tmpl.at(peak_l, 1) < 0.0);
  double lower = 0.0, upper = 0.0;
  std::size_t n_lower = 0, n_upper = 0;
  for (std::size_t l = 0; l < 68; ++l) {
    if (tmpl.at(l, 1) < -0.3) {
      lower += disp[l];
      ++n_lower;
    } else if (tmpl.at(l, 1) > 0.5) {
      upper += disp[l];
      ++n_upper;
    }
  }
  REQUIRE(n_lower > 0);
  REQUIRE(n_upper > 0);
  CHECK(lower / n_lower > 3.0 * (upper / n_upper));

  // Pinning the asymmetry factor at 1.15 scales left-side (x < 0)
  // displacements by exactly that factor and leaves the right side alone;
  // the fixed intervals keep the random draw stream aligned between runs.
  KinematicsConfig skewed = cfg;
  skewed.asym_lo = skewed.asym_hi = 1.15;
  Rng rng2(1);
  const LandmarkSequence skew = generate_video(1, 3, skewed, rng2);
  std::size_t checked = 0;
  for (std::size_t l = 0; l < 68; ++l) {
    if (tmpl.at(l, 0) >= 0.0) {
      // The right side is untouched by the factor: identical bytes.
      for (std::size_t a = 0; a < 3; ++a)
        CHECK(skew.frames[mid].coords[3 * l + a] == seq.frames[mid].coords[3 * l + a]);
      continue;
    }
    // Left-side ratio, restricted to displacements comfortably above the
    // float storage resolution of O(1) coordinates.
    if (disp[l] < 1e-3) continue;
    double d2 = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      const double d = static_cast<double>(skew.frames[mid].coords[3 * l + a]) -
                       static_cast<double>(skew.frames[0].coords[3 * l + a]);
      d2 += d * d;
    }
    CHECK(std::sqrt(d2) == doctest::Approx(1.15 * disp[l]).epsilon(1e-3));
    ++checked;
  }
  CHECK(checked >= 5);
}
