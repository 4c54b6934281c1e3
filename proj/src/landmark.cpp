#include "meshsmile/landmark.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "meshsmile/errors.hpp"

namespace meshsmile {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'L', 'M'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kMinLandmarks = 4;

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

class ByteReader {
 public:
  ByteReader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

  std::uint16_t u16() {
    need(2, ErrorKind::MalformedHeader);
    std::uint16_t v = static_cast<std::uint8_t>(data_[pos_]) |
                      (static_cast<std::uint16_t>(static_cast<std::uint8_t>(data_[pos_ + 1])) << 8);
    pos_ += 2;
    return v;
  }

  std::uint32_t u32(ErrorKind kind = ErrorKind::MalformedHeader) {
    need(4, kind);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  float f32(ErrorKind kind) {
    std::uint32_t bits = u32(kind);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  void expect_magic(const char* magic) {
    need(4, ErrorKind::MalformedHeader);
    if (std::memcmp(data_.data() + pos_, magic, 4) != 0)
      fail(ErrorKind::MalformedHeader, path_ + ": bad magic bytes");
    pos_ += 4;
  }

 private:
  void need(std::size_t n, ErrorKind kind) {
    require(pos_ + n <= data_.size(), kind, path_ + ": file ends early");
  }

  const std::string& data_;
  std::string path_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::string& path, ErrorKind kind) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), kind, path + ": cannot open");
  std::ostringstream buf;
  buf << in.rdbuf();
  return std::move(buf).str();
}

void spill(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorKind::IoFailure, path + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::IoFailure, path + ": write failed");
}

void check_sequence_valid(const LandmarkSequence& seq) {
  require(!seq.frames.empty(), ErrorKind::InvariantViolation, "sequence has no frames");
  require(seq.fps > 0.0, ErrorKind::InvariantViolation, "fps must be positive");
  const std::size_t L = seq.frames[0].landmark_count();
  require(L >= kMinLandmarks, ErrorKind::InvariantViolation, "fewer than 4 landmarks per frame");
  for (const LandmarkFrame& f : seq.frames) {
    require(f.landmark_count() == L, ErrorKind::InvariantViolation,
            "landmark count varies across frames");
    for (float v : f.coords)
      require(std::isfinite(v), ErrorKind::NonFiniteValue, "non-finite coordinate");
  }
}

}  // namespace

Tensor LandmarkFrame::as_tensor() const {
  const std::size_t L = landmark_count();
  Tensor t = Tensor::zeros({L, 3});
  for (std::size_t i = 0; i < coords.size(); ++i) t[i] = static_cast<double>(coords[i]);
  return t;
}

LandmarkFrame LandmarkFrame::from_tensor(const Tensor& pts) {
  require(pts.rank() == 2 && pts.cols() == 3, ErrorKind::ShapeMismatch,
          "landmark tensor must be [L, 3]");
  LandmarkFrame f;
  f.coords.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) f.coords[i] = static_cast<float>(pts[i]);
  return f;
}

LandmarkSequence read_landmark_file(const std::string& path) {
  const std::string data = slurp(path, ErrorKind::IoFailure);
  ByteReader r(data, path);
  r.expect_magic(kMagic);
  const std::uint16_t version = r.u16();
  require(version == kVersion, ErrorKind::MalformedHeader,
          path + ": unsupported version " + std::to_string(version));
  const std::uint32_t n = r.u32();
  const std::uint32_t L = r.u32();
  const float fps = r.f32(ErrorKind::MalformedHeader);
  require(n >= 1, ErrorKind::MalformedHeader, path + ": zero frames declared");
  require(L >= kMinLandmarks, ErrorKind::MalformedHeader,
          path + ": fewer than 4 landmarks declared");
  require(std::isfinite(fps) && fps > 0.0f, ErrorKind::MalformedHeader,
          path + ": fps must be positive");

  LandmarkSequence seq;
  seq.fps = static_cast<double>(fps);
  seq.frames.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    LandmarkFrame& frame = seq.frames[i];
    frame.coords.resize(static_cast<std::size_t>(L) * 3);
    for (std::size_t j = 0; j < frame.coords.size(); ++j) {
      frame.coords[j] = r.f32(ErrorKind::TruncatedPayload);
      require(std::isfinite(frame.coords[j]), ErrorKind::NonFiniteValue,
              path + ": non-finite coordinate in frame " + std::to_string(i));
    }
  }
  return seq;
}

void write_landmark_file(const LandmarkSequence& seq, const std::string& path) {
  check_sequence_valid(seq);
  std::string bytes;
  bytes.reserve(18 + seq.frames.size() * seq.landmark_count() * 12);
  bytes.append(kMagic, 4);
  put_u16(bytes, kVersion);
  put_u32(bytes, static_cast<std::uint32_t>(seq.frames.size()));
  put_u32(bytes, static_cast<std::uint32_t>(seq.landmark_count()));
  put_f32(bytes, static_cast<float>(seq.fps));
  for (const LandmarkFrame& f : seq.frames)
    for (float v : f.coords) put_f32(bytes, v);
  spill(path, bytes);
}

LandmarkSequence import_csv(const std::string& path, double fps) {
  require(fps > 0.0, ErrorKind::ConfigInvalid, "fps must be positive");
  std::ifstream in(path);
  require(in.good(), ErrorKind::IoFailure, path + ": cannot open");

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::CsvParse, path + ": empty file");
  std::size_t n_cols = line.empty() ? 0 : 1 + std::count(line.begin(), line.end(), ',');
  require(n_cols >= 3 && n_cols % 3 == 0, ErrorKind::CsvParse,
          path + ": header must have 3 columns per landmark, got " + std::to_string(n_cols));
  const std::size_t L = n_cols / 3;

  LandmarkSequence seq;
  seq.fps = fps;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    LandmarkFrame frame;
    frame.coords.reserve(n_cols);
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        float v = std::stof(cell, &used);
        require(used == cell.size(), ErrorKind::CsvParse, "");
        frame.coords.push_back(v);
      } catch (const std::exception&) {
        fail(ErrorKind::CsvParse, path + ": row " + std::to_string(row) + ", column " +
                                      std::to_string(frame.coords.size() + 1) +
                                      ": not a number: '" + cell + "'");
      }
    }
    require(frame.coords.size() == n_cols, ErrorKind::CsvParse,
            path + ": row " + std::to_string(row) + " has " +
                std::to_string(frame.coords.size()) + " fields, expected " +
                std::to_string(n_cols));
    seq.frames.push_back(std::move(frame));
  }
  require(!seq.frames.empty(), ErrorKind::CsvParse, path + ": no data rows after the header");
  require(L >= kMinLandmarks, ErrorKind::CsvParse, path + ": fewer than 4 landmarks per row");
  check_sequence_valid(seq);
  return seq;
}

DatasetManifest read_manifest(const std::string& path) {
  const std::string data = slurp(path, ErrorKind::IoFailure);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(data);
  } catch (const std::exception& e) {
    fail(ErrorKind::MalformedHeader, path + ": invalid JSON: " + e.what());
  }
  require(doc.is_object() && doc.contains("videos") && doc["videos"].is_array(),
          ErrorKind::MalformedHeader, path + ": expected {\"videos\": [...]}");

  DatasetManifest manifest;
  std::set<std::string> seen;
  for (const auto& item : doc["videos"]) {
    VideoRecord rec;
    try {
      rec.id = item.at("id").get<std::string>();
      rec.subject = item.at("subject").get<std::string>();
      rec.label = item.at("label").get<int>();
      rec.fps = item.at("fps").get<double>();
      rec.path = item.at("path").get<std::string>();
    } catch (const std::exception& e) {
      fail(ErrorKind::MalformedHeader, path + ": bad video record: " + e.what());
    }
    require(rec.label == 0 || rec.label == 1, ErrorKind::MalformedHeader,
            path + ": label must be 0 or 1 for video " + rec.id);
    require(rec.fps > 0.0, ErrorKind::MalformedHeader, path + ": non-positive fps for " + rec.id);
    require(seen.insert(rec.id).second, ErrorKind::MalformedHeader,
            path + ": duplicate video id " + rec.id);
    manifest.videos.push_back(std::move(rec));
  }
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  nlohmann::json videos = nlohmann::json::array();
  for (const VideoRecord& rec : manifest.videos) {
    videos.push_back({{"id", rec.id},
                      {"subject", rec.subject},
                      {"label", rec.label},
                      {"fps", rec.fps},
                      {"path", rec.path}});
  }
  spill(path, nlohmann::json{{"videos", videos}}.dump(2) + "\n");
}

LandmarkSequence load_video(const VideoRecord& record) {
  LandmarkSequence seq = read_landmark_file(record.path);
  seq.video_id = record.id;
  seq.subject_id = record.subject;
  seq.label = record.label;
  seq.fps = record.fps;
  return seq;
}

LandmarkSequence resample_fps(const LandmarkSequence& seq, double target_fps) {
  require(target_fps > 0.0, ErrorKind::ConfigInvalid, "target fps must be positive");
  require(target_fps <= seq.fps, ErrorKind::UpsampleRequested,
          "target fps exceeds the source rate");
  LandmarkSequence out;
  out.fps = target_fps;
  out.video_id = seq.video_id;
  out.subject_id = seq.subject_id;
  out.label = seq.label;
  const double ratio = seq.fps / target_fps;
  for (std::size_t i = 0;; ++i) {
    const std::size_t idx = static_cast<std::size_t>(std::floor(static_cast<double>(i) * ratio));
    if (idx >= seq.frames.size()) break;
    out.frames.push_back(seq.frames[idx]);
  }
  return out;
}

namespace {

Clip window_with_wrap(const LandmarkSequence& seq, std::size_t start, std::size_t clip_len) {
  Clip clip;
  clip.source_id = seq.video_id;
  clip.frames.reserve(clip_len);
  const std::size_t n = seq.frames.size();
  for (std::size_t i = 0; i < clip_len; ++i) clip.frames.push_back(seq.frames[(start + i) % n]);
  return clip;
}

}  // namespace

Clip sample_train_clip(const LandmarkSequence& seq, std::size_t clip_len, Rng& rng) {
  require(!seq.frames.empty(), ErrorKind::InvariantViolation, "sequence has no frames");
  require(clip_len >= 1, ErrorKind::ConfigInvalid, "clip length must be at least 1");
  const std::size_t n = seq.frames.size();
  const std::size_t start = n >= clip_len ? rng.uniform_int(n - clip_len + 1) : 0;
  return window_with_wrap(seq, start, clip_len);
}

std::vector<Clip> sample_eval_clips(const LandmarkSequence& seq, std::size_t clip_len,
                                    std::size_t n_clips) {
  require(!seq.frames.empty(), ErrorKind::InvariantViolation, "sequence has no frames");
  require(clip_len >= 1, ErrorKind::ConfigInvalid, "clip length must be at least 1");
  require(n_clips >= 1, ErrorKind::ConfigInvalid, "clip count must be at least 1");
  const std::size_t n = seq.frames.size();
  const std::size_t hi = n > clip_len ? n - clip_len : 0;
  std::vector<Clip> clips;
  clips.reserve(n_clips);
  for (std::size_t i = 0; i < n_clips; ++i) {
    std::size_t start = 0;
    if (n_clips > 1 && hi > 0) {
      const double pos = static_cast<double>(i) * static_cast<double>(hi) /
                         static_cast<double>(n_clips - 1);
      start = static_cast<std::size_t>(std::llround(pos));
    }
    clips.push_back(window_with_wrap(seq, start, clip_len));
  }
  return clips;
}

NormalizeMode parse_normalize_mode(const std::string& text) {
  if (text == "frame") return NormalizeMode::Frame;
  if (text == "video") return NormalizeMode::Video;
  if (text == "off") return NormalizeMode::Off;
  fail(ErrorKind::ConfigInvalid, "normalize mode must be frame, video, or off: " + text);
}

FrameStats compute_frame_stats(const Tensor& pts) {
  require(pts.rank() == 2 && pts.cols() == 3 && pts.rows() >= 2, ErrorKind::ShapeMismatch,
          "frame statistics need at least two [L, 3] points");
  FrameStats stats;
  const std::size_t L = pts.rows();
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t c = 0; c < 3; ++c) stats.centroid[c] += pts.at(l, c);
  for (double& c : stats.centroid) c /= static_cast<double>(L);
  for (std::size_t l = 0; l < L; ++l) {
    double r2 = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      const double d = pts.at(l, c) - stats.centroid[c];
      r2 += d * d;
    }
    stats.mean_radius += std::sqrt(r2);
  }
  stats.mean_radius /= static_cast<double>(L);
  return stats;
}

Tensor normalize_coords_with(const Tensor& pts, const FrameStats& stats) {
  require(stats.mean_radius > 1e-12, ErrorKind::DegenerateFrame,
          "all landmarks coincide; cannot normalize");
  Tensor out = pts;
  for (std::size_t l = 0; l < pts.rows(); ++l)
    for (std::size_t c = 0; c < 3; ++c)
      out.at(l, c) = (pts.at(l, c) - stats.centroid[c]) / stats.mean_radius;
  return out;
}

Tensor normalize_coords(const Tensor& pts) {
  return normalize_coords_with(pts, compute_frame_stats(pts));
}

LandmarkFrame normalize_frame(const LandmarkFrame& frame) {
  return LandmarkFrame::from_tensor(normalize_coords(frame.as_tensor()));
}

std::vector<std::vector<std::string>> make_folds(const DatasetManifest& manifest, std::size_t k,
                                                 std::uint64_t seed) {
  require(k >= 1, ErrorKind::ConfigInvalid, "fold count must be at least 1");
  std::set<std::string> subject_set;
  for (const VideoRecord& rec : manifest.videos) subject_set.insert(rec.subject);
  std::vector<std::string> subjects(subject_set.begin(), subject_set.end());
  require(subjects.size() >= k, ErrorKind::TooFewSubjects,
          std::to_string(subjects.size()) + " subjects cannot fill " + std::to_string(k) +
              " folds");

  Rng rng = Rng(seed).split("folds");
  rng.shuffle(subjects);

  // Near-equal contiguous chunks; the first (n mod k) folds get one extra.
  std::vector<std::vector<std::string>> folds(k);
  const std::size_t base = subjects.size() / k;
  const std::size_t extra = subjects.size() % k;
  std::size_t cursor = 0;
  std::vector<std::vector<std::string>> fold_subjects(k);
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t take = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < take; ++i) fold_subjects[f].push_back(subjects[cursor++]);
  }
  for (std::size_t f = 0; f < k; ++f) {
    std::set<std::string> members(fold_subjects[f].begin(), fold_subjects[f].end());
    for (const VideoRecord& rec : manifest.videos)
      if (members.count(rec.subject)) folds[f].push_back(rec.id);
  }
  return folds;
}

}  // namespace meshsmile
