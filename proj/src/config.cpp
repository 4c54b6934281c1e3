#include "meshsmile/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <utility>

#include <nlohmann/json.hpp>

#include "meshsmile/errors.hpp"

namespace meshsmile {

namespace {

struct Default {
  const char* key;
  RunConfig::Kind kind;
  double num;
  std::size_t cnt;
  bool on;
  const char* str;
};

constexpr double kNoNum = 0.0;
constexpr std::size_t kNoCnt = 0;

const Default kDefaults[] = {
    {"model.landmarks", RunConfig::Kind::Count, kNoNum, 478, false, ""},
    {"model.d", RunConfig::Kind::Count, kNoNum, 64, false, ""},
    {"model.tokens", RunConfig::Kind::Count, kNoNum, 32, false, ""},
    {"model.heads", RunConfig::Kind::Count, kNoNum, 4, false, ""},
    {"model.blocks_spatial", RunConfig::Kind::Count, kNoNum, 6, false, ""},
    {"model.blocks_temporal", RunConfig::Kind::Count, kNoNum, 3, false, ""},
    {"model.block_order", RunConfig::Kind::Text, kNoNum, kNoCnt, false, "stacked"},
    {"model.curves", RunConfig::Kind::Count, kNoNum, 8, false, ""},
    {"model.curve_len", RunConfig::Kind::Count, kNoNum, 16, false, ""},
    {"model.knn", RunConfig::Kind::Count, kNoNum, 8, false, ""},
    {"model.tau", RunConfig::Kind::Number, 1.0, kNoCnt, false, ""},
    {"model.use_curvenet", RunConfig::Kind::Flag, kNoNum, kNoCnt, true, ""},
    {"model.use_spatial", RunConfig::Kind::Flag, kNoNum, kNoCnt, true, ""},
    {"model.use_temporal", RunConfig::Kind::Flag, kNoNum, kNoCnt, true, ""},
    {"model.pool", RunConfig::Kind::Text, kNoNum, kNoCnt, false, "mean"},
    {"model.normalize", RunConfig::Kind::Text, kNoNum, kNoCnt, false, "frame"},
    {"train.batch_size", RunConfig::Kind::Count, kNoNum, 16, false, ""},
    {"train.epochs", RunConfig::Kind::Count, kNoNum, 300, false, ""},
    {"train.lr", RunConfig::Kind::Number, 5e-4, kNoCnt, false, ""},
    {"train.weight_decay", RunConfig::Kind::Number, 0.01, kNoCnt, false, ""},
    {"train.clip_len", RunConfig::Kind::Count, kNoNum, 16, false, ""},
    {"train.eval_clips", RunConfig::Kind::Count, kNoNum, 5, false, ""},
    {"train.seed", RunConfig::Kind::Count, kNoNum, 0, false, ""},
    {"train.folds", RunConfig::Kind::Count, kNoNum, 10, false, ""},
    {"train.trials", RunConfig::Kind::Count, kNoNum, 1, false, ""},
    {"train.reseed_folds", RunConfig::Kind::Flag, kNoNum, kNoCnt, false, ""},
    {"train.jobs", RunConfig::Kind::Count, kNoNum, 1, false, ""},
    {"data.fps", RunConfig::Kind::Number, 0.0, kNoCnt, false, ""},
    {"synth.landmarks", RunConfig::Kind::Count, kNoNum, 68, false, ""},
    {"synth.fps", RunConfig::Kind::Number, 25.0, kNoCnt, false, ""},
    {"synth.duration", RunConfig::Kind::Number, 4.0, kNoCnt, false, ""},
    {"synth.onset_spont_lo", RunConfig::Kind::Number, 0.8, kNoCnt, false, ""},
    {"synth.onset_spont_hi", RunConfig::Kind::Number, 1.5, kNoCnt, false, ""},
    {"synth.onset_posed_lo", RunConfig::Kind::Number, 0.2, kNoCnt, false, ""},
    {"synth.onset_posed_hi", RunConfig::Kind::Number, 0.5, kNoCnt, false, ""},
    {"synth.amplitude_lo", RunConfig::Kind::Number, 0.6, kNoCnt, false, ""},
    {"synth.amplitude_hi", RunConfig::Kind::Number, 1.0, kNoCnt, false, ""},
    {"synth.noise_sd", RunConfig::Kind::Number, 0.01, kNoCnt, false, ""},
    {"synth.asym_lo", RunConfig::Kind::Number, 0.85, kNoCnt, false, ""},
    {"synth.asym_hi", RunConfig::Kind::Number, 1.15, kNoCnt, false, ""},
    {"synth.offset_lo", RunConfig::Kind::Number, 0.5, kNoCnt, false, ""},
    {"synth.offset_hi", RunConfig::Kind::Number, 1.0, kNoCnt, false, ""},
    {"synth.subjects", RunConfig::Kind::Count, kNoNum, 40, false, ""},
    {"synth.per_class", RunConfig::Kind::Count, kNoNum, 1, false, ""},
    {"synth.null_mode", RunConfig::Kind::Flag, kNoNum, kNoCnt, false, ""},
};

std::string render(const Default& d) {
  switch (d.kind) {
    case RunConfig::Kind::Number: {
      std::ostringstream os;
      os << d.num;
      return os.str();
    }
    case RunConfig::Kind::Count:
      return std::to_string(d.cnt);
    case RunConfig::Kind::Flag:
      return d.on ? "true" : "false";
    case RunConfig::Kind::Text:
      return d.str;
  }
  return "";
}

}  // namespace

RunConfig::RunConfig() {
  for (const Default& d : kDefaults) {
    Entry e;
    e.kind = d.kind;
    e.num = d.num;
    e.cnt = d.cnt;
    e.on = d.on;
    e.str = d.str;
    values_.emplace(d.key, std::move(e));
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::IoFailure, path + ": cannot open config file");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ConfigInvalid, path + ": " + e.what());
  }
  require(doc.is_object(), ErrorKind::ConfigInvalid, path + ": expected a flat JSON object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    auto found = values_.find(it.key());
    require(found != values_.end(), ErrorKind::ConfigInvalid,
            path + ": unknown key \"" + it.key() + "\"");
    Entry& e = found->second;
    const nlohmann::json& v = it.value();
    switch (e.kind) {
      case Kind::Number:
        require(v.is_number(), ErrorKind::ConfigInvalid,
                path + ": key \"" + it.key() + "\" expects a number");
        e.num = v.get<double>();
        break;
      case Kind::Count:
        require(v.is_number_integer() && (v.is_number_unsigned() || v.get<long long>() >= 0),
                ErrorKind::ConfigInvalid,
                path + ": key \"" + it.key() + "\" expects a non-negative integer");
        e.cnt = v.get<std::size_t>();
        break;
      case Kind::Flag:
        require(v.is_boolean(), ErrorKind::ConfigInvalid,
                path + ": key \"" + it.key() + "\" expects true or false");
        e.on = v.get<bool>();
        break;
      case Kind::Text:
        require(v.is_string(), ErrorKind::ConfigInvalid,
                path + ": key \"" + it.key() + "\" expects a string");
        e.str = v.get<std::string>();
        break;
    }
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto found = values_.find(key);
  require(found != values_.end(), ErrorKind::ConfigInvalid, "unknown key \"" + key + "\"");
  Entry& e = found->second;
  try {
    switch (e.kind) {
      case Kind::Number: {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        require(used == value.size() && !value.empty(), ErrorKind::ConfigInvalid,
                "key \"" + key + "\": cannot parse \"" + value + "\" as a number");
        e.num = v;
        break;
      }
      case Kind::Count: {
        require(!value.empty() && value[0] != '-', ErrorKind::ConfigInvalid,
                "key \"" + key + "\": expects a non-negative integer, got \"" + value + "\"");
        std::size_t used = 0;
        unsigned long long v = std::stoull(value, &used);
        require(used == value.size(), ErrorKind::ConfigInvalid,
                "key \"" + key + "\": cannot parse \"" + value + "\" as an integer");
        e.cnt = static_cast<std::size_t>(v);
        break;
      }
      case Kind::Flag: {
        if (value == "true" || value == "1") {
          e.on = true;
        } else if (value == "false" || value == "0") {
          e.on = false;
        } else {
          fail(ErrorKind::ConfigInvalid,
               "key \"" + key + "\": expects true/false, got \"" + value + "\"");
        }
        break;
      }
      case Kind::Text:
        e.str = value;
        break;
    }
  } catch (const std::invalid_argument&) {
    fail(ErrorKind::ConfigInvalid, "key \"" + key + "\": cannot parse \"" + value + "\"");
  } catch (const std::out_of_range&) {
    fail(ErrorKind::ConfigInvalid, "key \"" + key + "\": value \"" + value + "\" out of range");
  }
}

const RunConfig::Entry& RunConfig::entry(const std::string& key, Kind want) const {
  auto found = values_.find(key);
  require(found != values_.end(), ErrorKind::ConfigInvalid, "unknown key \"" + key + "\"");
  require(found->second.kind == want, ErrorKind::ConfigInvalid,
          "key \"" + key + "\" accessed with the wrong type");
  return found->second;
}

double RunConfig::number(const std::string& key) const { return entry(key, Kind::Number).num; }
std::size_t RunConfig::count(const std::string& key) const { return entry(key, Kind::Count).cnt; }
bool RunConfig::flag(const std::string& key) const { return entry(key, Kind::Flag).on; }
const std::string& RunConfig::text(const std::string& key) const {
  return entry(key, Kind::Text).str;
}

RunConfig::Kind RunConfig::kind(const std::string& key) const {
  auto found = values_.find(key);
  require(found != values_.end(), ErrorKind::ConfigInvalid, "unknown key \"" + key + "\"");
  return found->second.kind;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string RunConfig::to_json_text() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [key, e] : values_) {
    switch (e.kind) {
      case Kind::Number:
        doc[key] = e.num;
        break;
      case Kind::Count:
        doc[key] = e.cnt;
        break;
      case Kind::Flag:
        doc[key] = e.on;
        break;
      case Kind::Text:
        doc[key] = e.str;
        break;
    }
  }
  return doc.dump(2) + "\n";
}

std::vector<std::pair<std::string, std::string>> RunConfig::describe_defaults() {
  std::vector<std::pair<std::string, std::string>> out;
  for (const Default& d : kDefaults) out.emplace_back(d.key, render(d));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace meshsmile
