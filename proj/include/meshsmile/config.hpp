#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace meshsmile {

// Flat key/value run configuration. Keys are namespaced (model.*, train.*,
// data.*, synth.*) and fixed at compile time; unknown keys are rejected so a
// typo in a config file or a --set override fails loudly instead of silently
// using a default. Precedence is: command-line overrides > config file >
// built-in defaults (callers apply them in that order).
class RunConfig {
 public:
  enum class Kind { Number, Count, Flag, Text };

  RunConfig();

  // Loads a flat JSON object ({"model.d": 32, ...}) over the current values.
  void load_file(const std::string& path);

  // Applies one textual override, e.g. set("model.d", "32").
  void set(const std::string& key, const std::string& value);

  double number(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;
  const std::string& text(const std::string& key) const;

  Kind kind(const std::string& key) const;
  bool has(const std::string& key) const;

  // Current values serialized as a flat JSON object (checkpoint sidecar).
  std::string to_json_text() const;

  // All keys in sorted order with their default rendered as text (--help).
  static std::vector<std::pair<std::string, std::string>> describe_defaults();

 private:
  struct Entry {
    Kind kind;
    double num = 0.0;
    std::size_t cnt = 0;
    bool on = false;
    std::string str;
  };

  const Entry& entry(const std::string& key, Kind want) const;

  std::map<std::string, Entry> values_;
};

}  // namespace meshsmile
