#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "motionseg/baselines.hpp"
#include "motionseg/boxes.hpp"
#include "motionseg/cluster.hpp"
#include "motionseg/common.hpp"
#include "motionseg/config_fields.hpp"
#include "motionseg/eval.hpp"
#include "motionseg/graph.hpp"
#include "motionseg/mpn.hpp"
#include "motionseg/preprocess.hpp"
#include "motionseg/scene.hpp"
#include "motionseg/sequence_io.hpp"

namespace motionseg {

struct ClusterConfig {
  ClusterMode mode = ClusterMode::signed_weights;

  template <typename V>
  void visit(V& v) {
    v("mode", mode);
  }
};

/// Sequence-level split fractions. Whatever is left over stays unassigned.
struct SplitConfig {
  double train_pseudo = 0.45;
  double train_det = 0.05;
  double val_pseudo = 0.25;
  double val_det = 0.25;

  template <typename V>
  void visit(V& v) {
    v("train_pseudo", train_pseudo);
    v("train_det", train_det);
    v("val_pseudo", val_pseudo);
    v("val_det", val_det);
  }

  std::array<double, 4> fractions() const { return {train_pseudo, train_det, val_pseudo, val_det}; }

  void validate() const {
    double sum = 0.0;
    for (double f : fractions()) {
      if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("split fractions must be in [0, 1]");
      sum += f;
    }
    if (sum > 1.0 + 1e-9) throw ConfigError("split fractions sum to " + format_g(sum, 6) + ", must be <= 1");
  }
};

/// Sizes and sweeps of the experiment runner.
struct ExperimentConfig {
  int sequences = 40;
  /// Every n-th frame of a training sequence becomes a training graph.
  int train_stride = 4;
  /// Every n-th frame of a held-out sequence is labeled and scored.
  int eval_stride = 2;
  /// Fraction of the training pool used by the main model.
  double train_fraction = 0.9;
  /// Fraction of the training pool used by the feature ablation.
  double ablation_fraction = 0.1;
  std::string scaling_fractions = "0.1,0.5,0.9";
  std::string xf_values = "2,30,50";
  int fixture_sequences = 6;
  int fixture_vehicles = 1;
  int fixture_pedestrians = 8;
  int fixture_cyclists = 2;

  template <typename V>
  void visit(V& v) {
    v("sequences", sequences);
    v("train_stride", train_stride);
    v("eval_stride", eval_stride);
    v("train_fraction", train_fraction);
    v("ablation_fraction", ablation_fraction);
    v("scaling_fractions", scaling_fractions);
    v("xf_values", xf_values);
    v("fixture_sequences", fixture_sequences);
    v("fixture_vehicles", fixture_vehicles);
    v("fixture_pedestrians", fixture_pedestrians);
    v("fixture_cyclists", fixture_cyclists);
  }

  std::vector<double> fraction_list() const {
    std::vector<double> out;
    for (const auto& s : split_list(scaling_fractions)) {
      double f = 0.0;
      field_from_string(s, f);
      if (!(f > 0.0 && f <= 1.0)) throw ConfigError("experiment.scaling_fractions: values must be in (0, 1]");
      out.push_back(f);
    }
    return out;
  }

  std::vector<int> xf_list() const {
    std::vector<int> out;
    for (const auto& s : split_list(xf_values)) {
      int x = 0;
      field_from_string(s, x);
      if (x < 1) throw ConfigError("experiment.xf_values: values must be >= 1");
      out.push_back(x);
    }
    return out;
  }

  void validate() const {
    if (sequences < 1) throw ConfigError("experiment.sequences must be >= 1");
    if (train_stride < 1 || eval_stride < 1) throw ConfigError("experiment strides must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw ConfigError("experiment.train_fraction must be in (0, 1]");
    if (!(ablation_fraction > 0.0 && ablation_fraction <= 1.0)) {
      throw ConfigError("experiment.ablation_fraction must be in (0, 1]");
    }
    if (fixture_sequences < 1) throw ConfigError("experiment.fixture_sequences must be >= 1");
    fraction_list();
    xf_list();
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = s.find(',', start);
      out.push_back(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return out;
  }
};

struct RunSettings {
  std::uint64_t seed = 1;
  int jobs = 1;

  template <typename V>
  void visit(V& v) {
    v("seed", seed);
    v("jobs", jobs);
  }
};

/// Every tunable of the pipeline, addressed as `section.key`.
struct RunConfig {
  RunSettings run;
  SceneConfig scene;
  PreprocessConfig preprocess;
  FeatureConfig graph;
  MpnConfig mpn;
  TrainConfig train;
  ClusterConfig cluster;
  BoxConfig boxes;
  DbscanConfig dbscan;
  EvalConfig eval;
  SplitConfig split;
  ExperimentConfig experiment;

  RunConfig() {
    // widths sized for a single CPU core; the full-size network is one config line away
    mpn.hidden_node = 16;
    mpn.hidden_edge = 32;
    preprocess.noise.sigma = 0.3;
    preprocess.noise.random_fraction = 0.1;
  }

  template <typename F>
  void sections(F&& f) {
    f("run", run);
    f("scene", scene);
    f("preprocess", preprocess);
    f("graph", graph);
    f("mpn", mpn);
    f("train", train);
    f("cluster", cluster);
    f("boxes", boxes);
    f("dbscan", dbscan);
    f("eval", eval);
    f("split", split);
    f("experiment", experiment);
  }

  void validate() const {
    if (run.jobs < 1) throw ConfigError("run.jobs must be >= 1");
    scene.validate();
    graph.validate();
    mpn.validate();
    train.validate();
    boxes.validate();
    dbscan.validate();
    eval.validate();
    split.validate();
    experiment.validate();
  }
};

namespace detail {

class FieldSetter {
 public:
  FieldSetter(std::string_view prefix, std::string_view key, std::string_view value)
      : prefix_(prefix), key_(key), value_(value) {}

  template <typename T>
  void operator()(std::string_view name, T& field) {
    if (found_ || key_.size() != prefix_.size() + 1 + name.size()) return;
    if (key_.substr(0, prefix_.size()) != prefix_ || key_[prefix_.size()] != '.' || key_.substr(prefix_.size() + 1) != name) {
      return;
    }
    field_from_string(value_, field);
    found_ = true;
  }
  bool found() const { return found_; }

 private:
  std::string_view prefix_, key_, value_;
  bool found_ = false;
};

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

}  // namespace detail

/// Ordered `section.key -> value` view of a configuration.
inline std::vector<std::pair<std::string, std::string>> config_fields(RunConfig cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  cfg.sections([&](std::string_view section, auto& s) {
    const std::string prefix = std::string(section) + ".";
    auto collect = [&](std::string_view key, auto& value) {
      out.emplace_back(prefix + std::string(key), field_to_string(value));
    };
    s.visit(collect);
  });
  return out;
}

/// Assigns one `section.key`. Throws ConfigError for unknown keys or bad values.
inline void set_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  bool found = false;
  cfg.sections([&](std::string_view section, auto& s) {
    if (found) return;
    detail::FieldSetter setter(section, key, value);
    try {
      s.visit(setter);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(key) + ": " + e.what());
    }
    found = setter.found();
  });
  if (!found) throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

struct ConfigEntry {
  std::string key;
  std::string value;
  int line = 0;
};

/// Parses `section.key = value` lines; `#` starts a comment.
inline std::vector<ConfigEntry> parse_config_text(std::string_view text, const std::string& context) {
  std::vector<ConfigEntry> out;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    pos = end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string t = detail::trim(line);
    if (t.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(context + ":" + std::to_string(line_no) + ": expected 'section.key = value'");
    }
    ConfigEntry e{detail::trim(std::string_view(t).substr(0, eq)), detail::trim(std::string_view(t).substr(eq + 1)), line_no};
    if (e.key.find('.') == std::string::npos) {
      throw ConfigError(context + ":" + std::to_string(line_no) + ": key '" + e.key + "' must be 'section.key'");
    }
    out.push_back(std::move(e));
    if (end == text.size()) break;
  }
  return out;
}

inline void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& context) {
  for (const auto& e : parse_config_text(text, context)) {
    try {
      set_config_value(cfg, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(context + ":" + std::to_string(e.line) + ": " + err.what());
    }
  }
}

/// `scene.noise_fraction` -> `MC_SCENE_NOISE_FRACTION`.
inline std::string env_name(std::string_view key) {
  std::string out = "MC_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

using EnvLookup = std::function<const char*(const char*)>;

inline void apply_env_overrides(RunConfig& cfg, const EnvLookup& lookup = [](const char* n) { return std::getenv(n); }) {
  for (const auto& [key, value] : config_fields(cfg)) {
    const std::string name = env_name(key);
    if (const char* v = lookup(name.c_str())) {
      try {
        set_config_value(cfg, key, v);
      } catch (const ConfigError& err) {
        throw ConfigError("environment " + name + ": " + err.what());
      }
    }
  }
}

/// Applies `key=value` overrides.
inline void apply_overrides(RunConfig& cfg, const std::vector<std::string>& sets) {
  for (const auto& s : sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set '" + s + "': expected key=value");
    set_config_value(cfg, detail::trim(std::string_view(s).substr(0, eq)), detail::trim(std::string_view(s).substr(eq + 1)));
  }
}

/// Defaults, then the file, then MC_* variables, then explicit overrides.
inline RunConfig load_run_config(const std::filesystem::path& file, const std::vector<std::string>& sets,
                                 const EnvLookup& lookup = [](const char* n) { return std::getenv(n); }) {
  RunConfig cfg;
  if (!file.empty()) {
    std::string text;
    try {
      text = io::read_file(file);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    apply_config_text(cfg, text, file.string());
  }
  apply_env_overrides(cfg, lookup);
  apply_overrides(cfg, sets);
  cfg.validate();
  return cfg;
}

inline std::string dump_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& [key, value] : config_fields(cfg)) {
    const std::string s = key.substr(0, key.find('.'));
    if (s != section) {
      if (!section.empty()) out += '\n';
      section = s;
    }
    out += key + " = " + value + "\n";
  }
  return out;
}

}  // namespace motionseg
