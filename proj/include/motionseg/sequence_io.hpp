#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "motionseg/common.hpp"
#include "motionseg/config_fields.hpp"
#include "motionseg/scene.hpp"

namespace motionseg {

namespace io {

namespace fs = std::filesystem;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f != nullptr) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

inline File open_write(const fs::path& path) {
  File f(std::fopen(path.string().c_str(), "wb"));
  if (!f) throw Error("cannot open '" + path.string() + "' for writing");
  return f;
}

inline void put(std::FILE* f, double v) { std::fprintf(f, "%.9g", v); }

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Line-oriented whitespace tokenizer producing ParseErrors with context.
class LineReader {
 public:
  LineReader(std::string text, std::string context) : text_(std::move(text)), context_(std::move(context)) {}

  bool at_end() {
    skip_blank_lines();
    return pos_ >= text_.size();
  }

  /// Next non-empty line split into tokens.
  std::vector<std::string_view> next(std::string_view field) {
    skip_blank_lines();
    if (pos_ >= text_.size()) fail(field, "unexpected end of file");
    std::size_t end = text_.find('\n', pos_);
    if (end == std::string::npos) end = text_.size();
    std::string_view line(text_.data() + pos_, end - pos_);
    pos_ = end + 1;
    ++line_no_;
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      std::size_t j = i;
      while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
      if (j > i) tokens.push_back(line.substr(i, j - i));
      i = j;
    }
    return tokens;
  }

  std::vector<std::string_view> expect(std::string_view keyword, std::size_t n_values) {
    auto t = next(keyword);
    if (t.empty() || t[0] != keyword) fail(keyword, "expected section '" + std::string(keyword) + "'");
    if (t.size() != n_values + 1) fail(keyword, "expected " + std::to_string(n_values) + " values");
    return t;
  }

  [[noreturn]] void fail(std::string_view field, const std::string& msg) const {
    throw ParseError(context_ + ": field " + std::string(field) + " (line " + std::to_string(line_no_) + "): " + msg);
  }

  double number(std::string_view tok, std::string_view field) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) fail(field, "bad number '" + std::string(tok) + "'");
    return v;
  }

  long long integer(std::string_view tok, std::string_view field) const {
    long long v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) fail(field, "bad integer '" + std::string(tok) + "'");
    return v;
  }

  std::uint64_t unsigned_integer(std::string_view tok, std::string_view field) const {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || p != tok.data() + tok.size()) fail(field, "bad integer '" + std::string(tok) + "'");
    return v;
  }

  std::size_t count(std::string_view tok, std::string_view field) const {
    const long long v = integer(tok, field);
    if (v < 0) fail(field, "negative count");
    return static_cast<std::size_t>(v);
  }

 private:
  void skip_blank_lines() {
    while (pos_ < text_.size()) {
      std::size_t end = text_.find('\n', pos_);
      if (end == std::string::npos) end = text_.size();
      bool blank = true;
      for (std::size_t i = pos_; i < end; ++i) {
        if (text_[i] != ' ' && text_[i] != '\t' && text_[i] != '\r') {
          blank = false;
          break;
        }
      }
      if (!blank) return;
      pos_ = end + 1;
      ++line_no_;
    }
  }

  std::string text_;
  std::string context_;
  std::size_t pos_ = 0;
  int line_no_ = 0;
};

inline fs::path frame_path(const fs::path& dir, std::size_t idx) { return dir / ("frame_" + std::to_string(idx)); }

inline void write_manifest(const fs::path& dir, std::string_view kind, std::uint64_t seed, std::size_t frames,
                           const Region& region, const std::vector<std::pair<std::string, std::string>>& echo) {
  auto f = open_write(dir / "manifest");
  std::fprintf(f.get(), "%.*s 1\n", static_cast<int>(kind.size()), kind.data());
  std::fprintf(f.get(), "seed %llu\n", static_cast<unsigned long long>(seed));
  std::fprintf(f.get(), "frames %zu\n", frames);
  std::fprintf(f.get(), "region %.9g %.9g %.9g %.9g\n", region.x_min, region.x_max, region.y_min, region.y_max);
  for (const auto& [k, v] : echo) std::fprintf(f.get(), "config %s=%s\n", k.c_str(), v.c_str());
}

struct Manifest {
  std::string kind;
  std::uint64_t seed = 0;
  std::size_t frames = 0;
  Region region;
  std::vector<std::pair<std::string, std::string>> echo;
};

inline Manifest read_manifest(const fs::path& dir) {
  LineReader r(read_file(dir / "manifest"), (dir / "manifest").string());
  Manifest m;
  auto head = r.next("header");
  if (head.size() != 2) r.fail("header", "expected '<kind> <version>'");
  m.kind = std::string(head[0]);
  m.seed = r.unsigned_integer(r.expect("seed", 1)[1], "seed");
  m.frames = r.count(r.expect("frames", 1)[1], "frames");
  auto reg = r.expect("region", 4);
  m.region = {r.number(reg[1], "region"), r.number(reg[2], "region"), r.number(reg[3], "region"),
              r.number(reg[4], "region")};
  while (!r.at_end()) {
    auto t = r.next("config");
    if (t.size() != 2 || t[0] != "config") r.fail("config", "expected 'config key=value'");
    const auto eq = t[1].find('=');
    if (eq == std::string_view::npos) r.fail("config", "missing '='");
    m.echo.emplace_back(std::string(t[1].substr(0, eq)), std::string(t[1].substr(eq + 1)));
  }
  return m;
}

inline void write_frame_body(std::FILE* f, const Frame& fr) {
  std::fprintf(f, "TIME %.9g\n", fr.timestamp);
  std::fprintf(f, "POSE %.9g %.9g %.9g %.9g\n", fr.pose.x, fr.pose.y, fr.pose.z, fr.pose.yaw);
  std::fprintf(f, "POINTS %zu\n", fr.points.size());
  for (std::size_t i = 0; i < fr.points.size(); ++i) {
    const auto& p = fr.points[i];
    std::fprintf(f, "%.9g %.9g %.9g %d\n", p.x, p.y, p.z, fr.gt_ids[i]);
  }
  std::fprintf(f, "BOXES %zu\n", fr.boxes.size());
  for (const auto& b : fr.boxes) {
    const auto name = enum_name(b.cls);
    std::fprintf(f, "%d %.*s %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n", b.instance_id,
                 static_cast<int>(name.size()), name.data(), b.box.center.x, b.box.center.y, b.box.center.z,
                 b.box.dims.x, b.box.dims.y, b.box.dims.z, b.box.yaw, b.vx, b.vy);
  }
}

/// Parses the TIME/POSE/POINTS/BOXES sections; leaves the reader after BOXES.
inline Frame read_frame_body(LineReader& r) {
  Frame fr;
  fr.timestamp = r.number(r.expect("TIME", 1)[1], "TIME");
  auto pose = r.expect("POSE", 4);
  fr.pose = {r.number(pose[1], "POSE"), r.number(pose[2], "POSE"), r.number(pose[3], "POSE"), r.number(pose[4], "POSE")};
  const std::size_t n = r.count(r.expect("POINTS", 1)[1], "POINTS");
  fr.points.reserve(n);
  fr.gt_ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto t = r.next("POINTS");
    if (t.size() != 4) {
      r.fail("POINTS", "point " + std::to_string(i) + " of " + std::to_string(n) +
                           ": expected 'x y z gt_id' (point and id counts disagree)");
    }
    fr.points.push_back({r.number(t[0], "POINTS"), r.number(t[1], "POINTS"), r.number(t[2], "POINTS")});
    fr.gt_ids.push_back(static_cast<int>(r.integer(t[3], "POINTS")));
  }
  const std::size_t m = r.count(r.expect("BOXES", 1)[1], "BOXES");
  for (std::size_t i = 0; i < m; ++i) {
    auto t = r.next("BOXES");
    if (t.size() != 11) r.fail("BOXES", "box " + std::to_string(i) + ": expected 11 values");
    GtBox b;
    b.instance_id = static_cast<int>(r.integer(t[0], "BOXES"));
    try {
      b.cls = parse_enum<ObjectClass>(t[1]);
    } catch (const ConfigError& e) {
      r.fail("BOXES", e.what());
    }
    b.box.center = {r.number(t[2], "BOXES"), r.number(t[3], "BOXES"), r.number(t[4], "BOXES")};
    b.box.dims = {r.number(t[5], "BOXES"), r.number(t[6], "BOXES"), r.number(t[7], "BOXES")};
    b.box.yaw = r.number(t[8], "BOXES");
    b.vx = r.number(t[9], "BOXES");
    b.vy = r.number(t[10], "BOXES");
    fr.boxes.push_back(b);
  }
  return fr;
}

inline void validate_frame(const Frame& fr, const std::string& context) {
  if (fr.points.size() != fr.gt_ids.size()) throw ParseError(context + ": point/id count mismatch");
  for (int id : fr.gt_ids) {
    if (id >= 0 && fr.find_box(id) == nullptr) {
      throw ParseError(context + ": field POINTS: gt id " + std::to_string(id) + " has no box");
    }
  }
}

}  // namespace io

inline void write_sequence(const Sequence& seq, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::write_manifest(dir, "motionseg-sequence", seq.seed, seq.frames.size(), seq.region, seq.config_echo);
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    auto f = io::open_write(io::frame_path(dir, t));
    io::write_frame_body(f.get(), seq.frames[t]);
  }
}

inline Sequence read_sequence(const std::filesystem::path& dir) {
  const auto m = io::read_manifest(dir);
  if (m.kind != "motionseg-sequence") throw ParseError(dir.string() + ": not a sequence directory (kind " + m.kind + ")");
  Sequence seq;
  seq.seed = m.seed;
  seq.region = m.region;
  seq.config_echo = m.echo;
  seq.frames.reserve(m.frames);
  for (std::size_t t = 0; t < m.frames; ++t) {
    const auto path = io::frame_path(dir, t);
    const std::string context = "frame " + std::to_string(t) + " (" + path.string() + ")";
    io::LineReader r(io::read_file(path), context);
    Frame fr = io::read_frame_body(r);
    if (!r.at_end()) r.fail("BOXES", "trailing content after BOXES section");
    io::validate_frame(fr, context);
    seq.frames.push_back(std::move(fr));
  }
  return seq;
}

}  // namespace motionseg
