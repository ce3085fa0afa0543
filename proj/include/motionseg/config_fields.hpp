#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>

#include "motionseg/common.hpp"

namespace motionseg {

/// Specialize with `static constexpr std::array<std::pair<E, std::string_view>, N> values`
/// to make an enum usable as a configuration field.
template <typename E>
struct EnumNames;

template <typename E>
concept NamedEnum = std::is_enum_v<E> && requires { EnumNames<E>::values; };

template <NamedEnum E>
std::string_view enum_name(E v) {
  for (const auto& [value, name] : EnumNames<E>::values) {
    if (value == v) return name;
  }
  return "?";
}

template <NamedEnum E>
E parse_enum(std::string_view s) {
  for (const auto& [value, name] : EnumNames<E>::values) {
    if (name == s) return value;
  }
  std::string allowed;
  for (const auto& [value, name] : EnumNames<E>::values) {
    if (!allowed.empty()) allowed += '|';
    allowed += name;
  }
  throw ConfigError("invalid value '" + std::string(s) + "', expected one of " + allowed);
}

/// Shortest text that parses back to the same double.
inline std::string field_to_string(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : format_g(v, 17);
}
inline std::string field_to_string(int v) { return std::to_string(v); }
inline std::string field_to_string(std::uint64_t v) { return std::to_string(v); }
inline std::string field_to_string(bool v) { return v ? "true" : "false"; }
inline std::string field_to_string(const std::string& v) { return v; }
template <NamedEnum E>
std::string field_to_string(E v) {
  return std::string(enum_name(v));
}

namespace detail {
template <typename T>
T parse_number(std::string_view s) {
  T value{};
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) throw ConfigError("cannot parse number '" + std::string(s) + "'");
  return value;
}
}  // namespace detail

inline void field_from_string(std::string_view s, double& v) {
  // from_chars for double is available in libstdc++ 11.
  v = detail::parse_number<double>(s);
}
inline void field_from_string(std::string_view s, int& v) { v = detail::parse_number<int>(s); }
inline void field_from_string(std::string_view s, std::uint64_t& v) { v = detail::parse_number<std::uint64_t>(s); }
inline void field_from_string(std::string_view s, bool& v) {
  if (s == "true" || s == "1" || s == "on") {
    v = true;
  } else if (s == "false" || s == "0" || s == "off") {
    v = false;
  } else {
    throw ConfigError("cannot parse boolean '" + std::string(s) + "'");
  }
}
inline void field_from_string(std::string_view s, std::string& v) { v = std::string(s); }
template <NamedEnum E>
void field_from_string(std::string_view s, E& v) {
  v = parse_enum<E>(s);
}

/// Collects `prefix.key -> value` strings from a struct exposing `visit(V&)`.
class FieldWriter {
 public:
  FieldWriter(std::map<std::string, std::string>& out, std::string prefix)
      : out_(out), prefix_(std::move(prefix)) {}

  template <typename T>
  void operator()(std::string_view key, T& value) {
    out_[prefix_ + std::string(key)] = field_to_string(value);
  }

 private:
  std::map<std::string, std::string>& out_;
  std::string prefix_;
};

/// Assigns fields whose `prefix.key` appears in the map; marks consumed keys.
class FieldReader {
 public:
  FieldReader(const std::map<std::string, std::string>& in, std::string prefix, std::map<std::string, bool>* used = nullptr)
      : in_(in), prefix_(std::move(prefix)), used_(used) {}

  template <typename T>
  void operator()(std::string_view key, T& value) {
    const std::string full = prefix_ + std::string(key);
    const auto it = in_.find(full);
    if (it == in_.end()) return;
    try {
      field_from_string(it->second, value);
    } catch (const ConfigError& e) {
      throw ConfigError(full + ": " + e.what());
    }
    if (used_ != nullptr) (*used_)[full] = true;
  }

 private:
  const std::map<std::string, std::string>& in_;
  std::string prefix_;
  std::map<std::string, bool>* used_;
};

template <typename Config>
std::map<std::string, std::string> to_fields(Config cfg, const std::string& prefix = "") {
  std::map<std::string, std::string> out;
  FieldWriter w(out, prefix);
  cfg.visit(w);
  return out;
}

}  // namespace motionseg
