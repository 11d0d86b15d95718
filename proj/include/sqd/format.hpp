#pragma once

#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

namespace sqd {

/// Shortest decimal string that round-trips to the same double.
inline std::string shortest(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) return std::to_string(v);
  return std::string(buf, ptr);
}

/// Parses a real literal, also accepting a rational `p/q` form such as `1/3`.
inline std::optional<double> parse_real(std::string_view text) {
  auto parse_one = [](std::string_view s) -> std::optional<double> {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
  };
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    auto num = parse_one(text.substr(0, slash));
    auto den = parse_one(text.substr(slash + 1));
    if (!num || !den || *den == 0.0) return std::nullopt;
    return *num / *den;
  }
  return parse_one(text);
}

}  // namespace sqd
