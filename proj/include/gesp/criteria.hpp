#pragma once

// Problem-specific stopping criteria. Each one is a pure function of the
// cumulative objective prefix and the latest observation.

#include <charconv>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "gesp/core.hpp"

namespace gesp {

// Fires when none of the last `window` steps strictly increased the objective.
struct NoProgress {
  std::size_t window = 50;
};

// Fires when observation[state_index] leaves [low, high].
struct HealthyBounds {
  std::size_t state_index = 0;
  double low = 0.0;
  double high = 0.0;
};

// Fires when f[t] <= rate * t.
struct SpeedFloor {
  double rate = 0.0;
};

using ProblemSpecificCriterion = std::variant<NoProgress, HealthyBounds, SpeedFloor>;

namespace detail {

inline double parse_double(std::string_view s) {
  // std::stod is locale dependent; from_chars is not.
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::size_t parse_size(std::string_view s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw std::invalid_argument("not a non-negative integer: '" + std::string(s) + "'");
  }
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

}  // namespace detail

inline std::string criterion_id(const ProblemSpecificCriterion& c) {
  struct {
    std::string operator()(const NoProgress&) const { return "no_progress"; }
    std::string operator()(const HealthyBounds&) const { return "healthy_bounds"; }
    std::string operator()(const SpeedFloor&) const { return "speed_floor"; }
  } visitor;
  return std::visit(visitor, c);
}

inline bool evaluate_criterion(const ProblemSpecificCriterion& criterion,
                               std::span<const double> trace_prefix,
                               std::span<const double> observation) {
  const std::size_t t = trace_prefix.size();
  if (t == 0) return false;

  if (const auto* np = std::get_if<NoProgress>(&criterion)) {
    if (np->window == 0 || t < np->window) return false;
    // f[0] = 0 anchors the first increment.
    for (std::size_t s = t - np->window + 1; s <= t; ++s) {
      const double prev = s >= 2 ? trace_prefix[s - 2] : 0.0;
      if (trace_prefix[s - 1] > prev) return false;
    }
    return true;
  }
  if (const auto* hb = std::get_if<HealthyBounds>(&criterion)) {
    if (hb->state_index >= observation.size()) {
      throw std::out_of_range("HealthyBounds: state index beyond observation");
    }
    const double v = observation[hb->state_index];
    return v < hb->low || v > hb->high;
  }
  const auto& sf = std::get<SpeedFloor>(criterion);
  return trace_prefix[t - 1] <= sf.rate * static_cast<double>(t);
}

// Textual form used by the CLI:
//   noprogress:<window>
//   bounds:<state_index>:<low>:<high>
//   speedfloor:<rate>
inline ProblemSpecificCriterion parse_criterion(std::string_view text) {
  const auto parts = detail::split(text, ':');
  if (parts[0] == "noprogress" && parts.size() == 2) {
    return NoProgress{detail::parse_size(parts[1])};
  }
  if (parts[0] == "bounds" && parts.size() == 4) {
    HealthyBounds hb{detail::parse_size(parts[1]), detail::parse_double(parts[2]),
                     detail::parse_double(parts[3])};
    if (hb.low > hb.high) throw std::invalid_argument("bounds: low > high");
    return hb;
  }
  if (parts[0] == "speedfloor" && parts.size() == 2) {
    return SpeedFloor{detail::parse_double(parts[1])};
  }
  throw std::invalid_argument("unknown criterion: '" + std::string(text) + "'");
}

}  // namespace gesp
