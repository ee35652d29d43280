#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "rac/data.hpp"

namespace rac {

enum class TargetMode { kStart, kPeriodicity };

// Training target from annotations. Start mode places a truncated Gaussian
// bump at each repetition start (overlaps merged by pointwise maximum);
// periodicity mode is the binary inside-a-repetition indicator.
inline std::vector<double> make_target(const AnnotationTrack& track, TargetMode mode,
                                       double sigma = 1.0) {
  track.validate();
  std::vector<double> target(track.total_frames, 0.0);
  if (mode == TargetMode::kPeriodicity) {
    for (const Interval& iv : track.intervals)
      for (std::size_t t = iv.start; t <= iv.end; ++t) target[t] = 1.0;
    return target;
  }
  const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  for (const Interval& iv : track.intervals) {
    const std::size_t lo = iv.start >= radius ? iv.start - radius : 0;
    const std::size_t hi = std::min(track.total_frames - 1, iv.start + radius);
    for (std::size_t t = lo; t <= hi; ++t) {
      const double d = static_cast<double>(t) - static_cast<double>(iv.start);
      const double g = sigma > 0.0 ? std::exp(-d * d / (2.0 * sigma * sigma)) : (d == 0.0 ? 1.0 : 0.0);
      target[t] = std::max(target[t], g);
    }
  }
  for (double& v : target) v = std::clamp(v, 0.0, 1.0);
  return target;
}

// A local maximum with its topographic prominence. A plateau of equal values
// bounded by strictly smaller neighbors counts as one peak at its midpoint
// (left of center on even runs); the first and last frame are never peaks.
struct Peak {
  std::size_t index = 0;
  double height = 0.0;
  double prominence = 0.0;
  std::size_t left_base = 0;
  std::size_t right_base = 0;

  friend bool operator==(const Peak&, const Peak&) = default;
};

namespace detail {

// Walk outward from the peak until a strictly higher value or the series end;
// the base is the lowest value on the excursion, nearest occurrence wins ties.
inline void peak_excursion(const std::vector<double>& series, std::size_t peak, int direction,
                           std::size_t& base_index, double& base_value) {
  const double height = series[peak];
  base_index = peak;
  base_value = height;
  std::int64_t i = static_cast<std::int64_t>(peak) + direction;
  while (i >= 0 && i < static_cast<std::int64_t>(series.size())) {
    const double v = series[static_cast<std::size_t>(i)];
    if (v > height) break;
    if (v < base_value) {
      base_value = v;
      base_index = static_cast<std::size_t>(i);
    }
    i += direction;
  }
}

}  // namespace detail

inline std::vector<Peak> find_peaks(const std::vector<double>& series) {
  std::vector<Peak> peaks;
  const std::size_t n = series.size();
  if (n < 3) return peaks;

  std::size_t i = 1;
  while (i + 1 < n) {
    if (series[i] <= series[i - 1]) {
      ++i;
      continue;
    }
    // climb found; scan the (possibly length-1) plateau
    std::size_t j = i;
    while (j + 1 < n && series[j + 1] == series[i]) ++j;
    if (j + 1 < n && series[j + 1] < series[i]) {
      Peak p;
      p.index = i + (j - i) / 2;
      p.height = series[i];
      double left_value = 0.0, right_value = 0.0;
      detail::peak_excursion(series, p.index, -1, p.left_base, left_value);
      detail::peak_excursion(series, p.index, +1, p.right_base, right_value);
      p.prominence = p.height - std::max(left_value, right_value);
      peaks.push_back(p);
    }
    i = j + 1;
  }
  return peaks;
}

inline std::pair<std::size_t, std::vector<Peak>> count_repetitions(const std::vector<double>& series,
                                                                   double threshold = 0.2) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw std::invalid_argument("count_repetitions: threshold must be in [0, 1]");
  std::vector<Peak> kept;
  for (const Peak& p : find_peaks(series))
    if (p.prominence > threshold) kept.push_back(p);
  return {kept.size(), std::move(kept)};
}

}  // namespace rac
