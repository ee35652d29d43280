// Test-side oracles: independent, literal implementations used to cross-check
// the production code. These stay deliberately brute-force.
#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "rac/core.hpp"
#include "rac/counting.hpp"
#include "rac/data.hpp"

namespace oracle {

// Literal definition: a peak is the midpoint of a run of equal values bounded
// on both sides by strictly smaller neighbors; each side's base is the lowest
// value reached before a strictly higher one (nearest index on ties).
inline std::vector<rac::Peak> peaks(const std::vector<double>& s) {
  std::vector<rac::Peak> out;
  const std::size_t n = s.size();
  for (std::size_t p = 0; p + 1 < n; ++p) {
    if (p == 0) continue;
    std::size_t run_lo = p, run_hi = p;
    while (run_lo > 0 && s[run_lo - 1] == s[p]) --run_lo;
    while (run_hi + 1 < n && s[run_hi + 1] == s[p]) ++run_hi;
    if (run_lo == 0 || run_hi + 1 == n) continue;
    if (!(s[run_lo - 1] < s[p] && s[run_hi + 1] < s[p])) continue;
    if (p != run_lo + (run_hi - run_lo) / 2) continue;

    rac::Peak peak;
    peak.index = p;
    peak.height = s[p];
    double left_min = s[p], right_min = s[p];
    peak.left_base = p;
    peak.right_base = p;
    for (std::int64_t i = static_cast<std::int64_t>(p) - 1; i >= 0; --i) {
      if (s[static_cast<std::size_t>(i)] > s[p]) break;
      if (s[static_cast<std::size_t>(i)] < left_min) {
        left_min = s[static_cast<std::size_t>(i)];
        peak.left_base = static_cast<std::size_t>(i);
      }
    }
    for (std::size_t i = p + 1; i < n; ++i) {
      if (s[i] > s[p]) break;
      if (s[i] < right_min) {
        right_min = s[i];
        peak.right_base = i;
      }
    }
    peak.prominence = peak.height - std::max(left_min, right_min);
    out.push_back(peak);
  }
  return out;
}

inline double round_half_away(double x) {
  return x >= 0.0 ? std::floor(x + 0.5) : std::ceil(x - 0.5);
}

// Segment rasterization: max(|drow|, |dcol|) + 1 equally spaced samples.
inline std::set<std::pair<std::size_t, std::size_t>> raster_points(std::size_t r0, std::size_t c0,
                                                                   std::size_t r1, std::size_t c1) {
  std::set<std::pair<std::size_t, std::size_t>> points;
  const double drow = static_cast<double>(r1) - static_cast<double>(r0);
  const double dcol = static_cast<double>(c1) - static_cast<double>(c0);
  const auto count = static_cast<std::size_t>(std::max(std::abs(drow), std::abs(dcol))) + 1;
  for (std::size_t k = 0; k < count; ++k) {
    const double t = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    points.emplace(static_cast<std::size_t>(round_half_away(static_cast<double>(r0) + t * drow)),
                   static_cast<std::size_t>(round_half_away(static_cast<double>(c0) + t * dcol)));
  }
  return points;
}

inline double relative_error(double analytic, double numeric) {
  const double scale = std::abs(analytic) + std::abs(numeric);
  if (scale <= 1e-8) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

// Central finite difference of f w.r.t. the value behind `slot`.
template <typename F>
double central_difference(double* slot, const F& f, double step = 1e-4) {
  const double original = *slot;
  *slot = original + step;
  const double plus = f();
  *slot = original - step;
  const double minus = f();
  *slot = original;
  return (plus - minus) / (2.0 * step);
}

inline std::vector<double> random_series(rac::Rng& rng, std::size_t length) {
  std::vector<double> s(length);
  for (double& v : s) v = rng.uniform();
  // sprinkle exact repeats so plateau handling gets exercised
  for (std::size_t i = 1; i < length; ++i)
    if (rng.uniform() < 0.15) s[i] = s[i - 1];
  return s;
}

inline rac::AnnotationTrack random_track(rac::Rng& rng, std::size_t max_frames = 64,
                                         std::size_t max_reps = 6) {
  rac::AnnotationTrack track;
  track.total_frames = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(max_frames)));
  std::size_t cursor = 0;
  for (std::size_t r = 0; r < max_reps; ++r) {
    const std::size_t start = cursor + static_cast<std::size_t>(rng.uniform_int(0, 3));
    const std::size_t length = static_cast<std::size_t>(rng.uniform_int(1, 6));
    const std::size_t end = start + length - 1;
    if (end >= track.total_frames) break;
    track.intervals.push_back({start, end});
    cursor = end + 1;
  }
  track.validate();
  return track;
}

}  // namespace oracle
