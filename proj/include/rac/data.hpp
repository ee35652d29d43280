#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rac/core.hpp"

namespace rac {

// T x D per-frame feature matrix, float32 to match the on-disk payload.
struct EmbeddingSequence {
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // row-major, frame-major

  EmbeddingSequence() = default;
  EmbeddingSequence(std::size_t t, std::size_t d)
      : frames(t), dim(d), values(t * d, 0.0f) {}

  float at(std::size_t t, std::size_t d) const { return values[t * dim + d]; }
  float& at(std::size_t t, std::size_t d) { return values[t * dim + d]; }

  bool all_finite() const {
    for (float v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline Matrix to_matrix(const EmbeddingSequence& seq) {
  Matrix m(seq.frames, seq.dim);
  for (std::size_t t = 0; t < seq.frames; ++t)
    for (std::size_t d = 0; d < seq.dim; ++d) m(t, d) = seq.at(t, d);
  return m;
}

// Inclusive frame interval, 0-indexed.
struct Interval {
  std::size_t start = 0;
  std::size_t end = 0;

  friend bool operator==(const Interval&, const Interval&) = default;
};

// Ordered, non-overlapping repetition intervals over a fixed frame count.
// The ground-truth count is the number of intervals.
struct AnnotationTrack {
  std::size_t total_frames = 0;
  std::vector<Interval> intervals;

  std::size_t count() const { return intervals.size(); }

  void validate() const {
    for (std::size_t i = 0; i < intervals.size(); ++i) {
      const Interval& iv = intervals[i];
      const std::string where = "interval " + std::to_string(i) + " [" +
                                std::to_string(iv.start) + "," + std::to_string(iv.end) + "]";
      if (iv.end < iv.start)
        throw std::invalid_argument("annotation " + where + ": end before start");
      if (iv.end >= total_frames)
        throw std::invalid_argument("annotation " + where + ": end exceeds total_frames " +
                                    std::to_string(total_frames));
      if (i > 0 && iv.start <= intervals[i - 1].end)
        throw std::invalid_argument("annotation " + where + ": overlaps or is unsorted against interval " +
                                    std::to_string(i - 1) + " [" + std::to_string(intervals[i - 1].start) +
                                    "," + std::to_string(intervals[i - 1].end) + "]");
    }
  }

  friend bool operator==(const AnnotationTrack&, const AnnotationTrack&) = default;
};

// Knobs for the synthetic generator that stands in for encoder output.
struct SyntheticSpec {
  std::uint64_t rng_seed = 0;
  std::size_t t_min = 64, t_max = 256;
  std::size_t dim = 16;
  std::size_t reps_min = 2, reps_max = 12;
  std::size_t duration_min = 8, duration_max = 24;
  std::size_t gap_min = 0, gap_max = 12;
  double noise_sigma = 0.05;
  std::size_t motif_dim = 8;

  void validate() const {
    if (t_min < 1 || t_min > t_max) throw std::invalid_argument("synthetic spec: bad T range");
    if (dim < 1) throw std::invalid_argument("synthetic spec: dim must be >= 1");
    if (reps_min > reps_max) throw std::invalid_argument("synthetic spec: bad reps range");
    if (duration_min < 1 || duration_min > duration_max)
      throw std::invalid_argument("synthetic spec: bad duration range");
    if (gap_min > gap_max) throw std::invalid_argument("synthetic spec: bad gap range");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma))
      throw std::invalid_argument("synthetic spec: noise_sigma must be finite and >= 0");
    if (motif_dim < 1 || motif_dim > dim)
      throw std::invalid_argument("synthetic spec: motif_dim must be in [1, dim]");
    const std::size_t span = minimum_span(reps_max);
    if (span > t_max)
      throw std::invalid_argument("synthetic spec infeasible: " + std::to_string(reps_max) +
                                  " repetitions of at least " + std::to_string(duration_min) +
                                  " frames plus gaps need " + std::to_string(span) +
                                  " frames, but max T is " + std::to_string(t_max));
  }

  std::size_t minimum_span(std::size_t reps) const {
    if (reps == 0) return 0;
    return reps * duration_min + (reps - 1) * gap_min;
  }
};

// One smooth curve per sequence, shared by all of its repetitions. Each
// component is a 3-term random-phase sinusoid mix, offset so the curve starts
// at zero: repetition starts then carry the same signature in every sequence,
// while the rest of the curve stays sequence-specific.
namespace detail {

struct MotifCurve {
  double frequencies[3];
  std::vector<double> amplitude;  // motif_dim x 3
  std::vector<double> phase;      // motif_dim x 3

  double eval(std::size_t d, double u) const {
    double v = 0.0;
    for (int k = 0; k < 3; ++k) {
      const double a = amplitude[d * 3 + k];
      const double p = phase[d * 3 + k];
      v += a * (std::sin(2.0 * Rng::pi() * frequencies[k] * u + p) - std::sin(p));
    }
    return v;
  }
};

}  // namespace detail

// Deterministic for a fixed seed. Produces lead-in idle frames, repetitions
// with per-repetition durations, idle gaps between repetitions, and trailing
// idle frames; annotations delimit the embedded motifs exactly.
inline std::pair<EmbeddingSequence, AnnotationTrack> generate_sequence(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.rng_seed);

  const auto reps = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(spec.reps_min), static_cast<std::int64_t>(spec.reps_max)));
  const std::size_t span_min = spec.minimum_span(reps);
  const std::size_t t_lo = std::max(spec.t_min, span_min);
  const auto total = static_cast<std::size_t>(
      rng.uniform_int(static_cast<std::int64_t>(t_lo), static_cast<std::int64_t>(std::max(t_lo, spec.t_max))));

  // Distribute the slack above the per-item minimums in a shuffled order so
  // no single duration or gap systematically absorbs it.
  std::vector<std::size_t> durations(reps, spec.duration_min);
  std::vector<std::size_t> gaps(reps > 0 ? reps - 1 : 0, spec.gap_min);
  std::size_t extra = total - std::min(total, span_min);
  {
    std::vector<std::size_t> order(durations.size() + gaps.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t item : order) {
      const std::size_t cap =
          item < durations.size() ? spec.duration_max - spec.duration_min : spec.gap_max - spec.gap_min;
      const auto bonus = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(std::min(cap, extra))));
      if (item < durations.size())
        durations[item] += bonus;
      else
        gaps[item - durations.size()] += bonus;
      extra -= bonus;
    }
  }
  // A start at frame 0 can never become a detectable peak, so keep at least
  // one lead-in frame whenever the budget allows it.
  const std::size_t lead =
      extra >= 1 ? static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(extra))) : 0;

  AnnotationTrack track;
  track.total_frames = total;
  {
    std::size_t cursor = lead;
    for (std::size_t r = 0; r < reps; ++r) {
      track.intervals.push_back({cursor, cursor + durations[r] - 1});
      cursor += durations[r];
      if (r + 1 < reps) cursor += gaps[r];
    }
  }
  track.validate();

  detail::MotifCurve motif;
  for (double& f : motif.frequencies) f = rng.uniform(0.5, 2.5);
  motif.amplitude.resize(spec.motif_dim * 3);
  motif.phase.resize(spec.motif_dim * 3);
  for (std::size_t i = 0; i < spec.motif_dim * 3; ++i) {
    const double magnitude = rng.uniform(0.4, 1.0);
    const double sign = rng.uniform_int(0, 1) == 0 ? -1.0 : 1.0;
    motif.amplitude[i] = sign * magnitude;
    motif.phase[i] = rng.uniform(0.0, 2.0 * Rng::pi());
  }

  // Idle signature: a constant vector kept away from zero so idle frames never
  // mimic the zero-anchored motif start.
  std::vector<double> idle(spec.dim);
  for (double& v : idle) {
    const double magnitude = rng.uniform(0.35, 1.0);
    v = (rng.uniform_int(0, 1) == 0 ? -1.0 : 1.0) * magnitude;
  }

  // Per-frame warp position: -1 marks idle frames.
  std::vector<double> warp(total, -1.0);
  for (const Interval& iv : track.intervals) {
    const std::size_t len = iv.end - iv.start + 1;
    for (std::size_t j = 0; j < len; ++j)
      warp[iv.start + j] = len == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(len - 1);
  }

  EmbeddingSequence seq(total, spec.dim);
  for (std::size_t t = 0; t < total; ++t) {
    for (std::size_t d = 0; d < spec.dim; ++d) {
      double v;
      if (warp[t] >= 0.0)
        v = d < spec.motif_dim ? motif.eval(d, warp[t]) : 0.0;
      else
        v = idle[d];
      if (spec.noise_sigma > 0.0) v += spec.noise_sigma * rng.normal();
      seq.at(t, d) = static_cast<float>(v);
    }
  }
  return {std::move(seq), std::move(track)};
}

// --- embedding file format: "RACE", version u32, T u64, D u64, f32 payload ---

inline constexpr char kEmbeddingMagic[4] = {'R', 'A', 'C', 'E'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

inline void write_embeddings(const EmbeddingSequence& seq, const std::filesystem::path& path) {
  if (seq.frames < 1 || seq.dim < 1)
    throw std::invalid_argument("write_embeddings: sequence must be at least 1x1");
  if (!seq.all_finite()) throw std::invalid_argument("write_embeddings: non-finite value");
  io::atomic_write_file(path, [&](std::ostream& out) {
    io::write_bytes(out, kEmbeddingMagic, 4);
    io::write_u32(out, kEmbeddingVersion);
    io::write_u64(out, seq.frames);
    io::write_u64(out, seq.dim);
    for (float v : seq.values) io::write_f32(out, v);
  });
}

inline EmbeddingSequence read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open embedding file " + path.string());
  io::ByteReader reader(in, path.string());

  char magic[4];
  reader.read_bytes(magic, 4, "magic");
  if (std::memcmp(magic, kEmbeddingMagic, 4) != 0) reader.fail("bad magic, expected \"RACE\"", 0);
  const std::uint32_t version = reader.read_u32("version");
  if (version != kEmbeddingVersion)
    reader.fail("unsupported version " + std::to_string(version), 4);
  const std::uint64_t frames = reader.read_u64("frame count");
  const std::uint64_t dim = reader.read_u64("dimension");
  if (frames < 1 || dim < 1) reader.fail("frame count and dimension must be >= 1", 8);
  if (frames > (std::uint64_t(1) << 32) || dim > (std::uint64_t(1) << 32) ||
      frames * dim > (std::uint64_t(1) << 32))
    reader.fail("implausible matrix size", 8);

  EmbeddingSequence seq(static_cast<std::size_t>(frames), static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < seq.values.size(); ++i) {
    const std::uint64_t at = reader.offset();
    const float v = reader.read_f32("payload value");
    if (!std::isfinite(v)) reader.fail("non-finite payload value", at);
    seq.values[i] = v;
  }
  if (!reader.at_eof()) reader.fail("trailing bytes after payload", reader.offset());
  return seq;
}

// --- annotation file format: {"total_frames": N, "intervals": [[s,e], ...]} ---

inline void write_annotations(const AnnotationTrack& track, const std::filesystem::path& path) {
  track.validate();
  nlohmann::json doc;
  doc["total_frames"] = track.total_frames;
  auto& list = doc["intervals"] = nlohmann::json::array();
  for (const Interval& iv : track.intervals) list.push_back({iv.start, iv.end});
  io::atomic_write_file(path, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
}

inline AnnotationTrack read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open annotation file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("annotation file " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("total_frames") || !doc.contains("intervals"))
    throw std::runtime_error("annotation file " + path.string() +
                             ": expected object with total_frames and intervals");
  for (const auto& [key, value] : doc.items()) {
    (void)value;
    if (key != "total_frames" && key != "intervals")
      throw std::runtime_error("annotation file " + path.string() + ": unknown key \"" + key + "\"");
  }
  if (!doc["total_frames"].is_number_unsigned())
    throw std::runtime_error("annotation file " + path.string() +
                             ": total_frames must be a non-negative integer");

  AnnotationTrack track;
  track.total_frames = doc["total_frames"].get<std::size_t>();
  for (const auto& item : doc["intervals"]) {
    if (!item.is_array() || item.size() != 2 || !item[0].is_number_unsigned() ||
        !item[1].is_number_unsigned())
      throw std::runtime_error("annotation file " + path.string() +
                               ": each interval must be a [start, end] pair of non-negative integers");
    track.intervals.push_back({item[0].get<std::size_t>(), item[1].get<std::size_t>()});
  }
  track.validate();
  return track;
}

}  // namespace rac
