#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "rac/core.hpp"
#include "rac/data.hpp"

namespace rac {

enum class MeasureKind { kHamming, kEuclidean, kCorrelation };

// Frame-pair similarity. Hamming is the soft, differentiable relaxation
// -(1/D) * sum tanh(beta * |a_d - b_d|); it recovers the coordinate-count
// semantics as beta grows while staying smooth enough to backpropagate.
struct SimilarityMeasure {
  MeasureKind kind = MeasureKind::kHamming;
  double beta = 4.0;

  static SimilarityMeasure hamming(double beta = 4.0) { return {MeasureKind::kHamming, beta}; }
  static SimilarityMeasure euclidean() { return {MeasureKind::kEuclidean, 0.0}; }
  static SimilarityMeasure correlation() { return {MeasureKind::kCorrelation, 0.0}; }

  void validate() const {
    if (kind == MeasureKind::kHamming && (!std::isfinite(beta) || beta <= 0.0))
      throw std::invalid_argument("similarity measure: hamming beta must be finite and positive");
  }

  friend bool operator==(const SimilarityMeasure&, const SimilarityMeasure&) = default;
};

enum class TsmKind { kPredicted, kReference };

struct SimilarityMatrix {
  TsmKind kind = TsmKind::kPredicted;
  Matrix values;
};

inline double raw_similarity(std::span<const double> a, std::span<const double> b,
                             const SimilarityMeasure& m) {
  if (a.size() != b.size())
    throw std::invalid_argument("raw_similarity: dimension mismatch (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  const std::size_t dim = a.size();
  switch (m.kind) {
    case MeasureKind::kHamming: {
      double sum = 0.0;
      for (std::size_t d = 0; d < dim; ++d) sum += std::tanh(m.beta * std::abs(a[d] - b[d]));
      return -sum / static_cast<double>(dim);
    }
    case MeasureKind::kEuclidean: {
      double sum = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double delta = a[d] - b[d];
        sum += delta * delta;
      }
      return -std::sqrt(sum);
    }
    case MeasureKind::kCorrelation: {
      double mean_a = 0.0, mean_b = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        mean_a += a[d];
        mean_b += b[d];
      }
      mean_a /= static_cast<double>(dim);
      mean_b /= static_cast<double>(dim);
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double ca = a[d] - mean_a;
        const double cb = b[d] - mean_b;
        dot += ca * cb;
        na += ca * ca;
        nb += cb * cb;
      }
      if (na == 0.0 || nb == 0.0) return 0.0;  // constant vector carries no correlation
      return dot / (std::sqrt(na) * std::sqrt(nb));
    }
  }
  throw std::logic_error("raw_similarity: unknown measure");
}

// Accumulates upstream * d(raw_similarity)/d(a|b) into da and db.
inline void raw_similarity_backward(std::span<const double> a, std::span<const double> b,
                                    const SimilarityMeasure& m, double upstream, std::span<double> da,
                                    std::span<double> db) {
  const std::size_t dim = a.size();
  switch (m.kind) {
    case MeasureKind::kHamming: {
      const double scale = -upstream * m.beta / static_cast<double>(dim);
      for (std::size_t d = 0; d < dim; ++d) {
        const double delta = a[d] - b[d];
        if (delta == 0.0) continue;
        const double t = std::tanh(m.beta * std::abs(delta));
        const double g = scale * (1.0 - t * t) * (delta > 0.0 ? 1.0 : -1.0);
        da[d] += g;
        db[d] -= g;
      }
      return;
    }
    case MeasureKind::kEuclidean: {
      double sum = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double delta = a[d] - b[d];
        sum += delta * delta;
      }
      const double dist = std::sqrt(sum);
      if (dist == 0.0) return;  // f is identically 0 at coincident points
      for (std::size_t d = 0; d < dim; ++d) {
        const double g = -upstream * (a[d] - b[d]) / dist;
        da[d] += g;
        db[d] -= g;
      }
      return;
    }
    case MeasureKind::kCorrelation: {
      double mean_a = 0.0, mean_b = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        mean_a += a[d];
        mean_b += b[d];
      }
      mean_a /= static_cast<double>(dim);
      mean_b /= static_cast<double>(dim);
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t d = 0; d < dim; ++d) {
        const double ca = a[d] - mean_a;
        const double cb = b[d] - mean_b;
        dot += ca * cb;
        na += ca * ca;
        nb += cb * cb;
      }
      if (na == 0.0 || nb == 0.0) return;
      const double norm_a = std::sqrt(na);
      const double norm_b = std::sqrt(nb);
      const double r = dot / (norm_a * norm_b);
      for (std::size_t d = 0; d < dim; ++d) {
        const double ca = a[d] - mean_a;
        const double cb = b[d] - mean_b;
        da[d] += upstream * (cb / (norm_a * norm_b) - r * ca / na);
        db[d] += upstream * (ca / (norm_a * norm_b) - r * cb / nb);
      }
      return;
    }
  }
}

inline Matrix pairwise_raw_similarity(const Matrix& embeddings, const SimilarityMeasure& m) {
  m.validate();
  if (!embeddings.all_finite())
    throw std::invalid_argument("pairwise similarity: non-finite embedding value");
  const std::size_t frames = embeddings.rows();
  const std::size_t dim = embeddings.cols();
  Matrix raw(frames, frames);
  for (std::size_t i = 0; i < frames; ++i) {
    std::span<const double> row_i(embeddings.row(i), dim);
    for (std::size_t j = i; j < frames; ++j) {
      const double f = raw_similarity(row_i, std::span<const double>(embeddings.row(j), dim), m);
      raw(i, j) = f;
      raw(j, i) = f;
    }
  }
  return raw;
}

// Row-wise min-max normalization. Rows with max == min carry no ordering
// information and map to 0.5 everywhere.
inline Matrix minmax_normalize_rows(const Matrix& raw) {
  Matrix out(raw.rows(), raw.cols());
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    double lo = raw(i, 0), hi = raw(i, 0);
    for (std::size_t j = 1; j < raw.cols(); ++j) {
      lo = std::min(lo, raw(i, j));
      hi = std::max(hi, raw(i, j));
    }
    if (hi == lo) {
      for (std::size_t j = 0; j < raw.cols(); ++j) out(i, j) = 0.5;
    } else {
      const double range = hi - lo;
      for (std::size_t j = 0; j < raw.cols(); ++j) out(i, j) = (raw(i, j) - lo) / range;
    }
  }
  return out;
}

inline SimilarityMatrix predicted_tsm(const Matrix& embeddings, const SimilarityMeasure& m) {
  return {TsmKind::kPredicted, minmax_normalize_rows(pairwise_raw_similarity(embeddings, m))};
}

inline SimilarityMatrix predicted_tsm(const EmbeddingSequence& seq, const SimilarityMeasure& m) {
  return predicted_tsm(to_matrix(seq), m);
}

// Reverse-mode step through normalization and the similarity function:
// d_tsm (T x T) -> gradient w.r.t. the embeddings (T x C). `raw` must be the
// pairwise matrix from the matching forward pass.
inline Matrix predicted_tsm_backward(const Matrix& embeddings, const SimilarityMeasure& m,
                                     const Matrix& raw, const Matrix& d_tsm) {
  const std::size_t frames = embeddings.rows();
  const std::size_t dim = embeddings.cols();
  if (d_tsm.rows() != frames || d_tsm.cols() != frames || raw.rows() != frames)
    throw std::invalid_argument("predicted_tsm_backward: shape mismatch");

  Matrix d_raw(frames, frames);
  for (std::size_t i = 0; i < frames; ++i) {
    std::size_t jmin = 0, jmax = 0;
    double lo = raw(i, 0), hi = raw(i, 0);
    for (std::size_t j = 1; j < frames; ++j) {
      if (raw(i, j) < lo) {
        lo = raw(i, j);
        jmin = j;
      }
      if (raw(i, j) > hi) {
        hi = raw(i, j);
        jmax = j;
      }
    }
    if (hi == lo) continue;  // degenerate row: constant 0.5, zero gradient
    const double range = hi - lo;
    for (std::size_t j = 0; j < frames; ++j) {
      const double g = d_tsm(i, j);
      if (g == 0.0) continue;
      d_raw(i, j) += g / range;
      d_raw(i, jmin) += g * (raw(i, j) - hi) / (range * range);
      d_raw(i, jmax) += g * (lo - raw(i, j)) / (range * range);
    }
  }

  Matrix d_emb(frames, dim);
  for (std::size_t i = 0; i < frames; ++i) {
    std::span<const double> row_i(embeddings.row(i), dim);
    std::span<double> grad_i(d_emb.row(i), dim);
    for (std::size_t j = 0; j < frames; ++j) {
      if (i == j) continue;  // f(x, x) is constant for every measure
      const double g = d_raw(i, j);
      if (g == 0.0) continue;
      raw_similarity_backward(row_i, std::span<const double>(embeddings.row(j), dim), m, g, grad_i,
                              std::span<double>(d_emb.row(j), dim));
    }
  }
  return d_emb;
}

namespace detail {

inline std::int64_t round_half_away(double x) { return std::llround(x); }

// Straight segment between integer grid points: max(|drow|,|dcol|)+1 equally
// spaced samples, each coordinate rounded to the nearest integer.
inline void rasterize_segment(Matrix& m, std::size_t r0, std::size_t c0, std::size_t r1,
                              std::size_t c1) {
  const auto drow = static_cast<std::int64_t>(r1) - static_cast<std::int64_t>(r0);
  const auto dcol = static_cast<std::int64_t>(c1) - static_cast<std::int64_t>(c0);
  const std::int64_t steps = std::max(std::abs(drow), std::abs(dcol));
  for (std::int64_t s = 0; s <= steps; ++s) {
    const double alpha = steps == 0 ? 0.0 : static_cast<double>(s) / static_cast<double>(steps);
    const auto r = static_cast<std::size_t>(
        round_half_away(static_cast<double>(r0) + alpha * static_cast<double>(drow)));
    const auto c = static_cast<std::size_t>(
        round_half_away(static_cast<double>(c0) + alpha * static_cast<double>(dcol)));
    m(r, c) = 1.0;
    m(c, r) = 1.0;
  }
}

inline std::vector<double> gaussian_kernel(double sigma, std::size_t radius) {
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Truncated 2-D Gaussian blur (separable, zero padding outside the matrix).
inline Matrix gaussian_blur(const Matrix& m, double sigma) {
  const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  if (radius == 0) return m;
  const std::vector<double> kernel = gaussian_kernel(sigma, radius);
  const auto n = static_cast<std::int64_t>(m.rows());
  const auto rad = static_cast<std::int64_t>(radius);

  Matrix tmp(m.rows(), m.cols());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t k = -rad; k <= rad; ++k) {
        const std::int64_t jj = j + k;
        if (jj < 0 || jj >= n) continue;
        acc += kernel[static_cast<std::size_t>(k + rad)] * m(i, jj);
      }
      tmp(i, j) = acc;
    }
  Matrix out(m.rows(), m.cols());
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t k = -rad; k <= rad; ++k) {
        const std::int64_t ii = i + k;
        if (ii < 0 || ii >= n) continue;
        acc += kernel[static_cast<std::size_t>(k + rad)] * tmp(ii, j);
      }
      out(i, j) = acc;
    }
  return out;
}

}  // namespace detail

// Reference TSM from ground-truth intervals:
//   1. zeros with a unit diagonal;
//   2. starts align with starts and ends with ends across all repetitions;
//   3. for every pair of repetitions, the straight line from (start_a, start_b)
//      to (end_a, end_b) is set to one (many-to-many warped alignment);
//   4. Gaussian smoothing, clamped to [0,1], with the pre-smoothing ones
//      re-imposed so the loss mask stays anchored.
inline SimilarityMatrix reference_tsm(const AnnotationTrack& track, double sigma_s = 1.0) {
  track.validate();
  if (!(sigma_s >= 0.0) || !std::isfinite(sigma_s))
    throw std::invalid_argument("reference_tsm: smoothing sigma must be finite and >= 0");
  const std::size_t frames = track.total_frames;
  Matrix m(frames, frames);
  for (std::size_t i = 0; i < frames; ++i) m(i, i) = 1.0;

  const auto& reps = track.intervals;
  for (std::size_t a = 0; a < reps.size(); ++a)
    for (std::size_t b = a + 1; b < reps.size(); ++b) {
      m(reps[a].start, reps[b].start) = 1.0;
      m(reps[b].start, reps[a].start) = 1.0;
      m(reps[a].end, reps[b].end) = 1.0;
      m(reps[b].end, reps[a].end) = 1.0;
    }
  for (std::size_t a = 0; a < reps.size(); ++a)
    for (std::size_t b = a + 1; b < reps.size(); ++b)
      detail::rasterize_segment(m, reps[a].start, reps[b].start, reps[a].end, reps[b].end);

  if (sigma_s > 0.0) {
    const Matrix hard = m;
    m = detail::gaussian_blur(m, sigma_s);
    for (std::size_t i = 0; i < frames; ++i)
      for (std::size_t j = 0; j < frames; ++j) {
        m(i, j) = std::clamp(m(i, j), 0.0, 1.0);
        if (hard(i, j) == 1.0) m(i, j) = 1.0;
      }
  }
  return {TsmKind::kReference, std::move(m)};
}

}  // namespace rac
