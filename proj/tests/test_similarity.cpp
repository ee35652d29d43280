#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "rac/similarity.hpp"

using namespace rac;

namespace {

std::set<std::pair<std::size_t, std::size_t>> ones_of(const Matrix& m) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (m(i, j) == 1.0) out.emplace(i, j);
  return out;
}

}  // namespace

TEST(RawSimilarity, IdenticalVectorsScoreZeroDistance) {
  const std::vector<double> v{0.3, -1.2, 0.9};
  EXPECT_EQ(raw_similarity(v, v, SimilarityMeasure::euclidean()), 0.0);
  EXPECT_EQ(raw_similarity(v, v, SimilarityMeasure::hamming(4.0)), 0.0);
}

TEST(RawSimilarity, SelfCorrelationOfNonConstantVectorIsOne) {
  const std::vector<double> v{0.1, 0.7, -0.4, 0.2};
  EXPECT_NEAR(raw_similarity(v, v, SimilarityMeasure::correlation()), 1.0, 1e-12);
  const std::vector<double> constant{2.0, 2.0, 2.0, 2.0};
  EXPECT_EQ(raw_similarity(constant, constant, SimilarityMeasure::correlation()), 0.0);
}

TEST(RawSimilarity, SoftHammingMatchesFormula) {
  const std::vector<double> a{0.0, 0.0};
  const std::vector<double> b{1.0, 0.0};
  // -(1/2) * (tanh(4*1) + tanh(0))
  EXPECT_DOUBLE_EQ(raw_similarity(a, b, SimilarityMeasure::hamming(4.0)), -std::tanh(4.0) / 2.0);
  EXPECT_NEAR(raw_similarity(a, b, SimilarityMeasure::hamming(4.0)), -0.49966, 1e-5);
}

TEST(RawSimilarity, SymmetricInArguments) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(5), b(5);
    for (double& v : a) v = rng.uniform(-2.0, 2.0);
    for (double& v : b) v = rng.uniform(-2.0, 2.0);
    for (const auto& m : {SimilarityMeasure::hamming(3.0), SimilarityMeasure::euclidean(),
                          SimilarityMeasure::correlation()}) {
      EXPECT_DOUBLE_EQ(raw_similarity(a, b, m), raw_similarity(b, a, m));
    }
  }
}

TEST(RawSimilarity, DimensionMismatchThrows) {
  const std::vector<double> a{1.0, 2.0};
  const std::vector<double> b{1.0};
  EXPECT_THROW(raw_similarity(a, b, SimilarityMeasure::euclidean()), std::invalid_argument);
}

TEST(RawSimilarity, InvalidBetaRejected) {
  EXPECT_THROW(SimilarityMeasure::hamming(0.0).validate(), std::invalid_argument);
  EXPECT_THROW(SimilarityMeasure::hamming(-1.0).validate(), std::invalid_argument);
}

TEST(PredictedTsm, SingleFrameIsDegenerateHalf) {
  Matrix emb(1, 3);
  emb(0, 0) = 0.4;
  const SimilarityMatrix tsm = predicted_tsm(emb, SimilarityMeasure::hamming());
  ASSERT_EQ(tsm.values.rows(), 1u);
  EXPECT_EQ(tsm.values(0, 0), 0.5);
}

TEST(PredictedTsm, RepeatedFrameNormalizesToOne) {
  Matrix emb(3, 2);
  emb(0, 0) = 1.0;
  emb(1, 0) = 5.0;
  emb(2, 0) = 1.0;  // frame 2 identical to frame 0
  const SimilarityMatrix tsm = predicted_tsm(emb, SimilarityMeasure::euclidean());
  EXPECT_EQ(tsm.values(0, 0), 1.0);
  EXPECT_EQ(tsm.values(0, 2), 1.0);
  EXPECT_EQ(tsm.values(0, 1), 0.0);
}

TEST(PredictedTsm, DiagonalIsMaximalForDistanceMeasures) {
  Rng rng(3);
  Matrix emb(8, 4);
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t d = 0; d < 4; ++d) emb(t, d) = rng.uniform(-1.0, 1.0);
  for (const auto& m : {SimilarityMeasure::hamming(4.0), SimilarityMeasure::euclidean()}) {
    const SimilarityMatrix tsm = predicted_tsm(emb, m);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(tsm.values(i, i), 1.0);
  }
}

TEST(PredictedTsm, EveryRowSpansZeroToOne) {
  Rng rng(42);
  Matrix emb(8, 4);
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t d = 0; d < 4; ++d) emb(t, d) = rng.uniform(-1.0, 1.0);
  const Matrix raw = pairwise_raw_similarity(emb, SimilarityMeasure::hamming(4.0));
  const SimilarityMatrix tsm = predicted_tsm(emb, SimilarityMeasure::hamming(4.0));
  for (std::size_t i = 0; i < 8; ++i) {
    // brute-force the row to confirm it is non-degenerate
    double lo = raw(i, 0), hi = raw(i, 0);
    for (std::size_t j = 1; j < 8; ++j) {
      lo = std::min(lo, raw(i, j));
      hi = std::max(hi, raw(i, j));
    }
    ASSERT_LT(lo, hi);
    bool has_zero = false, has_one = false;
    for (std::size_t j = 0; j < 8; ++j) {
      EXPECT_GE(tsm.values(i, j), 0.0);
      EXPECT_LE(tsm.values(i, j), 1.0);
      has_zero |= tsm.values(i, j) == 0.0;
      has_one |= tsm.values(i, j) == 1.0;
    }
    EXPECT_TRUE(has_zero);
    EXPECT_TRUE(has_one);
  }
}

TEST(PredictedTsm, InvariantUnderPositiveAffineRowRescaling) {
  Rng rng(5);
  Matrix raw(6, 6);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) raw(i, j) = rng.uniform(-3.0, 3.0);
  Matrix rescaled = raw;
  for (std::size_t i = 0; i < 6; ++i) {
    const double slope = 0.1 + 5.0 * rng.uniform();
    const double shift = rng.uniform(-10.0, 10.0);
    for (std::size_t j = 0; j < 6; ++j) rescaled(i, j) = slope * raw(i, j) + shift;
  }
  const Matrix a = minmax_normalize_rows(raw);
  const Matrix b = minmax_normalize_rows(rescaled);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(a(i, j), b(i, j), 1e-12);
}

TEST(PredictedTsm, NonFiniteEmbeddingRejected) {
  Matrix emb(2, 2);
  emb(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(predicted_tsm(emb, SimilarityMeasure::hamming()), std::invalid_argument);
}

TEST(PredictedTsm, NoiseFreeRepetitionsAlignToOne) {
  SyntheticSpec spec;
  spec.rng_seed = 21;
  spec.t_min = spec.t_max = 34;
  spec.dim = 4;
  spec.reps_min = spec.reps_max = 2;
  spec.duration_min = spec.duration_max = 12;
  spec.gap_min = spec.gap_max = 4;
  spec.noise_sigma = 0.0;
  spec.motif_dim = 4;
  auto [seq, track] = generate_sequence(spec);
  for (const auto& m : {SimilarityMeasure::hamming(4.0), SimilarityMeasure::euclidean()}) {
    const SimilarityMatrix tsm = predicted_tsm(seq, m);
    const Interval& a = track.intervals[0];
    const Interval& b = track.intervals[1];
    for (std::size_t j = 0; j < 12; ++j)
      EXPECT_EQ(tsm.values(a.start + j, b.start + j), 1.0) << "offset " << j;
  }
}

TEST(ReferenceTsm, EmptyTrackIsIdentityPattern) {
  const SimilarityMatrix ref = reference_tsm(AnnotationTrack{4, {}}, 0.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(ref.values(i, j), i == j ? 1.0 : 0.0);
}

TEST(ReferenceTsm, TwoRepetitionHandCase) {
  // T=5, intervals (0,1) and (3,4): diagonal, start-start and end-end pairs;
  // the alignment line only touches those same entries.
  const SimilarityMatrix ref = reference_tsm(AnnotationTrack{5, {{0, 1}, {3, 4}}}, 0.0);
  std::set<std::pair<std::size_t, std::size_t>> expected;
  for (std::size_t i = 0; i < 5; ++i) expected.emplace(i, i);
  expected.emplace(0, 3);
  expected.emplace(3, 0);
  expected.emplace(1, 4);
  expected.emplace(4, 1);
  EXPECT_EQ(ones_of(ref.values), expected);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      if (!expected.count({i, j})) EXPECT_EQ(ref.values(i, j), 0.0);
}

TEST(ReferenceTsm, UnequalDurationLineMatchesRasterOracle) {
  const AnnotationTrack track{9, {{0, 3}, {4, 8}}};
  const SimilarityMatrix ref = reference_tsm(track, 0.0);

  const auto line = oracle::raster_points(0, 4, 3, 8);
  const std::set<std::pair<std::size_t, std::size_t>> expected_line = {
      {0, 4}, {1, 5}, {2, 6}, {2, 7}, {3, 8}};
  EXPECT_EQ(line, expected_line);

  std::set<std::pair<std::size_t, std::size_t>> expected;
  for (std::size_t i = 0; i < 9; ++i) expected.emplace(i, i);
  expected.emplace(0, 4);
  expected.emplace(4, 0);  // start alignment
  expected.emplace(3, 8);
  expected.emplace(8, 3);  // end alignment
  for (const auto& [r, c] : line) {
    expected.emplace(r, c);
    expected.emplace(c, r);
  }
  EXPECT_EQ(ones_of(ref.values), expected);
}

TEST(ReferenceTsm, RandomTracksKeepInvariants) {
  Rng rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    const AnnotationTrack track = oracle::random_track(rng);
    const SimilarityMatrix ref = reference_tsm(track, 0.0);
    const std::size_t n = track.total_frames;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(ref.values(i, i), 1.0);
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_EQ(ref.values(i, j), ref.values(j, i));
        EXPECT_TRUE(ref.values(i, j) == 0.0 || ref.values(i, j) == 1.0);
      }
    }
  }
}

TEST(ReferenceTsm, SmoothingKeepsRangeSymmetryAndHardOnes) {
  Rng rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    const AnnotationTrack track = oracle::random_track(rng, 48);
    const SimilarityMatrix hard = reference_tsm(track, 0.0);
    const SimilarityMatrix smooth = reference_tsm(track, 1.0);
    const std::size_t n = track.total_frames;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(smooth.values(i, i), 1.0);
      for (std::size_t j = 0; j < n; ++j) {
        EXPECT_GE(smooth.values(i, j), 0.0);
        EXPECT_LE(smooth.values(i, j), 1.0);
        EXPECT_EQ(smooth.values(i, j), smooth.values(j, i));
        if (hard.values(i, j) == 1.0) EXPECT_EQ(smooth.values(i, j), 1.0);
        EXPECT_LE(smooth.values(i, j), smooth.values(i, i));
      }
    }
  }
}

TEST(ReferenceTsm, AddingARepetitionOnlyAddsOnes) {
  Rng rng(7);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    AnnotationTrack track = oracle::random_track(rng, 48, 4);
    // try to append one more interval after the current last end
    const std::size_t tail = track.intervals.empty() ? 0 : track.intervals.back().end + 2;
    if (tail + 3 >= track.total_frames) continue;
    AnnotationTrack extended = track;
    extended.intervals.push_back({tail, tail + 2});
    extended.validate();

    const auto base_ones = ones_of(reference_tsm(track, 0.0).values);
    const auto extended_ones = ones_of(reference_tsm(extended, 0.0).values);
    for (const auto& entry : base_ones) EXPECT_TRUE(extended_ones.count(entry));
    ++checked;
  }
  EXPECT_GT(checked, 5);
}
