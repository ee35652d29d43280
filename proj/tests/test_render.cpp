#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "rac/counting.hpp"
#include "rac/render.hpp"
#include "rac/similarity.hpp"

namespace fs = std::filesystem;
using namespace rac;

namespace {

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_marker(const Image& img, std::size_t x, std::size_t y) {
  return img.at(x, y, 0) == kPeakMarkerColor[0] && img.at(x, y, 1) == kPeakMarkerColor[1] &&
         img.at(x, y, 2) == kPeakMarkerColor[2];
}

}  // namespace

TEST(Heatmap, IdentityTsmShowsYellowDiagonalOnDarkBlue) {
  const SimilarityMatrix ref = reference_tsm(AnnotationTrack{6, {}}, 0.0);
  const Image img = render_heatmap(ref.values);
  const std::size_t px = img.width / 6;
  ASSERT_GE(px, 1u);
  // diagonal cells take the high end of the map, off-diagonal the low end
  EXPECT_EQ(img.at(0, 0, 0), 252);
  EXPECT_EQ(img.at(0, 0, 1), 221);
  EXPECT_EQ(img.at(0, 0, 2), 23);
  EXPECT_EQ(img.at(px, 0, 0), 13);
  EXPECT_EQ(img.at(px, 0, 1), 18);
  EXPECT_EQ(img.at(px, 0, 2), 94);
}

TEST(Heatmap, ColormapIsMonotone) {
  std::uint8_t prev_r = 0, prev_g = 0, prev_b = 255;
  bool first = true;
  for (double v = 0.0; v <= 1.0; v += 0.05) {
    std::uint8_t r, g, b;
    detail::heat_color(v, r, g, b);
    if (!first) {
      EXPECT_GE(r, prev_r);
      EXPECT_GE(g, prev_g);
      EXPECT_LE(b, prev_b);
    }
    prev_r = r;
    prev_g = g;
    prev_b = b;
    first = false;
  }
}

TEST(Ppm, DeterministicBytes) {
  const fs::path dir = fs::temp_directory_path() / "rac_render_test";
  fs::create_directories(dir);
  const SimilarityMatrix ref = reference_tsm(AnnotationTrack{9, {{0, 3}, {4, 8}}}, 1.0);
  const Image img = render_heatmap(ref.values);
  write_ppm(img, dir / "a.ppm");
  write_ppm(img, dir / "b.ppm");
  const std::string a = file_bytes(dir / "a.ppm");
  EXPECT_EQ(a, file_bytes(dir / "b.ppm"));
  EXPECT_EQ(a.rfind("P6\n", 0), 0u);
}

TEST(ProbabilityTrace, MarksExactlyTheKeptPeaks) {
  std::vector<double> probs(40, 0.05);
  probs[8] = 0.9;
  probs[20] = 0.5;
  probs[21] = 0.48;
  probs[30] = 0.95;
  const auto [count, kept] = count_repetitions(probs, 0.2);
  const Image img = render_probability_trace(probs, kept);

  const std::size_t px = img.width / probs.size();
  std::set<std::size_t> marked_frames;
  for (std::size_t t = 0; t < probs.size(); ++t)
    if (is_marker(img, t * px, 0)) marked_frames.insert(t);

  std::set<std::size_t> expected;
  for (const Peak& p : kept) expected.insert(p.index);
  EXPECT_EQ(marked_frames, expected);
  EXPECT_EQ(marked_frames.size(), count);
}

TEST(ProbabilityTrace, RejectsEmptyAndOutOfRange) {
  EXPECT_THROW(render_probability_trace({}, {}), std::invalid_argument);
  Peak bogus;
  bogus.index = 99;
  EXPECT_THROW(render_probability_trace(std::vector<double>(10, 0.1), {bogus}),
               std::invalid_argument);
}
