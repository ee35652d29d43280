#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "rac/core.hpp"
#include "rac/counting.hpp"

namespace rac {

struct Image {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t r, std::uint8_t g, std::uint8_t b)
      : width(w), height(h), rgb(w * h * 3) {
    for (std::size_t i = 0; i < w * h; ++i) {
      rgb[3 * i] = r;
      rgb[3 * i + 1] = g;
      rgb[3 * i + 2] = b;
    }
  }

  void set(std::size_t x, std::size_t y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const std::size_t i = 3 * (y * width + x);
    rgb[i] = r;
    rgb[i + 1] = g;
    rgb[i + 2] = b;
  }

  std::uint8_t at(std::size_t x, std::size_t y, std::size_t channel) const {
    return rgb[3 * (y * width + x) + channel];
  }
};

inline void write_ppm(const Image& image, const std::filesystem::path& path) {
  if (image.width == 0 || image.height == 0) throw std::invalid_argument("write_ppm: empty image");
  io::atomic_write_file(path, [&](std::ostream& out) {
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    io::write_bytes(out, image.rgb.data(), image.rgb.size());
  });
}

namespace detail {

// Monotone colormap: 0 -> dark blue, 1 -> yellow.
inline void heat_color(double v, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b) {
  v = std::clamp(v, 0.0, 1.0);
  constexpr double lo[3] = {13.0, 18.0, 94.0};
  constexpr double hi[3] = {252.0, 221.0, 23.0};
  r = static_cast<std::uint8_t>(std::lround(lo[0] + v * (hi[0] - lo[0])));
  g = static_cast<std::uint8_t>(std::lround(lo[1] + v * (hi[1] - lo[1])));
  b = static_cast<std::uint8_t>(std::lround(lo[2] + v * (hi[2] - lo[2])));
}

inline std::size_t cell_pixels(std::size_t cells) {
  if (cells == 0) return 1;
  return std::clamp<std::size_t>(512 / cells, 1, 16);
}

}  // namespace detail

inline Image render_heatmap(const Matrix& values) {
  if (values.rows() == 0 || values.cols() == 0)
    throw std::invalid_argument("render_heatmap: empty matrix");
  const std::size_t px = detail::cell_pixels(std::max(values.rows(), values.cols()));
  Image image(values.cols() * px, values.rows() * px, 0, 0, 0);
  for (std::size_t i = 0; i < values.rows(); ++i)
    for (std::size_t j = 0; j < values.cols(); ++j) {
      std::uint8_t r, g, b;
      detail::heat_color(values(i, j), r, g, b);
      for (std::size_t y = 0; y < px; ++y)
        for (std::size_t x = 0; x < px; ++x) image.set(j * px + x, i * px + y, r, g, b);
    }
  return image;
}

inline constexpr std::uint8_t kPeakMarkerColor[3] = {228, 52, 52};
inline constexpr std::size_t kPeakMarkerBand = 6;  // rows at the top of the trace

// Line trace of a probability series with the kept peaks marked by a red
// column in the top band.
inline Image render_probability_trace(const std::vector<double>& probs,
                                      const std::vector<Peak>& marked) {
  if (probs.empty()) throw std::invalid_argument("render_probability_trace: empty series");
  const std::size_t frames = probs.size();
  const std::size_t px = std::clamp<std::size_t>(640 / frames, 1, 8);
  const std::size_t height = 128;
  Image image(frames * px, height, 18, 18, 24);

  auto row_of = [&](double v) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<std::size_t>(std::lround((1.0 - v) * static_cast<double>(height - 1)));
  };

  for (std::size_t t = 0; t < frames; ++t) {
    std::size_t y0 = row_of(probs[t]);
    std::size_t y1 = t + 1 < frames ? row_of(probs[t + 1]) : y0;
    if (y0 > y1) std::swap(y0, y1);
    for (std::size_t x = t * px; x < (t + 1) * px; ++x)
      for (std::size_t y = y0; y <= y1; ++y) image.set(x, y, 235, 235, 235);
  }
  for (const Peak& p : marked) {
    if (p.index >= frames) throw std::invalid_argument("render_probability_trace: peak out of range");
    for (std::size_t x = p.index * px; x < (p.index + 1) * px; ++x)
      for (std::size_t y = 0; y < kPeakMarkerBand; ++y)
        image.set(x, y, kPeakMarkerColor[0], kPeakMarkerColor[1], kPeakMarkerColor[2]);
  }
  return image;
}

}  // namespace rac
