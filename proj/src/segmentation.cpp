#include "cnav/segmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "cnav/errors.hpp"

namespace cnav {
namespace {

using Histogram = std::array<double, 256>;

Histogram histogram(const GrayImage& image) {
  Histogram h{};
  for (std::uint8_t p : image.pixels) h[p] += 1.0;
  return h;
}

bool is_uniform(const GrayImage& image) {
  const auto [lo, hi] = std::minmax_element(image.pixels.begin(), image.pixels.end());
  return *lo == *hi;
}

SkyMask threshold_mask(const GrayImage& image, double threshold) {
  SkyMask mask(image.width, image.height);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) mask.set(x, y, image.at(x, y) > threshold);
  return mask;
}

}  // namespace

std::optional<SegmentationMethod> parse_segmentation_method(std::string_view name) {
  if (name == "otsu") return SegmentationMethod::Otsu;
  if (name == "kmeans") return SegmentationMethod::KMeans;
  if (name == "region_growth") return SegmentationMethod::RegionGrowth;
  return std::nullopt;
}

std::string_view to_string(SegmentationMethod m) {
  switch (m) {
    case SegmentationMethod::Otsu: return "otsu";
    case SegmentationMethod::KMeans: return "kmeans";
    case SegmentationMethod::RegionGrowth: return "region_growth";
  }
  return "unknown";
}

std::optional<double> otsu_threshold(const GrayImage& image) {
  if (image.empty() || is_uniform(image)) return std::nullopt;
  const Histogram h = histogram(image);
  const double total = static_cast<double>(image.pixels.size());
  double sum_all = 0.0;
  for (int i = 0; i < 256; ++i) sum_all += i * h[static_cast<std::size_t>(i)];

  std::array<double, 256> between{};
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  for (int t = 0; t < 256; ++t) {
    w0 += h[static_cast<std::size_t>(t)];
    sum0 += t * h[static_cast<std::size_t>(t)];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) {
      between[static_cast<std::size_t>(t)] = -1.0;
      continue;
    }
    const double m0 = sum0 / w0, m1 = (sum_all - sum0) / w1;
    between[static_cast<std::size_t>(t)] = w0 * w1 * (m0 - m1) * (m0 - m1);
    best = std::max(best, between[static_cast<std::size_t>(t)]);
  }
  int first = -1, last = -1;
  for (int t = 0; t < 256; ++t) {
    if (between[static_cast<std::size_t>(t)] >= best * (1.0 - 1e-12)) {
      if (first < 0) first = t;
      last = t;
    }
  }
  // Class boundary for threshold t lies at t + 0.5.
  return 0.5 * ((first + 0.5) + (last + 0.5));
}

std::optional<std::pair<double, double>> kmeans_two_centers(const GrayImage& image, const SegmentationOptions& opt) {
  if (image.empty() || is_uniform(image)) return std::nullopt;
  const Histogram h = histogram(image);
  std::mt19937_64 rng(opt.kmeans_seed);

  // k-means++: first center drawn proportional to pixel counts, second by D^2.
  std::discrete_distribution<int> first_pick(h.begin(), h.end());
  double c0 = first_pick(rng);
  std::array<double, 256> d2{};
  for (int i = 0; i < 256; ++i) d2[static_cast<std::size_t>(i)] = h[static_cast<std::size_t>(i)] * (i - c0) * (i - c0);
  std::discrete_distribution<int> second_pick(d2.begin(), d2.end());
  double c1 = second_pick(rng);

  for (int iter = 0; iter < opt.kmeans_max_iterations; ++iter) {
    double s0 = 0.0, n0 = 0.0, s1 = 0.0, n1 = 0.0;
    for (int i = 0; i < 256; ++i) {
      const double w = h[static_cast<std::size_t>(i)];
      if (w == 0.0) continue;
      if (std::abs(i - c0) <= std::abs(i - c1)) {
        s0 += w * i;
        n0 += w;
      } else {
        s1 += w * i;
        n1 += w;
      }
    }
    const double n0c = n0 > 0.0 ? s0 / n0 : c0;
    const double n1c = n1 > 0.0 ? s1 / n1 : c1;
    const bool converged = n0c == c0 && n1c == c1;
    c0 = n0c;
    c1 = n1c;
    if (converged) break;
  }
  if (c0 > c1) std::swap(c0, c1);
  return std::make_pair(c0, c1);
}

SkyMask segment_baseline(const GrayImage& image, SegmentationMethod method, const SegmentationOptions& opt) {
  if (image.empty()) throw DataError("segment_baseline: empty image");
  const bool uniform = is_uniform(image);

  switch (method) {
    case SegmentationMethod::Otsu:
    case SegmentationMethod::KMeans: {
      if (uniform) return SkyMask(image.width, image.height, image.pixels.front() > 127.5);
      if (method == SegmentationMethod::Otsu) return threshold_mask(image, *otsu_threshold(image));
      const auto [lo, hi] = *kmeans_two_centers(image, opt);
      // Nearest-center assignment, ties to the dark cluster.
      return threshold_mask(image, 0.5 * (lo + hi));
    }
    case SegmentationMethod::RegionGrowth: {
      SkyMask mask(image.width, image.height, false);
      const int sx = std::clamp(opt.seed_x.value_or(image.width / 2), 0, image.width - 1);
      const int sy = std::clamp(opt.seed_y.value_or(image.height / 2), 0, image.height - 1);
      const int seed_value = image.at(sx, sy);
      std::vector<std::pair<int, int>> stack{{sx, sy}};
      mask.set(sx, sy, true);
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        constexpr std::array<std::pair<int, int>, 4> kNeighbors{{{1, 0}, {-1, 0}, {0, 1}, {0, -1}}};
        for (const auto& [dx, dy] : kNeighbors) {
          const int nx = x + dx, ny = y + dy;
          if (!mask.contains(nx, ny) || mask.sky(nx, ny)) continue;
          if (std::abs(static_cast<int>(image.at(nx, ny)) - seed_value) > opt.region_tolerance) continue;
          mask.set(nx, ny, true);
          stack.emplace_back(nx, ny);
        }
      }
      return mask;
    }
  }
  throw DataError("segment_baseline: unknown method");
}

}  // namespace cnav
