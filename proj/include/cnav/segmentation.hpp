#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include "cnav/image.hpp"
#include "cnav/sky_ndm.hpp"

namespace cnav {

enum class SegmentationMethod { Otsu, KMeans, RegionGrowth };

std::optional<SegmentationMethod> parse_segmentation_method(std::string_view name);
std::string_view to_string(SegmentationMethod m);

struct SegmentationOptions {
  // Region growth seed; defaults to the image center when unset.
  std::optional<int> seed_x;
  std::optional<int> seed_y;
  int region_tolerance = 25;  // intensity units out of 255
  int kmeans_max_iterations = 50;
  std::uint64_t kmeans_seed = 0;
};

/// Otsu threshold: pixels with intensity > threshold are the bright class.
/// Ties in between-class variance resolve to the middle of the maximizing run.
/// Returns nullopt for a uniform image.
std::optional<double> otsu_threshold(const GrayImage& image);

/// Two-means cluster centers (low, high) with k-means++ seeding.
/// Returns nullopt for a uniform image.
std::optional<std::pair<double, double>> kmeans_two_centers(const GrayImage& image, const SegmentationOptions& opt);

/// Classical sky segmentation; the brighter class (or grown region) is sky.
/// Throws DataError for an empty image.
SkyMask segment_baseline(const GrayImage& image, SegmentationMethod method, const SegmentationOptions& opt = {});

}  // namespace cnav
