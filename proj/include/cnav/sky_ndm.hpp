#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cnav/gnss_models.hpp"
#include "cnav/image.hpp"

namespace cnav {

/// Binary sky raster (true = sky) from a sky-pointing fisheye image.
class SkyMask {
 public:
  SkyMask() = default;
  /// Throws DataError for rasters smaller than 64x64.
  SkyMask(int width, int height, bool fill = false);

  int width() const { return width_; }
  int height() const { return height_; }
  bool sky(int x, int y) const { return sky_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool is_sky) { sky_[static_cast<std::size_t>(y) * width_ + x] = is_sky ? 1 : 0; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  std::size_t size() const { return sky_.size(); }
  const std::vector<std::uint8_t>& raster() const { return sky_; }

  std::string image_id;
  double time = 0.0;

  /// 8-bit encoding: sky = 255, non-sky = 0.
  GrayImage to_image() const;
  /// Decoding: value >= 128 is sky.
  static SkyMask from_image(const GrayImage& image);

  bool operator==(const SkyMask& other) const {
    return width_ == other.width_ && height_ == other.height_ && sky_ == other.sky_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> sky_;
};

/// Ideal equidistant zenith-pointing fisheye.
struct FisheyeModel {
  double cx = 512.0;
  double cy = 512.0;
  double rim_radius = 500.0;   // pixels at elevation 0
  double mounting_yaw = 0.0;   // image up-axis relative to vehicle forward (rad)
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

/// `vehicle_heading` is clockwise from North, like azimuth.
Pixel project_satellite(const ElevationAzimuth& ea, double vehicle_heading, const FisheyeModel& model);

/// Inverse of project_satellite; nullopt outside the rim disk.
std::optional<ElevationAzimuth> unproject_pixel(const Pixel& px, double vehicle_heading, const FisheyeModel& model);

enum class ProjectionLabel { Los, Nlos, OutOfImage };

struct SatelliteProjection {
  SatId id;
  Pixel pixel;
  ProjectionLabel label = ProjectionLabel::Los;
};

/// OutOfImage is treated as NLOS downstream.
inline SignalLabel to_signal_label(ProjectionLabel l) {
  return l == ProjectionLabel::Los ? SignalLabel::Los : SignalLabel::Nlos;
}

struct SatelliteDirection {
  SatId id;
  ElevationAzimuth ea;
};

struct Classification {
  std::vector<SatelliteProjection> projections;
  bool mask_missing = false;
};

/// Labels each satellite by the mask pixel nearest its projection. A null
/// mask labels everything LOS and sets `mask_missing`.
Classification classify_epoch(const SkyMask* mask, std::span<const SatelliteDirection> sats, double vehicle_heading,
                              const FisheyeModel& model);

/// Matching pixels / total pixels. Throws DataError on dimension mismatch.
double segmentation_accuracy(const SkyMask& pred, const SkyMask& truth);

/// Image counts as correct when its pixel accuracy reaches this fraction.
inline constexpr double kImageLevelAccuracyThreshold = 0.95;

struct SegmentationMetrics {
  std::size_t images = 0;
  double mean_pixel_accuracy = 0.0;
  double min_pixel_accuracy = 0.0;
  double image_level_accuracy = 0.0;  // fraction of images >= kImageLevelAccuracyThreshold
  double fps = 0.0;
};

/// Aggregates per-image pixel accuracies and wall-clock time.
SegmentationMetrics summarize_segmentation(std::span<const double> pixel_accuracies, double wall_seconds);

/// Epoch-time -> mask-file map loaded from / stored as JSON.
struct MaskManifest {
  struct Entry {
    double time = 0.0;
    std::string file;
  };
  std::vector<Entry> entries;  // sorted by time

  /// Nearest entry within `tolerance` seconds.
  const Entry* nearest(double time, double tolerance) const;
};

MaskManifest read_mask_manifest(const std::filesystem::path& path);
void write_mask_manifest(const std::filesystem::path& path, const MaskManifest& manifest);

SkyMask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const SkyMask& mask);

}  // namespace cnav
