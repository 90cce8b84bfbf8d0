#include "cnav/sky_ndm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "cnav/atomic_file.hpp"
#include "cnav/errors.hpp"

namespace cnav {

SkyMask::SkyMask(int width, int height, bool fill)
    : width_(width), height_(height),
      sky_(static_cast<std::size_t>(std::max(width, 0)) * static_cast<std::size_t>(std::max(height, 0)),
           fill ? 1 : 0) {
  if (width < 64 || height < 64)
    throw DataError("sky mask must be at least 64x64, got " + std::to_string(width) + "x" + std::to_string(height));
}

GrayImage SkyMask::to_image() const {
  GrayImage img(width_, height_);
  for (std::size_t i = 0; i < sky_.size(); ++i) img.pixels[i] = sky_[i] ? 255 : 0;
  return img;
}

SkyMask SkyMask::from_image(const GrayImage& image) {
  SkyMask mask(image.width, image.height);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) mask.sky_[i] = image.pixels[i] >= 128 ? 1 : 0;
  return mask;
}

Pixel project_satellite(const ElevationAzimuth& ea, double vehicle_heading, const FisheyeModel& model) {
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  const double r = model.rim_radius * (kHalfPi - ea.elevation) / kHalfPi;
  const double alpha = ea.azimuth - vehicle_heading - model.mounting_yaw;
  return {model.cx + r * std::sin(alpha), model.cy - r * std::cos(alpha)};
}

std::optional<ElevationAzimuth> unproject_pixel(const Pixel& px, double vehicle_heading, const FisheyeModel& model) {
  constexpr double kHalfPi = std::numbers::pi / 2.0;
  const double dx = px.u - model.cx;
  const double dy = model.cy - px.v;
  const double r = std::hypot(dx, dy);
  if (r > model.rim_radius) return std::nullopt;
  ElevationAzimuth ea;
  ea.elevation = kHalfPi - kHalfPi * r / model.rim_radius;
  const double alpha = r > 0.0 ? std::atan2(dx, dy) : 0.0;
  ea.azimuth = wrap_two_pi(alpha + vehicle_heading + model.mounting_yaw);
  return ea;
}

Classification classify_epoch(const SkyMask* mask, std::span<const SatelliteDirection> sats, double vehicle_heading,
                              const FisheyeModel& model) {
  Classification out;
  out.mask_missing = mask == nullptr;
  out.projections.reserve(sats.size());
  for (const auto& s : sats) {
    SatelliteProjection p;
    p.id = s.id;
    p.pixel = project_satellite(s.ea, vehicle_heading, model);
    if (mask == nullptr) {
      p.label = ProjectionLabel::Los;
    } else {
      const double r = std::hypot(p.pixel.u - model.cx, p.pixel.v - model.cy);
      const int x = static_cast<int>(std::lround(p.pixel.u));
      const int y = static_cast<int>(std::lround(p.pixel.v));
      // Small tolerance so elevation 0 (exactly on the rim) stays in-dome.
      if (r > model.rim_radius * (1.0 + 1e-12) || !mask->contains(x, y))
        p.label = ProjectionLabel::OutOfImage;
      else
        p.label = mask->sky(x, y) ? ProjectionLabel::Los : ProjectionLabel::Nlos;
    }
    out.projections.push_back(std::move(p));
  }
  return out;
}

double segmentation_accuracy(const SkyMask& pred, const SkyMask& truth) {
  if (pred.width() != truth.width() || pred.height() != truth.height())
    throw DataError("segmentation_accuracy: dimension mismatch");
  const auto& a = pred.raster();
  const auto& b = truth.raster();
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(a.size());
}

SegmentationMetrics summarize_segmentation(std::span<const double> pixel_accuracies, double wall_seconds) {
  SegmentationMetrics m;
  m.images = pixel_accuracies.size();
  if (m.images == 0) return m;
  double sum = 0.0;
  std::size_t good = 0;
  m.min_pixel_accuracy = 1.0;
  for (double a : pixel_accuracies) {
    sum += a;
    m.min_pixel_accuracy = std::min(m.min_pixel_accuracy, a);
    if (a >= kImageLevelAccuracyThreshold) ++good;
  }
  m.mean_pixel_accuracy = sum / static_cast<double>(m.images);
  m.image_level_accuracy = static_cast<double>(good) / static_cast<double>(m.images);
  m.fps = wall_seconds > 0.0 ? static_cast<double>(m.images) / wall_seconds : 0.0;
  return m;
}

const MaskManifest::Entry* MaskManifest::nearest(double time, double tolerance) const {
  auto it = std::lower_bound(entries.begin(), entries.end(), time,
                             [](const Entry& e, double t) { return e.time < t; });
  const Entry* best = nullptr;
  double best_dt = tolerance;
  for (auto cand : {it, it == entries.begin() ? entries.end() : std::prev(it)}) {
    if (cand == entries.end()) continue;
    const double dt = std::abs(cand->time - time);
    if (dt <= best_dt) {
      best_dt = dt;
      best = &*cand;
    }
  }
  return best;
}

MaskManifest read_mask_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open mask manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("mask manifest " + path.string() + ": " + e.what());
  }
  MaskManifest m;
  try {
    for (const auto& e : j.at("masks")) m.entries.push_back({e.at("time").get<double>(), e.at("file").get<std::string>()});
  } catch (const nlohmann::json::exception& e) {
    throw DataError("mask manifest " + path.string() + ": " + e.what());
  }
  std::stable_sort(m.entries.begin(), m.entries.end(), [](const auto& a, const auto& b) { return a.time < b.time; });
  return m;
}

void write_mask_manifest(const std::filesystem::path& path, const MaskManifest& manifest) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["masks"] = nlohmann::json::array();
  for (const auto& e : manifest.entries) j["masks"].push_back({{"time", e.time}, {"file", e.file}});
  write_text_atomically(path, j.dump(2) + "\n");
}

SkyMask read_mask_png(const std::filesystem::path& path) {
  SkyMask m = SkyMask::from_image(read_png_gray(path));
  m.image_id = path.filename().string();
  return m;
}

void write_mask_png(const std::filesystem::path& path, const SkyMask& mask) {
  write_atomically(path, [&](const std::filesystem::path& tmp) { write_png_gray(tmp, mask.to_image()); });
}

}  // namespace cnav
