#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <gtest/gtest.h>

#include "cnav/errors.hpp"
#include "cnav/scenario.hpp"
#include "cnav/segmentation.hpp"
#include "cnav/sky_ndm.hpp"
#include "oracles.hpp"

namespace cnav {
namespace {

constexpr double kPi = std::numbers::pi;

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("cnav_sky_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

TEST(Fisheye, Examples) {
  const FisheyeModel m;
  for (double az : {0.0, 1.0, 4.0}) {
    const Pixel z = project_satellite({kPi / 2, az}, 0.3, m);
    EXPECT_NEAR(z.u, 512.0, 1e-9);
    EXPECT_NEAR(z.v, 512.0, 1e-9);
  }
  const Pixel n = project_satellite({0.0, 0.0}, 0.0, m);
  EXPECT_NEAR(n.u, 512.0, 1e-9);
  EXPECT_NEAR(n.v, 12.0, 1e-9);
  const Pixel e = project_satellite({0.0, kPi / 2}, 0.0, m);
  EXPECT_NEAR(e.u, 1012.0, 1e-9);
  EXPECT_NEAR(e.v, 512.0, 1e-9);
}

TEST(Fisheye, InverseAndMonotoneRadius) {
  oracle::Rng rng(5);
  FisheyeModel m;
  m.mounting_yaw = 0.2;
  for (int i = 0; i < 2000; ++i) {
    const ElevationAzimuth ea{oracle::uniform(rng, 1e-3, kPi / 2 - 1e-3), oracle::uniform(rng, 0.0, 2 * kPi)};
    const double yaw = oracle::uniform(rng, -4.0, 4.0);
    const auto back = unproject_pixel(project_satellite(ea, yaw, m), yaw, m);
    ASSERT_TRUE(back);
    EXPECT_NEAR(back->elevation, ea.elevation, 1e-9);
    EXPECT_NEAR(wrap_pi(back->azimuth - ea.azimuth), 0.0, 1e-9);
  }
  double prev = 1e9;
  for (double ele = 0.0; ele <= kPi / 2; ele += 0.01) {
    const Pixel p = project_satellite({ele, 1.1}, 0.0, m);
    const double r = std::hypot(p.u - m.cx, p.v - m.cy);
    EXPECT_LT(r, prev);
    if (ele == 0.0) {
      EXPECT_NEAR(r, m.rim_radius, 1e-9);
    }
    prev = r;
  }
  EXPECT_FALSE(unproject_pixel({m.cx + m.rim_radius + 1.0, m.cy}, 0.0, m));
}

std::vector<SatelliteDirection> dome(oracle::Rng& rng, int n) {
  std::vector<SatelliteDirection> out;
  for (int i = 0; i < n; ++i)
    out.push_back({"G" + std::to_string(i), {oracle::uniform(rng, 0.01, kPi / 2), oracle::uniform(rng, 0.0, 2 * kPi)}});
  return out;
}

TEST(Classify, UniformMasks) {
  oracle::Rng rng(9);
  const auto sats = dome(rng, 40);
  const FisheyeModel m;
  const SkyMask sky(1024, 1024, true), wall(1024, 1024, false);
  for (const auto& p : classify_epoch(&sky, sats, 1.0, m).projections) EXPECT_EQ(p.label, ProjectionLabel::Los);
  for (const auto& p : classify_epoch(&wall, sats, 1.0, m).projections) EXPECT_NE(p.label, ProjectionLabel::Los);
  const Classification none = classify_epoch(nullptr, sats, 1.0, m);
  EXPECT_TRUE(none.mask_missing);
  for (const auto& p : none.projections) EXPECT_EQ(p.label, ProjectionLabel::Los);
}

TEST(Classify, HalfSkyMask) {
  SkyMask mask(1024, 1024, false);
  for (int y = 0; y < 512; ++y)
    for (int x = 0; x < 1024; ++x) mask.set(x, y, true);
  const std::vector<SatelliteDirection> sats{{"G01", {kPi / 4, 0.0}}, {"G02", {kPi / 4, kPi}}};
  const auto c = classify_epoch(&mask, sats, 0.0, FisheyeModel{});
  ASSERT_EQ(c.projections.size(), 2u);
  EXPECT_EQ(c.projections[0].label, ProjectionLabel::Los);
  EXPECT_EQ(c.projections[1].label, ProjectionLabel::Nlos);
  EXPECT_FALSE(c.mask_missing);
}

TEST(Classify, InvariantUnderFullTurns) {
  oracle::Rng rng(13);
  const FisheyeModel m;
  SkyMask mask(1024, 1024, false);
  for (int y = 0; y < 1024; ++y)
    for (int x = 0; x < 1024; ++x) mask.set(x, y, ((x / 97) + (y / 61)) % 2 == 0);
  for (int trial = 0; trial < 20; ++trial) {
    auto sats = dome(rng, 30);
    const double yaw = oracle::uniform(rng, 0.0, 2 * kPi);
    const auto a = classify_epoch(&mask, sats, yaw, m);
    for (auto& s : sats) s.ea.azimuth += 2 * kPi;
    const auto b = classify_epoch(&mask, sats, yaw + 2 * kPi, m);
    for (std::size_t i = 0; i < sats.size(); ++i) EXPECT_EQ(a.projections[i].label, b.projections[i].label);
  }
}

TEST(Classify, OutOfImage) {
  // Rim larger than the raster: a low satellite projects outside the image.
  FisheyeModel m;
  m.cx = m.cy = 64;
  m.rim_radius = 100;
  const SkyMask sky(128, 128, true);
  const std::vector<SatelliteDirection> sats{{"G01", {0.05, 0.0}}, {"G02", {1.4, 0.0}}};
  const auto c = classify_epoch(&sky, sats, 0.0, m);
  EXPECT_EQ(c.projections[0].label, ProjectionLabel::OutOfImage);
  EXPECT_EQ(c.projections[1].label, ProjectionLabel::Los);
  EXPECT_EQ(to_signal_label(ProjectionLabel::OutOfImage), SignalLabel::Nlos);
}

TEST(SkyMaskType, SizeAndAccuracy) {
  EXPECT_THROW(SkyMask(63, 64), DataError);
  SkyMask a(100, 100, true), b(100, 100, true);
  EXPECT_DOUBLE_EQ(segmentation_accuracy(a, b), 1.0);
  for (int i = 0; i < 100; ++i) b.set(i, 7, false);
  EXPECT_DOUBLE_EQ(segmentation_accuracy(a, b), 0.99);
  SkyMask c(100, 100, false);
  EXPECT_DOUBLE_EQ(segmentation_accuracy(a, c), 0.0);
  EXPECT_THROW(segmentation_accuracy(a, SkyMask(100, 101)), DataError);
}

TEST(SkyMaskType, Summary) {
  const std::vector<double> acc{1.0, 0.96, 0.5, 0.94};
  const SegmentationMetrics s = summarize_segmentation(acc, 2.0);
  EXPECT_EQ(s.images, 4u);
  EXPECT_DOUBLE_EQ(s.mean_pixel_accuracy, 0.85);
  EXPECT_DOUBLE_EQ(s.min_pixel_accuracy, 0.5);
  EXPECT_DOUBLE_EQ(s.image_level_accuracy, 0.5);
  EXPECT_DOUBLE_EQ(s.fps, 2.0);
}

TEST(MaskIo, PngRoundTripAndThreshold) {
  const auto dir = scratch("png");
  SkyMask m(80, 64, false);
  for (int x = 0; x < 80; ++x) m.set(x, x % 64, true);
  write_mask_png(dir / "m.png", m);
  EXPECT_EQ(read_mask_png(dir / "m.png"), m);
  const GrayImage img = m.to_image();
  for (auto v : img.pixels) EXPECT_TRUE(v == 0 || v == 255);

  GrayImage g(64, 64, 127);
  g.at(3, 4) = 128;
  const SkyMask d = SkyMask::from_image(g);
  EXPECT_TRUE(d.sky(3, 4));
  EXPECT_FALSE(d.sky(0, 0));
}

TEST(MaskIo, ManifestRoundTripAndNearest) {
  const auto dir = scratch("manifest");
  MaskManifest mf;
  mf.entries = {{10.0, "a.png"}, {11.0, "b.png"}, {12.5, "c.png"}};
  write_mask_manifest(dir / "masks.json", mf);
  const MaskManifest back = read_mask_manifest(dir / "masks.json");
  ASSERT_EQ(back.entries.size(), 3u);
  EXPECT_EQ(back.entries[2].file, "c.png");
  EXPECT_EQ(back.entries[1].time, 11.0);
  ASSERT_NE(back.nearest(11.04, 0.1), nullptr);
  EXPECT_EQ(back.nearest(11.04, 0.1)->file, "b.png");
  EXPECT_EQ(back.nearest(11.8, 0.1), nullptr);
  std::ofstream(dir / "bad.json") << "{\"entries\": 3}";
  EXPECT_THROW(read_mask_manifest(dir / "bad.json"), DataError);
}

GrayImage two_valued(int w, int h, std::uint8_t lo, std::uint8_t hi) {
  GrayImage g(w, h, lo);
  for (int y = 0; y < h / 2; ++y)
    for (int x = 0; x < w; ++x) g.at(x, y) = hi;
  return g;
}

TEST(Segmentation, OtsuBimodal) {
  const GrayImage g = two_valued(64, 64, 10, 200);
  const auto t = otsu_threshold(g);
  ASSERT_TRUE(t);
  EXPECT_GT(*t, 10.0);
  EXPECT_LT(*t, 200.0);
  const SkyMask m = segment_baseline(g, SegmentationMethod::Otsu);
  EXPECT_TRUE(m.sky(5, 5));
  EXPECT_FALSE(m.sky(5, 60));

  oracle::Rng rng(17);
  for (int i = 0; i < 50; ++i) {
    const auto lo = static_cast<std::uint8_t>(oracle::uniform(rng, 0, 120));
    const auto hi = static_cast<std::uint8_t>(oracle::uniform(rng, 130, 255));
    const auto ti = otsu_threshold(two_valued(64, 64, lo, hi));
    ASSERT_TRUE(ti);
    EXPECT_GT(*ti, lo);
    EXPECT_LT(*ti, hi);
  }
}

/// Best 2-means partition by exhaustive search over intensity cut points.
std::vector<bool> brute_force_two_means(const GrayImage& g) {
  double best = 1e300;
  int best_cut = 0;
  for (int cut = 0; cut < 255; ++cut) {
    double s[2] = {0, 0}, s2[2] = {0, 0}, n[2] = {0, 0};
    for (auto v : g.pixels) {
      const int k = v > cut;
      s[k] += v;
      s2[k] += double(v) * v;
      n[k] += 1;
    }
    if (n[0] == 0 || n[1] == 0) continue;
    const double sse = s2[0] - s[0] * s[0] / n[0] + s2[1] - s[1] * s[1] / n[1];
    if (sse < best - 1e-9) {
      best = sse;
      best_cut = cut;
    }
  }
  std::vector<bool> out;
  for (auto v : g.pixels) out.push_back(v > best_cut);
  return out;
}

TEST(Segmentation, KMeansMatchesBruteForce) {
  const GrayImage g = two_valued(64, 64, 10, 200);
  const SkyMask m = segment_baseline(g, SegmentationMethod::KMeans);
  const auto ref = brute_force_two_means(g);
  for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_EQ(m.raster()[i] != 0, ref[i]);
  const auto c = kmeans_two_centers(g, {});
  ASSERT_TRUE(c);
  EXPECT_DOUBLE_EQ(c->first, 10.0);
  EXPECT_DOUBLE_EQ(c->second, 200.0);
}

TEST(Segmentation, RegionGrowthDisk) {
  const int n = 128;
  const double radius = 0.7 * 60;
  GrayImage g(n, n, 40);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if (std::hypot(x - 64, y - 64) < radius) g.at(x, y) = 220;
  const SkyMask m = segment_baseline(g, SegmentationMethod::RegionGrowth);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) EXPECT_EQ(m.sky(x, y), g.at(x, y) == 220);
}

TEST(Segmentation, UniformImages) {
  for (auto method : {SegmentationMethod::Otsu, SegmentationMethod::KMeans}) {
    const SkyMask bright = segment_baseline(GrayImage(64, 64, 200), method);
    const SkyMask dark = segment_baseline(GrayImage(64, 64, 50), method);
    EXPECT_EQ(bright, SkyMask(64, 64, true));
    EXPECT_EQ(dark, SkyMask(64, 64, false));
  }
  EXPECT_EQ(segment_baseline(GrayImage(64, 64, 50), SegmentationMethod::RegionGrowth), SkyMask(64, 64, true));
  EXPECT_FALSE(otsu_threshold(GrayImage(64, 64, 50)));
  EXPECT_THROW(segment_baseline(GrayImage(), SegmentationMethod::Otsu), DataError);
  EXPECT_EQ(parse_segmentation_method("region_growth"), SegmentationMethod::RegionGrowth);
  EXPECT_FALSE(parse_segmentation_method("fcn"));
}

TEST(Segmentation, CorpusAccuracy) {
  for (const auto& img : generate_segmentation_corpus(CorpusKind::Bimodal, 10, 128, 4)) {
    EXPECT_GE(segmentation_accuracy(segment_baseline(img.image, SegmentationMethod::Otsu), img.truth), 0.999);
    EXPECT_GE(segmentation_accuracy(segment_baseline(img.image, SegmentationMethod::KMeans), img.truth), 0.999);
  }
  for (const auto& img : generate_segmentation_corpus(CorpusKind::ConnectedSky, 10, 128, 4))
    EXPECT_GE(segmentation_accuracy(segment_baseline(img.image, SegmentationMethod::RegionGrowth), img.truth), 0.999);
}

}  // namespace
}  // namespace cnav
