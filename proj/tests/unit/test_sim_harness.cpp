#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cnav/errors.hpp"
#include "cnav/evaluation.hpp"
#include "cnav/pipeline.hpp"
#include "cnav/scenario.hpp"
#include "oracles.hpp"

using namespace cnav;

namespace {

TrajectorySpec short_run(double duration) {
  TrajectorySpec t;
  t.duration = duration;
  return t;
}

const GeodeticPosition kAnchor{0.5340, 1.9897, 50.0};

std::vector<TrajectoryPoint> line_east(int n, const Vec3& offset = Vec3::Zero()) {
  std::vector<TrajectoryPoint> out;
  for (int i = 0; i < n; ++i) {
    TrajectoryPoint p;
    p.time = i;
    p.enu = Vec3(2.0 * i, 0.5 * i, 0.0) + offset;
    p.ecef = enu_to_ecef(p.enu, kAnchor);
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST(Scenario, OpenSkyHasNoNlosAndAllSkyMasks) {
  const auto b = generate_scenario(short_run(20.0), SceneSpec::open_sky(), 3);
  ASSERT_FALSE(b.dataset.truth_labels.empty());
  for (const auto& l : b.dataset.truth_labels) EXPECT_EQ(l.label, SignalLabel::Los);
  ASSERT_FALSE(b.dataset.masks.empty());
  const FisheyeModel& f = b.config.fisheye;
  // Inside the rim every pixel is sky.
  for (const auto& [name, mask] : b.dataset.masks)
    for (int y = 0; y < mask.height(); ++y)
      for (int x = 0; x < mask.width(); ++x) {
        if (std::hypot(x - f.cx, y - f.cy) < f.rim_radius - 1.0) {
          ASSERT_TRUE(mask.sky(x, y)) << name;
        }
      }
}

TEST(Scenario, ZenithCutoffMakesEverySatelliteNlos) {
  SceneSpec s = SceneSpec::urban_canyon();
  s.segments = {Skyline::constant(std::numbers::pi / 2)};
  const auto b = generate_scenario(short_run(15.0), s, 4);
  ASSERT_FALSE(b.dataset.truth_labels.empty());
  for (const auto& l : b.dataset.truth_labels) EXPECT_EQ(l.label, SignalLabel::Nlos);
}

TEST(Scenario, SameSeedGivesByteIdenticalBundle) {
  const auto a_dir = oracle::scratch_dir("det_a");
  const auto b_dir = oracle::scratch_dir("det_b");
  const auto c_dir = oracle::scratch_dir("det_c");
  write_scenario(a_dir, generate_scenario(short_run(20.0), SceneSpec::urban_canyon(), 11));
  write_scenario(b_dir, generate_scenario(short_run(20.0), SceneSpec::urban_canyon(), 11));
  write_scenario(c_dir, generate_scenario(short_run(20.0), SceneSpec::urban_canyon(), 12));
  const auto a = oracle::read_tree(a_dir);
  const auto b = oracle::read_tree(b_dir);
  EXPECT_GT(a.size(), 5u);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == oracle::read_tree(c_dir));
  for (const auto& d : {a_dir, b_dir, c_dir}) std::filesystem::remove_all(d);
}

TEST(Scenario, RejectsInvalidSpecs) {
  SceneSpec bad_cut = SceneSpec::urban_canyon();
  bad_cut.segments = {Skyline::constant(1.6)};
  EXPECT_THROW(generate_scenario(short_run(10.0), bad_cut, 1), DataError);
  SceneSpec bad_bias = SceneSpec::urban_canyon();
  bad_bias.nlos_pseudorange_bias = -1.0;
  EXPECT_THROW(generate_scenario(short_run(10.0), bad_bias, 1), DataError);
  EXPECT_THROW(generate_scenario(short_run(0.0), SceneSpec::urban_canyon(), 1), DataError);
  TrajectorySpec bad_rate = short_run(10.0);
  bad_rate.gnss_rate = 0.0;
  EXPECT_THROW(generate_scenario(bad_rate, SceneSpec::urban_canyon(), 1), DataError);
}

TEST(Scenario, NoiseFreeLabelsRecoveredFromMasks) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto b = generate_scenario(short_run(60.0), SceneSpec::urban_canyon().perfect(), seed);
    const auto t = oracle::tally_labels(b.dataset, b.config.fisheye);
    EXPECT_EQ(t.no_mask, 0u);
    EXPECT_GT(t.in_dome, 100u);
    EXPECT_EQ(t.agree, t.in_dome) << "seed " << seed;
  }
}

TEST(Scenario, NoiseFreePipelineCountsMatchTruth) {
  // End to end: the filter's own heading and position drive the lookup.
  const auto b = generate_scenario(short_run(60.0), SceneSpec::urban_canyon().perfect(), 5);
  const auto r = run_pipeline(b.config, b.dataset);
  std::map<double, std::pair<std::size_t, std::size_t>> truth;
  for (const auto& l : b.dataset.truth_labels)
    (l.label == SignalLabel::Los ? truth[l.time].first : truth[l.time].second)++;
  ASSERT_EQ(r.satellites.size(), truth.size());
  for (const auto& s : r.satellites) {
    EXPECT_EQ(s.los, truth[s.time].first) << s.time;
    EXPECT_EQ(s.nlos + s.out_of_image, truth[s.time].second) << s.time;
  }
}

TEST(Scenario, NlosBiasIncreasesBaselineError) {
  double last = 0.0;
  for (double bias : {5.0, 15.0, 30.0}) {
    SceneSpec s = SceneSpec::urban_canyon();
    s.nlos_pseudorange_bias = bias;
    const auto b = generate_scenario(TrajectorySpec{}, s, 1);
    RunConfig c = b.config;
    c.mode = GnssMode::Spp;
    c.sndm = false;
    const double h = run_pipeline(c, b.dataset).error->horizontal_rmse();
    EXPECT_GT(h, last) << "bias " << bias;
    last = h;
  }
}

TEST(Rmse, IdenticalIsZero) {
  const auto t = line_east(20);
  const auto r = compute_rmse(t, t);
  EXPECT_EQ(r.matched, 20u);
  EXPECT_LT(r.rmse.norm(), 1e-9);
}

TEST(Rmse, ConstantEastOffset) {
  const auto r = compute_rmse(line_east(20, Vec3(1.0, 0.0, 0.0)), line_east(20));
  EXPECT_NEAR(r.rmse.x(), 1.0, 1e-8);
  EXPECT_NEAR(r.rmse.y(), 0.0, 1e-8);
  EXPECT_NEAR(r.rmse.z(), 0.0, 1e-8);
}

TEST(Rmse, AlternatingThreeAndFour) {
  const auto truth = line_east(40);
  auto est = truth;
  const double e[4] = {3.0, -3.0, 4.0, -4.0};
  for (std::size_t i = 0; i < est.size(); ++i) {
    est[i].enu.x() += e[i % 4];
    est[i].ecef = enu_to_ecef(est[i].enu, kAnchor);
  }
  const auto r = compute_rmse(est, truth);
  EXPECT_NEAR(r.rmse.x(), 3.5355339, 1e-7);
  EXPECT_NEAR(r.rmse.x(), std::sqrt(12.5), 1e-8);
}

TEST(Rmse, MatchesWithinOneMillisecondOnly) {
  const auto truth = line_east(30);
  auto est = truth;
  for (std::size_t i = 0; i < est.size(); ++i) est[i].time += (i < 9 ? 0.0009 : 0.002);
  EXPECT_THROW(compute_rmse(est, truth), DataError);
  est = truth;
  for (std::size_t i = 0; i < est.size(); ++i) est[i].time += (i < 10 ? 0.0009 : 0.002);
  EXPECT_EQ(compute_rmse(est, truth).matched, 10u);
}

TEST(AbCompare, PublishedRmseTriples) {
  auto spp = ab_compare(Vec3(3.24, 2.14, 3.39), Vec3(2.07, 1.51, 2.47));
  EXPECT_NEAR(*spp[0], 36.1, 0.05);
  EXPECT_NEAR(*spp[1], 29.4, 0.05);
  EXPECT_NEAR(*spp[2], 27.1, 0.05);
  auto rtk = ab_compare(Vec3(0.21, 0.13, 0.36), Vec3(0.16, 0.11, 0.27));
  EXPECT_NEAR(*rtk[0], 23.8, 0.05);
  EXPECT_NEAR(*rtk[1], 15.4, 0.05);
  EXPECT_NEAR(*rtk[2], 25.0, 0.05);
}

TEST(AbCompare, IdenticalAndZeroBaseline) {
  const auto same = ab_compare(Vec3(1.0, 2.0, 3.0), Vec3(1.0, 2.0, 3.0));
  for (const auto& v : same) EXPECT_EQ(*v, 0.0);
  const auto z = ab_compare(Vec3(0.0, 1.0, 1.0), Vec3(0.5, 0.5, 1.5));
  EXPECT_FALSE(z[0].has_value());
  EXPECT_DOUBLE_EQ(*z[1], 50.0);
  EXPECT_DOUBLE_EQ(*z[2], -50.0);
}
