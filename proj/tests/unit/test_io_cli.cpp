#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <gtest/gtest.h>
#include <json.hpp>

#include "cnav/dataset_io.hpp"
#include "cnav/errors.hpp"
#include "cnav/pipeline.hpp"
#include "cnav/run_config.hpp"
#include "cnav/scenario.hpp"
#include "oracles.hpp"

using namespace cnav;
namespace fs = std::filesystem;

namespace {

ScenarioBundle scenario(double duration, std::uint64_t seed, bool perfect = false) {
  TrajectorySpec t;
  t.duration = duration;
  const SceneSpec s = perfect ? SceneSpec::urban_canyon().perfect() : SceneSpec::urban_canyon();
  return generate_scenario(t, s, seed);
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e.what();
  }
  return "<no DataError>";
}

struct CliResult {
  int code;
  std::string output;
};

CliResult cli(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "cli_output.txt";
  const std::string cmd = std::string(CNAV_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

Vec3 final_enu_error(const PipelineResult& r, const Dataset& ds) {
  const TrajectoryPoint& e = r.trajectory.back();
  for (const auto& t : ds.truth)
    if (std::abs(t.time - e.time) < 1e-6) return e.ecef.xyz - t.ecef.xyz;
  ADD_FAILURE() << "no truth at " << e.time;
  return Vec3::Constant(1e9);
}

}  // namespace

TEST(DatasetIo, WriteParseWriteIsIdempotent) {
  const auto dir = oracle::scratch_dir("io_a");
  const auto dir2 = oracle::scratch_dir("io_b");
  const auto b = scenario(20.0, 7);
  write_scenario(dir, b);
  const RunConfig cfg = load_run_config(dir / "config.json");
  const Dataset ds = parse_dataset(cfg);

  ASSERT_EQ(ds.imu.size(), b.dataset.imu.size());
  for (std::size_t i = 0; i < ds.imu.size(); ++i) {
    EXPECT_EQ(ds.imu[i].time, b.dataset.imu[i].time);
    EXPECT_EQ(ds.imu[i].gyro, b.dataset.imu[i].gyro);
    EXPECT_EQ(ds.imu[i].accel, b.dataset.imu[i].accel);
  }
  ASSERT_EQ(ds.gnss.size(), b.dataset.gnss.size());
  for (std::size_t k = 0; k < ds.gnss.size(); ++k) {
    ASSERT_EQ(ds.gnss[k].sats.size(), b.dataset.gnss[k].sats.size());
    ASSERT_EQ(ds.gnss[k].base_sats.size(), b.dataset.gnss[k].base_sats.size());
    for (std::size_t i = 0; i < ds.gnss[k].sats.size(); ++i) {
      const auto& x = ds.gnss[k].sats[i];
      const auto& y = b.dataset.gnss[k].sats[i];
      EXPECT_EQ(x.obs.id, y.obs.id);
      EXPECT_EQ(x.obs.pseudorange, y.obs.pseudorange);
      EXPECT_EQ(x.obs.carrier, y.obs.carrier);
      EXPECT_EQ(x.obs.loss_of_lock, y.obs.loss_of_lock);
      EXPECT_EQ(x.sat.snr, y.sat.snr);
      EXPECT_EQ(x.sat.position.xyz, y.sat.position.xyz);
    }
  }
  EXPECT_EQ(ds.tracks.size(), b.dataset.tracks.size());
  EXPECT_EQ(ds.truth.size(), b.dataset.truth.size());
  EXPECT_EQ(ds.truth_labels.size(), b.dataset.truth_labels.size());
  ASSERT_EQ(ds.masks.size(), b.dataset.masks.size());
  for (const auto& [name, m] : ds.masks) EXPECT_TRUE(m == b.dataset.masks.at(name)) << name;

  write_dataset(dir2, ds);
  auto first = oracle::read_tree(dir);
  first.erase("config.json");
  EXPECT_TRUE(first == oracle::read_tree(dir2));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST(DatasetIo, ConfigRoundTrip) {
  const auto dir = oracle::scratch_dir("io_cfg");
  auto b = scenario(10.0, 2);
  write_scenario(dir, b);
  const RunConfig a = load_run_config(dir / "config.json");
  save_run_config(dir / "copy.json", a);
  const RunConfig c = load_run_config(dir / "copy.json");
  EXPECT_EQ(run_config_to_json(a), run_config_to_json(c));
  fs::remove_all(dir);
}

TEST(DatasetIo, EmptyGnssHasNoEpochs) {
  const auto dir = oracle::scratch_dir("io_empty");
  write_text(dir / "gnss.csv", "time,sat_id,P,L,snr,sat_x,sat_y,sat_z,sat_clk,lambda,iono,tropo,lli\n");
  EXPECT_NE(error_of([&] { read_gnss_csv(dir / "gnss.csv"); }).find("no epochs"), std::string::npos);
  fs::remove_all(dir);
}

TEST(DatasetIo, MissingSnrColumnIsNamed) {
  const auto dir = oracle::scratch_dir("io_snr");
  write_text(dir / "gnss.csv",
             "time,sat_id,P,L,sat_x,sat_y,sat_z,sat_clk,lambda,iono,tropo,lli\n"
             "0,G01,2.1e7,2.1e7,1.5e7,1e7,1.8e7,0,0.19,0,0,0\n");
  EXPECT_NE(error_of([&] { read_gnss_csv(dir / "gnss.csv"); }).find("'snr'"), std::string::npos);
  fs::remove_all(dir);
}

TEST(DatasetIo, MalformedLineReportsFileAndLine) {
  const auto dir = oracle::scratch_dir("io_bad");
  write_text(dir / "imu.csv",
             "# comment\n"
             "time,wx,wy,wz,ax,ay,az\n"
             "0.00,0,0,0,0,0,-9.8\n"
             "0.01,0,abc,0,0,0,-9.8\n");
  const std::string msg = error_of([&] { read_imu_csv(dir / "imu.csv"); });
  EXPECT_NE(msg.find("imu.csv:4:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("'wy'"), std::string::npos) << msg;
  fs::remove_all(dir);
}

TEST(DatasetIo, NonMonotoneTimeRejected) {
  const auto dir = oracle::scratch_dir("io_time");
  write_text(dir / "imu.csv",
             "time,wx,wy,wz,ax,ay,az\n"
             "0.00,0,0,0,0,0,-9.8\n"
             "0.02,0,0,0,0,0,-9.8\n"
             "0.01,0,0,0,0,0,-9.8\n");
  const std::string msg = error_of([&] { read_imu_csv(dir / "imu.csv"); });
  EXPECT_NE(msg.find("non-monotone"), std::string::npos) << msg;
  EXPECT_NE(msg.find(":4:"), std::string::npos) << msg;
  fs::remove_all(dir);
}

TEST(RunConfigCheck, RtkWithoutBaseIsConfigError) {
  const auto dir = oracle::scratch_dir("io_rtk");
  write_scenario(dir, scenario(10.0, 3));
  RunConfig cfg = load_run_config(dir / "config.json");
  cfg.mode = GnssMode::Rtk;
  EXPECT_NO_THROW(validate_run_config(cfg));
  RunConfig no_path = cfg;
  no_path.paths.base_gnss.clear();
  EXPECT_THROW(validate_run_config(no_path), ConfigError);
  EXPECT_THROW(parse_dataset(no_path), ConfigError);
  RunConfig no_pos = cfg;
  no_pos.base_position.reset();
  EXPECT_THROW(validate_run_config(no_pos), ConfigError);
  RunConfig missing = cfg;
  missing.paths.imu = dir / "nope.csv";
  EXPECT_THROW(validate_run_config(missing), ConfigError);
  fs::remove_all(dir);
}

TEST(RunConfigCheck, InvalidFieldsAreConfigErrors) {
  const auto dir = oracle::scratch_dir("io_fields");
  write_scenario(dir, scenario(10.0, 3));
  const nlohmann::json good = nlohmann::json::parse(slurp(dir / "config.json"));
  EXPECT_NO_THROW(run_config_from_json(good, dir));
  auto bad_mode = good;
  bad_mode["mode"] = "ppp";
  EXPECT_THROW(run_config_from_json(bad_mode, dir), ConfigError);
  auto no_paths = good;
  no_paths.erase("paths");
  EXPECT_THROW(run_config_from_json(no_paths, dir), ConfigError);
  auto bad_gate = run_config_from_json(good, dir);
  bad_gate.gnss_gate_probability = 1.0;
  EXPECT_THROW(run_config_from_json(run_config_to_json(bad_gate), dir), ConfigError);
  fs::remove_all(dir);
}

TEST(Pipeline, SameInputsGiveIdenticalBundles) {
  const auto a = oracle::scratch_dir("pl_a");
  const auto b = oracle::scratch_dir("pl_b");
  const auto s = scenario(30.0, 9);
  write_result_bundle(a, run_pipeline(s.config, s.dataset));
  write_result_bundle(b, run_pipeline(s.config, s.dataset));
  const auto ta = oracle::read_tree(a);
  EXPECT_TRUE(ta.contains("trajectory.csv"));
  EXPECT_TRUE(ta.contains("updates.jsonl"));
  EXPECT_TRUE(ta.contains("error_report.json"));
  EXPECT_TRUE(ta.contains("plot_errors.csv"));
  EXPECT_TRUE(ta.contains("plot_sats.csv"));
  EXPECT_TRUE(ta == oracle::read_tree(b));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Pipeline, AllSkyMasksMakeSndmIrrelevant) {
  auto s = scenario(60.0, 13);
  for (auto& [name, m] : s.dataset.masks) m = SkyMask(m.width(), m.height(), true);
  for (GnssMode mode : {GnssMode::Spp, GnssMode::Rtk}) {
    RunConfig on = s.config, off = s.config;
    on.mode = off.mode = mode;
    on.sndm = true;
    off.sndm = false;
    const auto ra = run_pipeline(on, s.dataset);
    const auto rb = run_pipeline(off, s.dataset);
    ASSERT_EQ(ra.trajectory.size(), rb.trajectory.size());
    for (std::size_t i = 0; i < ra.trajectory.size(); ++i) {
      ASSERT_EQ(ra.trajectory[i].ecef.xyz, rb.trajectory[i].ecef.xyz) << i;
      ASSERT_EQ(ra.trajectory[i].velocity, rb.trajectory[i].velocity) << i;
      ASSERT_EQ(ra.trajectory[i].attitude.quaternion().coeffs(), rb.trajectory[i].attitude.quaternion().coeffs()) << i;
    }
  }
}

TEST(Pipeline, ZeroNoiseConverges) {
  const auto s = scenario(60.0, 21, true);
  for (GnssMode mode : {GnssMode::Spp, GnssMode::Rtk}) {
    RunConfig c = s.config;
    c.mode = mode;
    const auto r = run_pipeline(c, s.dataset);
    EXPECT_LT(final_enu_error(r, s.dataset).norm(), 1e-3) << to_string(mode);
  }
}

TEST(Pipeline, RtkAbsorbsConstantCarrierBias) {
  auto s = scenario(60.0, 22, true);
  for (auto& e : s.dataset.gnss)
    for (auto& so : e.sats) so.obs.carrier += 0.05 * static_cast<double>(so.obs.id.back() - '0');
  RunConfig c = s.config;
  c.mode = GnssMode::Rtk;
  const auto r = run_pipeline(c, s.dataset);
  EXPECT_LT(final_enu_error(r, s.dataset).norm(), 1e-3);
}

TEST(Cli, UnknownFlagIsUsageError) {
  const auto dir = oracle::scratch_dir("cli_usage");
  EXPECT_EQ(cli("run --bogus", dir).code, 1);
  EXPECT_EQ(cli("", dir).code, 1);
  EXPECT_EQ(cli("run --config " + (dir / "missing.json").string(), dir).code, 1);
  fs::remove_all(dir);
}

TEST(Cli, EvaluateIdenticalIsZero) {
  const auto dir = oracle::scratch_dir("cli_eval");
  write_trajectory_csv(dir / "t.csv", scenario(20.0, 1).dataset.truth);
  const auto r = cli("evaluate " + (dir / "t.csv").string() + " " + (dir / "t.csv").string() + " --out " +
                         (dir / "report.json").string(),
                     dir);
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("RMSE E 0.0000 N 0.0000 U 0.0000"), std::string::npos) << r.output;
  const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(j["rmse"]["e"].get<double>(), 0.0);
  fs::remove_all(dir);
}

TEST(Cli, AbPrintsImprovementTriple) {
  const auto dir = oracle::scratch_dir("cli_ab");
  const auto r = cli("ab --baseline-rmse 3.24 2.14 3.39 --test-rmse 2.07 1.51 2.47", dir);
  EXPECT_EQ(r.code, 0) << r.output;
  EXPECT_NE(r.output.find("(36.1%, 29.4%, 27.1%)"), std::string::npos) << r.output;
  fs::remove_all(dir);
}

TEST(Cli, SimulateRunAndAb) {
  const auto dir = oracle::scratch_dir("cli_run");
  const std::string d = dir.string();
  ASSERT_EQ(cli("simulate --out " + d + "/data --duration 20 --seed 4", dir).code, 0);
  const auto on = cli("run --config " + d + "/data/config.json --sndm on --out " + d + "/on", dir);
  EXPECT_EQ(on.code, 0) << on.output;
  const auto off = cli("run --config " + d + "/data/config.json --sndm off --out " + d + "/off", dir);
  EXPECT_EQ(off.code, 0) << off.output;
  const auto ab = cli("ab " + d + "/off " + d + "/on", dir);
  EXPECT_EQ(ab.code, 0) << ab.output;
  EXPECT_NE(ab.output.find("improvement ("), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, BadDataExitsTwo) {
  const auto dir = oracle::scratch_dir("cli_bad");
  write_scenario(dir / "data", scenario(10.0, 5));
  write_text(dir / "data" / "imu.csv", "time,wx,wy,wz,ax,ay,az\n0,0,0,0,0,0,x\n");
  const auto r = cli("run --config " + (dir / "data" / "config.json").string() + " --out " +
                         (dir / "out").string(),
                     dir);
  EXPECT_EQ(r.code, 2) << r.output;
  EXPECT_NE(r.output.find("imu.csv:2:"), std::string::npos) << r.output;
  fs::remove_all(dir);
}

TEST(Cli, SegmentReportsMetrics) {
  const auto dir = oracle::scratch_dir("cli_seg");
  const std::string d = dir.string();
  ASSERT_EQ(cli("simulate --corpus bimodal --count 6 --size 128 --seed 3 --out " + d + "/corpus", dir).code, 0);
  const auto r =
      cli("segment --images " + d + "/corpus --truth " + d + "/corpus/truth --method otsu --out " + d + "/masks", dir);
  EXPECT_EQ(r.code, 0) << r.output;
  const auto m = nlohmann::json::parse(slurp(dir / "masks" / "metrics.json"));
  EXPECT_GE(m["pixel_accuracy_min"].get<double>(), 0.999);
  EXPECT_EQ(m["image_level_accuracy"].get<double>(), 1.0);
  EXPECT_GT(m["fps"].get<double>(), 0.0);
  EXPECT_EQ(read_mask_manifest(dir / "masks" / "manifest.json").entries.size(), 6u);
  fs::remove_all(dir);
}
