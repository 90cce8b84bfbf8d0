#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cnav/atomic_file.hpp"
#include "cnav/dataset_io.hpp"
#include "cnav/errors.hpp"
#include "cnav/evaluation.hpp"
#include "cnav/pipeline.hpp"
#include "cnav/scenario.hpp"
#include "cnav/segmentation.hpp"

namespace fs = std::filesystem;
using namespace cnav;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kDataError = 2, kNumerical = 3 };

std::string percent(const std::optional<double>& v) {
  if (!v) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", *v);
  return buf;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(p.string() + ": " + e.what());
  }
}

struct SimulateArgs {
  fs::path out;
  std::uint64_t seed = 1;
  double duration = 300.0;
  std::string scene = "urban";
  std::string path = "grid";
  bool perfect = false;
  double nlos_bias = 15.0;
  std::string mode = "spp";
  std::string sndm = "on";
  std::string corpus;
  int count = 200;
  int size = 128;
};

int simulate(const SimulateArgs& a) {
  if (!a.corpus.empty()) {
    const CorpusKind kind = a.corpus == "bimodal" ? CorpusKind::Bimodal : CorpusKind::ConnectedSky;
    write_segmentation_corpus(a.out, generate_segmentation_corpus(kind, a.count, a.size, a.seed));
    std::cout << "wrote " << a.count << " " << a.corpus << " images to " << a.out.string() << "\n";
    return kOk;
  }
  TrajectorySpec traj;
  traj.duration = a.duration;
  traj.path = a.path == "figure8" ? PathKind::FigureEight : PathKind::CityGrid;
  SceneSpec scene = a.scene == "open" ? SceneSpec::open_sky() : SceneSpec::urban_canyon();
  scene.nlos_pseudorange_bias = a.nlos_bias;
  if (a.perfect) scene = scene.perfect();
  ScenarioBundle b = generate_scenario(traj, scene, a.seed);
  b.config.mode = a.mode == "rtk" ? GnssMode::Rtk : GnssMode::Spp;
  b.config.sndm = a.sndm == "on";
  write_scenario(a.out, b);
  std::cout << "wrote scenario (" << b.dataset.gnss.size() << " GNSS epochs, " << b.dataset.imu.size()
            << " IMU samples) to " << a.out.string() << "\n";
  return kOk;
}

struct RunArgs {
  fs::path config;
  std::string mode;
  std::string sndm;
  std::optional<std::uint64_t> seed;
  fs::path out = "result";
};

int run(const RunArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (a.mode == "spp") cfg.mode = GnssMode::Spp;
  if (a.mode == "rtk") cfg.mode = GnssMode::Rtk;
  if (!a.sndm.empty()) cfg.sndm = a.sndm == "on";
  if (a.seed) cfg.seed = *a.seed;
  validate_run_config(cfg);
  const Dataset ds = parse_dataset(cfg);
  const PipelineResult r = run_pipeline(cfg, ds);
  write_result_bundle(a.out, r);
  std::cout << "mode " << to_string(cfg.mode) << ", S-NDM " << (cfg.sndm ? "on" : "off") << ": "
            << r.trajectory.size() << " epochs";
  if (r.error) {
    std::printf("; RMSE E %.3f N %.3f U %.3f m", r.error->rmse.x(), r.error->rmse.y(), r.error->rmse.z());
    std::cout << std::flush;
  }
  if (r.masks_missing > 0) std::cout << "; " << r.masks_missing << " epochs without a mask";
  std::cout << "\nwrote " << a.out.string() << "\n";
  return kOk;
}

struct SegmentArgs {
  fs::path images;
  fs::path out;
  fs::path truth;
  std::string method = "otsu";
};

int segment(const SegmentArgs& a) {
  const auto method = parse_segmentation_method(a.method);
  if (!method) throw ConfigError("unknown segmentation method '" + a.method + "'");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.images))
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError("no PNG images in " + a.images.string());
  fs::create_directories(a.out);

  std::vector<GrayImage> images;
  images.reserve(files.size());
  for (const auto& f : files) images.push_back(read_png_gray(f));
  std::vector<SkyMask> masks;
  masks.reserve(images.size());
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& img : images) masks.push_back(segment_baseline(img, *method));
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  MaskManifest manifest;
  std::vector<double> accuracies;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string name = files[i].filename().string();
    write_mask_png(a.out / name, masks[i]);
    manifest.entries.push_back({static_cast<double>(i), name});
    if (!a.truth.empty()) accuracies.push_back(segmentation_accuracy(masks[i], read_mask_png(a.truth / name)));
  }
  write_mask_manifest(a.out / "manifest.json", manifest);

  nlohmann::json metrics = {{"schema_version", 1},
                            {"method", std::string(to_string(*method))},
                            {"images", files.size()},
                            {"wall_seconds", wall},
                            {"fps", wall > 0.0 ? files.size() / wall : 0.0},
                            {"fps_conditions", "single thread, decode excluded, " +
                                                   std::to_string(images.front().width) + "x" +
                                                   std::to_string(images.front().height) + " px"}};
  std::printf("method %s: %zu images, %.1f FPS\n", a.method.c_str(), files.size(),
              wall > 0.0 ? files.size() / wall : 0.0);
  if (!accuracies.empty()) {
    const SegmentationMetrics m = summarize_segmentation(accuracies, wall);
    metrics["pixel_accuracy_mean"] = m.mean_pixel_accuracy;
    metrics["pixel_accuracy_min"] = m.min_pixel_accuracy;
    metrics["image_level_accuracy"] = m.image_level_accuracy;
    metrics["image_level_threshold"] = kImageLevelAccuracyThreshold;
    metrics["pixel_accuracy"] = accuracies;
    std::printf("pixel accuracy mean %.6f min %.6f; image-level accuracy %.4f (threshold %.2f)\n",
                m.mean_pixel_accuracy, m.min_pixel_accuracy, m.image_level_accuracy,
                kImageLevelAccuracyThreshold);
  }
  write_text_atomically(a.out / "metrics.json", metrics.dump(2) + "\n");
  return kOk;
}

int evaluate(const fs::path& estimate, const fs::path& truth, const fs::path& out) {
  const ErrorReport r = compute_rmse(read_trajectory_csv(estimate), read_trajectory_csv(truth));
  std::printf("matched %zu epochs; RMSE E %.4f N %.4f U %.4f m (horizontal %.4f)\n", r.matched, r.rmse.x(),
              r.rmse.y(), r.rmse.z(), r.horizontal_rmse());
  if (!out.empty()) write_text_atomically(out, error_report_to_json(r).dump(2) + "\n");
  return kOk;
}

Vec3 parse_triple(const std::vector<double>& v, const char* what) {
  if (v.size() != 3) throw ConfigError(std::string(what) + " needs three values E N U");
  return Vec3(v[0], v[1], v[2]);
}

int ab(const fs::path& baseline_dir, const fs::path& test_dir, const std::vector<double>& baseline_rmse,
       const std::vector<double>& test_rmse) {
  Vec3 base, test;
  if (!baseline_rmse.empty() || !test_rmse.empty()) {
    base = parse_triple(baseline_rmse, "--baseline-rmse");
    test = parse_triple(test_rmse, "--test-rmse");
  } else {
    if (baseline_dir.empty() || test_dir.empty()) throw ConfigError("ab needs two result bundles");
    base = error_report_from_json(read_json(baseline_dir / "error_report.json")).rmse;
    test = error_report_from_json(read_json(test_dir / "error_report.json")).rmse;
  }
  const Improvement imp = ab_compare(base, test);
  std::printf("axis  baseline    test  improvement\n");
  const char* axes[] = {"E", "N", "U"};
  for (int i = 0; i < 3; ++i)
    std::printf("%-4s %9.4f %8.4f  %s\n", axes[i], base(i), test(i),
                percent(imp[static_cast<std::size_t>(i)]).c_str());
  std::printf("improvement (%s, %s, %s)\n", percent(imp[0]).c_str(), percent(imp[1]).c_str(),
              percent(imp[2]).c_str());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"canyon_nav: GNSS/INS/vision fusion with sky-mask NLOS mitigation"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "generate a synthetic urban-canyon dataset or segmentation corpus");
  s->add_option("--out", sim.out, "output directory")->required();
  s->add_option("--seed", sim.seed, "random seed");
  s->add_option("--duration", sim.duration, "seconds");
  s->add_option("--scene", sim.scene, "urban | open")->check(CLI::IsMember({"urban", "open"}));
  s->add_option("--path", sim.path, "grid | figure8")->check(CLI::IsMember({"grid", "figure8"}));
  s->add_flag("--perfect", sim.perfect, "zero every noise, bias, and initial error");
  s->add_option("--nlos-bias", sim.nlos_bias, "NLOS pseudorange bias (m)");
  s->add_option("--mode", sim.mode, "mode written to config.json")->check(CLI::IsMember({"spp", "rtk"}));
  s->add_option("--sndm", sim.sndm, "S-NDM toggle written to config.json")->check(CLI::IsMember({"on", "off"}));
  s->add_option("--corpus", sim.corpus, "write a segmentation corpus instead: bimodal | connected")
      ->check(CLI::IsMember({"bimodal", "connected"}));
  s->add_option("--count", sim.count, "corpus images");
  s->add_option("--size", sim.size, "corpus image size (px)");

  RunArgs runa;
  std::uint64_t seed_value = 0;
  auto* r = app.add_subcommand("run", "run the filter on a dataset");
  r->add_option("--config", runa.config, "config.json")->required()->check(CLI::ExistingFile);
  r->add_option("--mode", runa.mode, "override: spp | rtk")->check(CLI::IsMember({"spp", "rtk"}));
  r->add_option("--sndm", runa.sndm, "override: on | off")->check(CLI::IsMember({"on", "off"}));
  auto* seed_opt = r->add_option("--seed", seed_value, "override the recorded seed");
  r->add_option("--out", runa.out, "result directory");

  SegmentArgs seg;
  auto* g = app.add_subcommand("segment", "classical sky segmentation of a PNG directory");
  g->add_option("--images", seg.images, "input directory")->required()->check(CLI::ExistingDirectory);
  g->add_option("--method", seg.method, "otsu | kmeans | region_growth")
      ->check(CLI::IsMember({"otsu", "kmeans", "region_growth"}));
  g->add_option("--out", seg.out, "mask directory")->required();
  g->add_option("--truth", seg.truth, "truth mask directory (same file names)")->check(CLI::ExistingDirectory);

  fs::path est, truth, report_out;
  auto* e = app.add_subcommand("evaluate", "RMSE of a trajectory against truth");
  e->add_option("estimate", est, "estimate trajectory CSV")->required()->check(CLI::ExistingFile);
  e->add_option("truth", truth, "truth trajectory CSV")->required()->check(CLI::ExistingFile);
  e->add_option("--out", report_out, "write the ErrorReport JSON here");

  fs::path base_dir, test_dir;
  std::vector<double> base_rmse, test_rmse;
  auto* a = app.add_subcommand("ab", "improvement of a test run over a baseline run");
  a->add_option("baseline", base_dir, "baseline result bundle");
  a->add_option("test", test_dir, "test result bundle");
  a->add_option("--baseline-rmse", base_rmse, "baseline E N U RMSE instead of a bundle")->expected(3);
  a->add_option("--test-rmse", test_rmse, "test E N U RMSE instead of a bundle")->expected(3);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return simulate(sim);
    if (*r) {
      if (*seed_opt) runa.seed = seed_value;
      return run(runa);
    }
    if (*g) return segment(seg);
    if (*e) return evaluate(est, truth, report_out);
    if (*a) return ab(base_dir, test_dir, base_rmse, test_rmse);
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kDataError;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kDataError;
  } catch (const NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return kNumerical;
  } catch (const std::filesystem::filesystem_error& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kDataError;
  }
  return kUsage;
}
