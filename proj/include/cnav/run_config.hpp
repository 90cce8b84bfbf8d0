#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "cnav/fusion_filter.hpp"
#include "cnav/sky_ndm.hpp"

namespace cnav {

struct DataPaths {
  std::filesystem::path imu;
  std::filesystem::path gnss;
  std::filesystem::path base_gnss;  // required for RTK
  std::filesystem::path tracks;
  std::filesystem::path masks;      // manifest JSON
  std::filesystem::path truth;      // optional
  std::filesystem::path truth_labels;  // optional
};

struct RunConfig {
  GnssMode mode = GnssMode::Spp;
  bool sndm = true;
  DataPaths paths;
  GeodeticPosition anchor;
  std::optional<EcefPosition> base_position;
  InsState initial_state;
  double initial_time = 0.0;
  InitialUncertainty initial_sigma;
  FisheyeModel fisheye;
  ExtrinsicSet extrinsics;
  Vec3 lever_arm = Vec3::Zero();
  StochasticConfig stochastic;
  ProcessNoiseConfig process_noise;
  std::size_t window_size = 20;
  double pixel_noise = 0.5 / 500.0;
  double mask_time_tolerance = 0.1;     // s, GNSS epoch <-> mask epoch
  double gnss_gate_probability = 0.99;
  double vision_gate_probability = 0.95;
  std::uint64_t seed = 0;

  FilterConfig filter_config() const;
};

/// Parses a RunConfig; relative paths resolve against `base_dir`.
/// Throws ConfigError on missing/invalid fields.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
nlohmann::json run_config_to_json(const RunConfig& cfg);
/// As run_config_to_json, with paths under `dir` written relative to it.
nlohmann::json run_config_to_json_relative(const RunConfig& cfg, const std::filesystem::path& dir);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& cfg);

/// Checks referenced paths and mode-required inputs. Throws ConfigError.
void validate_run_config(const RunConfig& cfg);

}  // namespace cnav
