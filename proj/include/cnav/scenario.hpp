#pragma once

#include <cstdint>
#include <vector>

#include "cnav/dataset.hpp"
#include "cnav/run_config.hpp"

namespace cnav {

/// Elevation cutoff as a function of azimuth relative to the street axis,
/// piecewise constant over azimuth sectors.
struct Skyline {
  struct Sector {
    double begin = 0.0;  // rad, relative azimuth, [0, 2pi)
    double end = 0.0;    // exclusive; may wrap past 2pi
    double cutoff = 0.0;
  };
  std::vector<Sector> sectors;
  double default_cutoff = 0.0;

  double cutoff(double relative_azimuth) const;

  static Skyline constant(double cutoff);
  /// Street canyon: `along_cutoff` within +-half_opening of the street axis
  /// (both directions), `side_cutoff` elsewhere.
  static Skyline canyon(double side_cutoff, double along_cutoff, double half_opening);
};

enum class PathKind { CityGrid, FigureEight };

struct TrajectorySpec {
  double duration = 300.0;
  PathKind path = PathKind::CityGrid;
  double speed = 8.0;               // m/s cruise
  double speed_variation = 1.5;     // m/s amplitude of the speed oscillation
  double speed_period = 37.0;       // s
  double leg_duration = 30.0;       // s per straight city-grid leg
  double turn_duration = 6.0;       // s per 90 degree turn
  double figure_eight_period = 60.0;
  double imu_rate = 100.0;
  double gnss_rate = 1.0;
  double camera_rate = 10.0;
  double mask_rate = 1.0;
};

struct SceneSpec {
  /// Skyline per street segment; segments cycle through this list.
  std::vector<Skyline> segments;
  double nlos_pseudorange_bias = 15.0;  // m
  double nlos_carrier_bias = 0.5;       // m, amplitude of the time-varying NLOS carrier error
  double nlos_noise_scale = 2.0;        // NLOS noise std relative to the LOS model
  double nlos_snr_drop = 5.0;           // dB-Hz
  double nlos_slip_probability = 0.1;   // per epoch
  double pseudorange_sigma = 0.3;
  double carrier_sigma = 0.03;
  bool imu_noise = true;
  bool imu_bias = true;
  double pixel_sigma = 0.5;       // px
  double focal_length = 500.0;    // px
  double feature_min_range = 5.0;
  double feature_max_range = 50.0;
  int max_features = 30;
  int min_track_length = 5;
  int max_track_length = 15;
  double elevation_mask = 10.0 * 0.017453292519943295;
  int mask_size = 256;
  double mask_rim_radius = 120.0;
  double initial_position_error = 0.3;   // m, 1-sigma
  double initial_velocity_error = 0.05;  // m/s
  double initial_attitude_error = 0.003; // rad
  ProcessNoiseConfig imu;

  /// Default urban scenario: street canyons of varying depth.
  static SceneSpec urban_canyon();
  static SceneSpec open_sky();
  /// All noises and biases zeroed.
  SceneSpec perfect() const;
};

struct ScenarioBundle {
  Dataset dataset;
  RunConfig config;  // paths relative to the bundle directory
};

/// Deterministic in (specs, seed). Throws DataError when an epoch has no
/// visible satellite.
ScenarioBundle generate_scenario(const TrajectorySpec& traj, const SceneSpec& scene, std::uint64_t seed);

/// Writes every stream plus config.json under `dir`.
void write_scenario(const std::filesystem::path& dir, const ScenarioBundle& bundle);

/// Synthetic sky-view segmentation corpus.
enum class CorpusKind { Bimodal, ConnectedSky };

struct CorpusImage {
  GrayImage image;
  SkyMask truth;
};

std::vector<CorpusImage> generate_segmentation_corpus(CorpusKind kind, int count, int size, std::uint64_t seed);

/// Writes image_XXXX.png and truth/image_XXXX.png under `dir`.
void write_segmentation_corpus(const std::filesystem::path& dir, const std::vector<CorpusImage>& corpus);

/// Nominal 24-slot constellation position of satellite `slot` (0..23) at time t.
EcefPosition constellation_position(int slot, double time, double phase_offset);

}  // namespace cnav
