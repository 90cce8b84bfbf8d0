#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cnav/geodesy.hpp"
#include "cnav/gnss_models.hpp"
#include "cnav/ins_mech.hpp"
#include "cnav/msckf_vision.hpp"
#include "cnav/sky_ndm.hpp"

namespace cnav {

/// One pose of a trajectory (estimate or ground truth).
struct TrajectoryPoint {
  double time = 0.0;
  EcefPosition ecef;
  Vec3 enu = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();  // ENU
  Attitude attitude;
};

/// One row of the feature-track stream.
struct TrackRow {
  double time = 0.0;
  std::int64_t clone_id = 0;
  std::int64_t feature_id = 0;
  Eigen::Vector4d uv = Eigen::Vector4d::Zero();
};

/// All stereo observations captured at one camera frame.
struct CameraFrame {
  double time = 0.0;
  std::int64_t clone_id = 0;
  std::vector<std::pair<std::int64_t, Eigen::Vector4d>> features;
};

/// Groups time-sorted track rows into frames.
std::vector<CameraFrame> group_frames(const std::vector<TrackRow>& rows);

/// Generator-side truth label of one satellite at one epoch.
struct TruthLabel {
  double time = 0.0;
  SatId id;
  ElevationAzimuth ea;
  SignalLabel label = SignalLabel::Los;
  double heading = 0.0;  // vehicle heading used to render the mask
};

/// In-memory dataset: every stream the pipeline consumes.
struct Dataset {
  std::vector<ImuSample> imu;
  std::vector<GnssEpoch> gnss;  // rover epochs; base observations attached for RTK
  std::vector<TrackRow> tracks;
  MaskManifest mask_manifest;
  std::map<std::string, SkyMask> masks;  // keyed by manifest file name
  std::vector<TrajectoryPoint> truth;
  std::vector<TruthLabel> truth_labels;
  std::optional<EcefPosition> base_position;
};

}  // namespace cnav
