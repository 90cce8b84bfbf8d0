#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "cnav/geodesy.hpp"
#include "cnav/ins_mech.hpp"

namespace cnav {

/// Snapshot of the left-camera pose kept in the sliding window.
struct CameraClone {
  std::int64_t id = 0;
  double time = 0.0;
  Attitude attitude;  // R^n_{c0}
  Vec3 position = Vec3::Zero();
};

/// Camera-to-IMU and stereo extrinsics.
struct ExtrinsicSet {
  Mat3 rot_body_cam = Mat3::Identity();  // R^b_c: left-camera axes expressed in body
  Vec3 pos_body_cam = Vec3::Zero();      // p^b_c: left-camera origin in body
  Mat3 rot_left_right = Mat3::Identity();  // right-camera axes expressed in the left-camera frame
  Vec3 pos_left_right = Vec3(0.12, 0.0, 0.0);  // right-camera origin in the left-camera frame

  /// Forward-looking stereo rig on a vehicle with body x forward, z up.
  static ExtrinsicSet forward_stereo(const Vec3& lever, double baseline);
};

struct StereoObservation {
  std::int64_t clone_id = 0;
  Eigen::Vector4d uv = Eigen::Vector4d::Zero();  // (u0, v0, u1, v1) normalized
};

struct FeatureTrack {
  std::int64_t id = 0;
  std::vector<StereoObservation> observations;
};

struct TriangulatedFeature {
  Vec3 position = Vec3::Zero();
  bool converged = false;
  double reprojection_rms = 0.0;
};

enum class TriangulationStatus { Ok, TooFewViews, Degenerate, NegativeDepth, HighResidual, NotConverged };

struct TriangulationResult {
  TriangulationStatus status = TriangulationStatus::TooFewViews;
  TriangulatedFeature feature;
};

struct TriangulationOptions {
  double min_baseline = 0.05;        // m, between observing clones
  double parallel_tolerance = 1e-6;  // rad
  int max_iterations = 10;
  double step_tolerance = 1e-8;
  double max_rms = 0.01;  // normalized image units
};

/// Pose of the camera clone taken at the given IMU state.
CameraClone make_clone(std::int64_t id, double time, const InsState& ins, const ExtrinsicSet& extr);

/// Jacobian of the new clone error [dtheta_c; dp_c] with respect to the INS error.
Eigen::Matrix<double, 6, kInsErrorDim> clone_jacobian(const InsState& ins, const ExtrinsicSet& extr);

/// Feature position in the left and right camera frames.
struct StereoPoint {
  Vec3 left;
  Vec3 right;
};
StereoPoint feature_in_cameras(const Vec3& feature, const CameraClone& clone, const ExtrinsicSet& extr);

/// Noise-free stereo measurement.
Eigen::Vector4d project_stereo(const Vec3& feature, const CameraClone& clone, const ExtrinsicSet& extr);

/// Linear multi-view initialization refined by Gauss-Newton on an
/// inverse-depth parameterization anchored at the first observing clone.
TriangulationResult triangulate(const FeatureTrack& track, std::span<const CameraClone> clones,
                                const ExtrinsicSet& extr, const TriangulationOptions& opt = {});

/// Stacked reprojection residuals of one feature. `clone_ids[i]` owns
/// columns [6i, 6i+6) of h_cam, ordered [dtheta, dp] per clone.
struct FeatureResidual {
  Eigen::VectorXd residual;
  Eigen::MatrixXd h_cam;
  Eigen::MatrixXd h_feature;
  std::vector<std::int64_t> clone_ids;
};

/// Returns nullopt when any observing camera sees the feature at |Z| < 0.1 m
/// or an observation references a clone not in `clones`.
std::optional<FeatureResidual> reprojection_residual(const FeatureTrack& track, std::span<const CameraClone> clones,
                                                     const TriangulatedFeature& feature, const ExtrinsicSet& extr);

struct ProjectedResidual {
  Eigen::VectorXd residual;
  Eigen::MatrixXd h_cam;
  std::vector<std::int64_t> clone_ids;
};

/// Projects onto the left null space of h_feature. Returns nullopt when
/// h_feature is rank deficient or there are fewer than 7 rows.
std::optional<ProjectedResidual> nullspace_project(const FeatureResidual& r);

}  // namespace cnav
