#pragma once

#include <Eigen/Core>

#include "cnav/geodesy.hpp"

namespace cnav {

inline constexpr int kInsErrorDim = 15;
using Mat15 = Eigen::Matrix<double, kInsErrorDim, kInsErrorDim>;
using Vec15 = Eigen::Matrix<double, kInsErrorDim, 1>;

/// Offsets of the INS error blocks, stacked as [dp dv dtheta dba dbg].
namespace ins_index {
inline constexpr int kPos = 0;
inline constexpr int kVel = 3;
inline constexpr int kAtt = 6;
inline constexpr int kAccBias = 9;
inline constexpr int kGyroBias = 12;
}  // namespace ins_index

struct ImuSample {
  double time = 0.0;
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2, includes the gravity term R^T g
};

/// Linear interpolation of two samples at time t.
ImuSample interpolate(const ImuSample& a, const ImuSample& b, double t);

/// Mechanized nominal state in the ENU navigation frame.
struct InsState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Attitude attitude;
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();
};

/// Continuous-time white-noise densities (standard deviations per sqrt(Hz)).
///
/// Defaults come from the ADIS-16470 datasheet row:
///   angular random walk 0.34 deg/sqrt(h)  -> 0.34 * pi/180 / 60 rad/s/sqrt(Hz)
///   velocity random walk 0.18 m/s/sqrt(h) -> 0.18 / 60 m/s^2/sqrt(Hz)
///   accel bias instability 1300 mGal = 1.3e-2 m/s^2, gyro 8 deg/h.
/// Biases are random walks whose 1-sigma growth over one hour equals the
/// bias instability: density = instability / sqrt(3600 s).
struct ProcessNoiseConfig {
  double accel_noise = 0.18 / 60.0;
  double gyro_noise = 0.34 * 0.017453292519943295 / 60.0;
  double accel_bias_walk = 1.3e-2 / 60.0;
  double gyro_bias_walk = 8.0 * 0.017453292519943295 / 3600.0 / 60.0;
};

/// Rates of the nominal state under bias-corrected IMU readings.
struct NominalRates {
  Vec3 position_dot;
  Vec3 velocity_dot;
  Vec3 body_rate;  // angular velocity in the body frame
};

NominalRates nominal_kinematics(const InsState& state, const Vec3& gyro, const Vec3& accel);

enum class StepStatus { Ok, Gap };

struct StepResult {
  InsState state;
  StepStatus status = StepStatus::Ok;
};

inline constexpr double kMaxImuStep = 0.02;
inline constexpr double kImuGapThreshold = 0.1;

/// Advances the nominal state from s0.time to s1.time with RK4, linearly
/// interpolating the IMU readings. Intervals longer than kMaxImuStep are
/// split into equal sub-steps. Intervals above kImuGapThreshold return
/// StepStatus::Gap with the input state. Throws DataError when
/// s1.time <= s0.time.
StepResult mechanize_step(const InsState& state, const ImuSample& s0, const ImuSample& s1);

/// Continuous-time error-state dynamics F_ins at the given sample.
Mat15 build_error_dynamics(const InsState& state, const ImuSample& sample);

/// Maps [n_a n_w n_ba n_bw] into the error-state derivative.
Eigen::Matrix<double, kInsErrorDim, 12> noise_input_matrix(const InsState& state);

enum class PsdCheck { Full, None };

/// Propagates the full covariance in place. Only the leading 15x15 INS block
/// has dynamics; the remaining states (GNSS, camera clones) have identity
/// transition and no process noise. Returns the INS transition matrix.
/// Throws NumericalError when `check` is Full and P has an eigenvalue below
/// -1e-9 * trace(P).
Mat15 propagate_covariance(Eigen::MatrixXd& P, const InsState& state, const Mat15& F,
                           const ProcessNoiseConfig& noise, double dt, PsdCheck check = PsdCheck::Full);

/// 4th-order truncated series of exp(F dt).
Mat15 transition_matrix(const Mat15& F, double dt);

/// Throws NumericalError when P is not symmetric PSD within tolerance.
void require_psd(const Eigen::MatrixXd& P, double rel_tol = 1e-9);

}  // namespace cnav
