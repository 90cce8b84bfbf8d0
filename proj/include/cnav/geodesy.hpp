#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cnav {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

namespace wgs84 {
inline constexpr double kSemiMajor = 6378137.0;
inline constexpr double kFlattening = 1.0 / 298.257223563;
inline constexpr double kSemiMinor = kSemiMajor * (1.0 - kFlattening);
inline constexpr double kEccSq = kFlattening * (2.0 - kFlattening);
}  // namespace wgs84

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kGravity = 9.80665;

/// Earth-centered Earth-fixed position in meters.
struct EcefPosition {
  Vec3 xyz = Vec3::Zero();
};

/// WGS-84 geodetic coordinates; latitude/longitude in radians.
struct GeodeticPosition {
  double lat = 0.0;
  double lon = 0.0;
  double height = 0.0;
};

/// Gravity in the ENU navigation frame.
inline Vec3 gravity_enu() { return Vec3(0.0, 0.0, -kGravity); }

EcefPosition geodetic_to_ecef(const GeodeticPosition& p);

/// Iterative (Bowring-style) inverse; converges to 1e-12 rad.
GeodeticPosition ecef_to_geodetic(const EcefPosition& p);

/// Rotation taking ECEF vectors into the local East-North-Up frame at `anchor`.
Mat3 ecef_to_enu_rotation(const GeodeticPosition& anchor);

Vec3 ecef_to_enu(const EcefPosition& p, const GeodeticPosition& anchor);
EcefPosition enu_to_ecef(const Vec3& enu, const GeodeticPosition& anchor);

/// Cross-product matrix: skew(v) * w == v.cross(w).
Mat3 skew(const Vec3& v);

/// Rotation-vector exponential map SO(3).
Mat3 exp_so3(const Vec3& phi);

/// Unit quaternion attitude (Hamilton, scalar-first), body-to-navigation.
///
/// Every constructor and mutator renormalizes, so the stored quaternion
/// always has unit norm.
class Attitude {
 public:
  Attitude() = default;
  /// Scalar-first components.
  Attitude(double w, double x, double y, double z);
  explicit Attitude(const Eigen::Quaterniond& q);
  explicit Attitude(const Mat3& rotation);

  static Attitude from_rotation_vector(const Vec3& phi);
  /// Intrinsic Z (yaw about Up) only; yaw measured counter-clockwise from East.
  static Attitude from_yaw(double yaw);

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Mat3 matrix() const { return q_.toRotationMatrix(); }

  /// Right-multiplies by Exp(dtheta): a body-frame (local) perturbation.
  Attitude perturbed(const Vec3& dtheta) const;

  Attitude operator*(const Attitude& other) const;
  Attitude inverse() const;

  /// Heading in radians clockwise from North of the body x-axis, [0, 2pi).
  double heading() const;

 private:
  void normalize();
  Eigen::Quaterniond q_ = Eigen::Quaterniond::Identity();
};

/// Wraps an angle into [0, 2pi).
double wrap_two_pi(double a);
/// Wraps an angle into (-pi, pi].
double wrap_pi(double a);

}  // namespace cnav
