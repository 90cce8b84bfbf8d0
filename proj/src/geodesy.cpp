#include "cnav/geodesy.hpp"

#include <cmath>
#include <numbers>

namespace cnav {

EcefPosition geodetic_to_ecef(const GeodeticPosition& p) {
  const double s = std::sin(p.lat);
  const double c = std::cos(p.lat);
  const double n = wgs84::kSemiMajor / std::sqrt(1.0 - wgs84::kEccSq * s * s);
  return {Vec3((n + p.height) * c * std::cos(p.lon), (n + p.height) * c * std::sin(p.lon),
               (n * (1.0 - wgs84::kEccSq) + p.height) * s)};
}

GeodeticPosition ecef_to_geodetic(const EcefPosition& p) {
  const double x = p.xyz.x(), y = p.xyz.y(), z = p.xyz.z();
  const double rho = std::hypot(x, y);
  GeodeticPosition out;
  out.lon = std::atan2(y, x);

  if (rho < 1e-9) {
    out.lat = z >= 0.0 ? std::numbers::pi / 2.0 : -std::numbers::pi / 2.0;
    out.height = std::abs(z) - wgs84::kSemiMinor;
    return out;
  }

  // Bowring's parametric-latitude iteration.
  const double a = wgs84::kSemiMajor, b = wgs84::kSemiMinor;
  const double ep2 = (a * a - b * b) / (b * b);
  double beta = std::atan2(z * a, rho * b);
  double lat = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double sb = std::sin(beta), cb = std::cos(beta);
    const double next = std::atan2(z + ep2 * b * sb * sb * sb, rho - wgs84::kEccSq * a * cb * cb * cb);
    const bool done = i > 0 && std::abs(next - lat) < 1e-12;
    lat = next;
    if (done) break;
    beta = std::atan2(b * std::sin(lat), a * std::cos(lat));
  }
  out.lat = lat;
  const double s = std::sin(lat);
  const double n = a / std::sqrt(1.0 - wgs84::kEccSq * s * s);
  // Height formula that stays well-conditioned near the poles.
  out.height = rho * std::cos(lat) + (z + wgs84::kEccSq * n * s) * s - n;
  return out;
}

Mat3 ecef_to_enu_rotation(const GeodeticPosition& anchor) {
  const double sl = std::sin(anchor.lat), cl = std::cos(anchor.lat);
  const double so = std::sin(anchor.lon), co = std::cos(anchor.lon);
  Mat3 r;
  r << -so, co, 0.0,
       -sl * co, -sl * so, cl,
       cl * co, cl * so, sl;
  return r;
}

Vec3 ecef_to_enu(const EcefPosition& p, const GeodeticPosition& anchor) {
  return ecef_to_enu_rotation(anchor) * (p.xyz - geodetic_to_ecef(anchor).xyz);
}

EcefPosition enu_to_ecef(const Vec3& enu, const GeodeticPosition& anchor) {
  return {geodetic_to_ecef(anchor).xyz + ecef_to_enu_rotation(anchor).transpose() * enu};
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 exp_so3(const Vec3& phi) {
  const double angle = phi.norm();
  if (angle < 1e-12) return Mat3::Identity() + skew(phi);
  return Eigen::AngleAxisd(angle, phi / angle).toRotationMatrix();
}

Attitude::Attitude(double w, double x, double y, double z) : q_(w, x, y, z) { normalize(); }

Attitude::Attitude(const Eigen::Quaterniond& q) : q_(q) { normalize(); }

Attitude::Attitude(const Mat3& rotation) : q_(rotation) { normalize(); }

Attitude Attitude::from_rotation_vector(const Vec3& phi) {
  const double angle = phi.norm();
  if (angle < 1e-12) return Attitude(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
  return Attitude(Eigen::Quaterniond(Eigen::AngleAxisd(angle, phi / angle)));
}

Attitude Attitude::from_yaw(double yaw) {
  return Attitude(std::cos(0.5 * yaw), 0.0, 0.0, std::sin(0.5 * yaw));
}

Attitude Attitude::perturbed(const Vec3& dtheta) const {
  return Attitude(q_ * from_rotation_vector(dtheta).q_);
}

Attitude Attitude::operator*(const Attitude& other) const { return Attitude(q_ * other.q_); }

Attitude Attitude::inverse() const { return Attitude(q_.conjugate()); }

double Attitude::heading() const {
  const Mat3 r = matrix();
  // Body x-axis expressed in ENU; azimuth is clockwise from North.
  return wrap_two_pi(std::atan2(r(0, 0), r(1, 0)));
}

void Attitude::normalize() {
  // Leaving near-unit quaternions untouched keeps text round trips bit exact.
  const double n2 = q_.squaredNorm();
  if (std::abs(n2 - 1.0) > 1e-15) q_.coeffs() /= std::sqrt(n2);
  if (q_.w() < 0.0) q_.coeffs() *= -1.0;
}

double wrap_two_pi(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::fmod(a, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r -= kTwoPi;
  return r;
}

double wrap_pi(double a) {
  double r = wrap_two_pi(a + std::numbers::pi) - std::numbers::pi;
  if (r <= -std::numbers::pi) r += 2.0 * std::numbers::pi;
  return r;
}

}  // namespace cnav
