#include "cnav/ins_mech.hpp"

#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "cnav/errors.hpp"

namespace cnav {

using namespace ins_index;

ImuSample interpolate(const ImuSample& a, const ImuSample& b, double t) {
  const double span = b.time - a.time;
  const double w = span > 0.0 ? (t - a.time) / span : 0.0;
  return {t, a.gyro + w * (b.gyro - a.gyro), a.accel + w * (b.accel - a.accel)};
}

NominalRates nominal_kinematics(const InsState& state, const Vec3& gyro, const Vec3& accel) {
  const Mat3 r = state.attitude.matrix();
  return {state.velocity, r * (accel - state.accel_bias) - gravity_enu(), gyro - state.gyro_bias};
}

namespace {

/// Inverse right-trivialized differential of Exp, truncated after the
/// second-order term (enough for a fourth-order scheme).
Vec3 dexp_inv(const Vec3& theta, const Vec3& w) {
  const Vec3 tw = theta.cross(w);
  return w - 0.5 * tw + theta.cross(tw) / 12.0;
}

/// Runge-Kutta-Munthe-Kaas RK4: the attitude stages live in the Lie algebra,
/// so a constant body rate is integrated exactly.
InsState rk4(const InsState& s, const ImuSample& a, const ImuSample& b) {
  const double dt = b.time - a.time;
  const ImuSample mid = interpolate(a, b, a.time + 0.5 * dt);
  const Mat3 r0 = s.attitude.matrix();
  auto accel = [&](const Vec3& theta, const ImuSample& u) -> Vec3 {
    return r0 * exp_so3(theta) * (u.accel - s.accel_bias) - gravity_enu();
  };
  auto rate = [&](const Vec3& theta, const ImuSample& u) -> Vec3 { return dexp_inv(theta, u.gyro - s.gyro_bias); };

  const Vec3 w1 = rate(Vec3::Zero(), a);
  const Vec3 a1 = accel(Vec3::Zero(), a);
  const Vec3 v1 = s.velocity;

  const Vec3 t2 = 0.5 * dt * w1;
  const Vec3 v2 = s.velocity + 0.5 * dt * a1;
  const Vec3 w2 = rate(t2, mid);
  const Vec3 a2 = accel(t2, mid);

  const Vec3 t3 = 0.5 * dt * w2;
  const Vec3 v3 = s.velocity + 0.5 * dt * a2;
  const Vec3 w3 = rate(t3, mid);
  const Vec3 a3 = accel(t3, mid);

  const Vec3 t4 = dt * w3;
  const Vec3 v4 = s.velocity + dt * a3;
  const Vec3 w4 = rate(t4, b);
  const Vec3 a4 = accel(t4, b);

  InsState out = s;
  out.position += dt / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
  out.velocity += dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
  out.attitude = s.attitude.perturbed(dt / 6.0 * (w1 + 2.0 * w2 + 2.0 * w3 + w4));
  return out;
}

}  // namespace

StepResult mechanize_step(const InsState& state, const ImuSample& s0, const ImuSample& s1) {
  const double dt = s1.time - s0.time;
  if (!(dt > 0.0))
    throw DataError("mechanize_step: non-monotone IMU timestamps " + std::to_string(s0.time) + " -> " +
                    std::to_string(s1.time));
  if (dt > kImuGapThreshold) return {state, StepStatus::Gap};

  const int substeps = static_cast<int>(std::ceil(dt / kMaxImuStep - 1e-9));
  InsState s = state;
  ImuSample prev = s0;
  for (int i = 1; i <= substeps; ++i) {
    const ImuSample next = i == substeps ? s1 : interpolate(s0, s1, s0.time + dt * i / substeps);
    s = rk4(s, prev, next);
    prev = next;
  }
  return {s, StepStatus::Ok};
}

Mat15 build_error_dynamics(const InsState& state, const ImuSample& sample) {
  const Mat3 r = state.attitude.matrix();
  Mat15 f = Mat15::Zero();
  f.block<3, 3>(kPos, kVel).setIdentity();
  f.block<3, 3>(kVel, kAtt) = -r * skew(sample.accel - state.accel_bias);
  f.block<3, 3>(kVel, kAccBias) = -r;
  f.block<3, 3>(kAtt, kAtt) = -skew(sample.gyro - state.gyro_bias);
  f.block<3, 3>(kAtt, kGyroBias) = -Mat3::Identity();
  return f;
}

Eigen::Matrix<double, kInsErrorDim, 12> noise_input_matrix(const InsState& state) {
  Eigen::Matrix<double, kInsErrorDim, 12> g = Eigen::Matrix<double, kInsErrorDim, 12>::Zero();
  g.block<3, 3>(kVel, 0) = -state.attitude.matrix();
  g.block<3, 3>(kAtt, 3) = -Mat3::Identity();
  g.block<3, 3>(kAccBias, 6).setIdentity();
  g.block<3, 3>(kGyroBias, 9).setIdentity();
  return g;
}

Mat15 transition_matrix(const Mat15& F, double dt) {
  const Mat15 a = F * dt;
  const Mat15 a2 = a * a;
  const Mat15 a3 = a2 * a;
  return Mat15::Identity() + a + a2 / 2.0 + a3 / 6.0 + a3 * a / 24.0;
}

void require_psd(const Eigen::MatrixXd& P, double rel_tol) {
  const double tr = P.trace();
  if (!std::isfinite(tr)) throw NumericalError("covariance has non-finite entries");
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, std::abs(tr)))
    throw NumericalError("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -rel_tol * std::abs(tr))
    throw NumericalError("covariance is not positive semi-definite (min eigenvalue " +
                         std::to_string(es.eigenvalues().minCoeff()) + ")");
}

Mat15 propagate_covariance(Eigen::MatrixXd& P, const InsState& state, const Mat15& F,
                           const ProcessNoiseConfig& noise, double dt, PsdCheck check) {
  if (check == PsdCheck::Full) require_psd(P);
  const Mat15 phi = transition_matrix(F, dt);

  Eigen::Matrix<double, 12, 1> qc;
  qc << Vec3::Constant(noise.accel_noise * noise.accel_noise), Vec3::Constant(noise.gyro_noise * noise.gyro_noise),
      Vec3::Constant(noise.accel_bias_walk * noise.accel_bias_walk),
      Vec3::Constant(noise.gyro_bias_walk * noise.gyro_bias_walk);
  const auto g = noise_input_matrix(state);
  const Mat15 gqg = g * qc.asDiagonal() * g.transpose();
  const Mat15 qd = 0.5 * (phi * gqg * phi.transpose() + gqg) * dt;

  const Eigen::Index n = P.rows();
  const Eigen::Index rest = n - kInsErrorDim;
  P.topLeftCorner<kInsErrorDim, kInsErrorDim>() =
      phi * P.topLeftCorner<kInsErrorDim, kInsErrorDim>() * phi.transpose() + qd;
  if (rest > 0) {
    P.topRightCorner(kInsErrorDim, rest) = phi * P.topRightCorner(kInsErrorDim, rest);
    P.bottomLeftCorner(rest, kInsErrorDim) = P.topRightCorner(kInsErrorDim, rest).transpose();
  }
  const Mat15 sym = 0.5 * (P.topLeftCorner<kInsErrorDim, kInsErrorDim>() +
                           P.topLeftCorner<kInsErrorDim, kInsErrorDim>().transpose());
  P.topLeftCorner<kInsErrorDim, kInsErrorDim>() = sym;
  return phi;
}

}  // namespace cnav
