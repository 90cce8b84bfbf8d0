#include "oracles.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <unsupported/Eigen/MatrixFunctions>

namespace cnav::oracle {

double uniform(Rng& rng, double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

Vec3 random_vec(Rng& rng, double scale) {
  return Vec3(uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale));
}

Attitude random_attitude(Rng& rng) {
  // Uniform on SO(3) via a normalized 4D Gaussian.
  std::normal_distribution<double> n;
  return Attitude(n(rng), n(rng), n(rng), n(rng));
}

InsState random_ins_state(Rng& rng) {
  InsState s;
  s.position = random_vec(rng, 500.0);
  s.velocity = random_vec(rng, 15.0);
  s.attitude = random_attitude(rng);
  s.accel_bias = random_vec(rng, 0.05);
  s.gyro_bias = random_vec(rng, 0.005);
  return s;
}

ImuSample random_imu(Rng& rng, double time) {
  ImuSample s;
  s.time = time;
  s.gyro = random_vec(rng, 0.5);
  s.accel = random_vec(rng, 3.0) + Vec3(0.0, 0.0, -kGravity);
  return s;
}

Eigen::MatrixXd random_spd(Rng& rng, Eigen::Index n, double scale) {
  Eigen::MatrixXd a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = uniform(rng, -1.0, 1.0);
  Eigen::MatrixXd p = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
  return scale * 0.5 * (p + p.transpose());
}

Eigen::MatrixXd expm(const Eigen::MatrixXd& a) { return a.exp(); }

Vec3 log_so3(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

namespace {

InsState apply(const InsState& s, const Vec15& dx) {
  using namespace ins_index;
  InsState out = s;
  out.position += dx.segment<3>(kPos);
  out.velocity += dx.segment<3>(kVel);
  out.attitude = s.attitude.perturbed(dx.segment<3>(kAtt));
  out.accel_bias += dx.segment<3>(kAccBias);
  out.gyro_bias += dx.segment<3>(kGyroBias);
  return out;
}

Vec3 vee(const Mat3& m) { return 0.5 * Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)); }

/// Time derivative of the error between perturbed and reference trajectories.
Vec15 error_rate(const InsState& ref, const InsState& pert, const ImuSample& imu) {
  using namespace ins_index;
  const NominalRates a = nominal_kinematics(ref, imu.gyro, imu.accel);
  const NominalRates b = nominal_kinematics(pert, imu.gyro, imu.accel);
  const Mat3 e = ref.attitude.matrix().transpose() * pert.attitude.matrix();
  const Mat3 e_dot = -skew(a.body_rate) * e + e * skew(b.body_rate);
  Vec15 d = Vec15::Zero();
  d.segment<3>(kPos) = b.position_dot - a.position_dot;
  d.segment<3>(kVel) = b.velocity_dot - a.velocity_dot;
  d.segment<3>(kAtt) = vee(e_dot);
  return d;
}

}  // namespace

Mat15 fd_error_dynamics(const InsState& state, const ImuSample& sample, double eps) {
  Mat15 f;
  for (int j = 0; j < kInsErrorDim; ++j) {
    Vec15 dx = Vec15::Zero();
    dx(j) = eps;
    f.col(j) = (error_rate(state, apply(state, dx), sample) - error_rate(state, apply(state, -dx), sample)) / (2 * eps);
  }
  return f;
}

Eigen::Matrix<double, 6, kInsErrorDim> fd_clone_jacobian(const InsState& ins, const ExtrinsicSet& extr, double eps) {
  const CameraClone c0 = make_clone(0, 0.0, ins, extr);
  auto err = [&](const Vec15& dx) {
    const CameraClone c = make_clone(0, 0.0, apply(ins, dx), extr);
    Eigen::Matrix<double, 6, 1> e;
    e.head<3>() = log_so3(c0.attitude.matrix().transpose() * c.attitude.matrix());
    e.tail<3>() = c.position - c0.position;
    return e;
  };
  Eigen::Matrix<double, 6, kInsErrorDim> j;
  for (int k = 0; k < kInsErrorDim; ++k) {
    Vec15 dx = Vec15::Zero();
    dx(k) = eps;
    j.col(k) = (err(dx) - err(-dx)) / (2 * eps);
  }
  return j;
}

FdReprojection fd_reprojection(const Vec3& feature, const std::vector<CameraClone>& clones, const ExtrinsicSet& extr,
                               double eps) {
  const auto n = static_cast<Eigen::Index>(clones.size());
  FdReprojection out;
  out.h_cam = Eigen::MatrixXd::Zero(4 * n, 6 * n);
  out.h_feature = Eigen::MatrixXd::Zero(4 * n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const CameraClone& c = clones[static_cast<std::size_t>(i)];
    for (int k = 0; k < 6; ++k) {
      Vec3 d = Vec3::Zero();
      d(k % 3) = eps;
      CameraClone plus = c, minus = c;
      if (k < 3) {
        plus.attitude = c.attitude.perturbed(d);
        minus.attitude = c.attitude.perturbed(-d);
      } else {
        plus.position += d;
        minus.position -= d;
      }
      out.h_cam.block<4, 1>(4 * i, 6 * i + k) =
          (project_stereo(feature, plus, extr) - project_stereo(feature, minus, extr)) / (2 * eps);
    }
    for (int k = 0; k < 3; ++k) {
      Vec3 d = Vec3::Zero();
      d(k) = eps;
      out.h_feature.block<4, 1>(4 * i, k) =
          (project_stereo(feature + d, c, extr) - project_stereo(feature - d, c, extr)) / (2 * eps);
    }
  }
  return out;
}

LinearUpdate augment_then_marginalize(const Eigen::MatrixXd& P, const Eigen::MatrixXd& h_x,
                                      const Eigen::MatrixXd& h_f, const Eigen::VectorXd& r, double sigma) {
  const double w = 1.0 / (sigma * sigma);
  const Eigen::MatrixXd jxx = P.inverse() + w * h_x.transpose() * h_x;
  const Eigen::MatrixXd jxf = w * h_x.transpose() * h_f;
  const Eigen::MatrixXd jff = w * h_f.transpose() * h_f;
  const Eigen::VectorXd bx = w * h_x.transpose() * r;
  const Eigen::VectorXd bf = w * h_f.transpose() * r;
  const Eigen::MatrixXd jff_inv = jff.inverse();
  const Eigen::MatrixXd info = jxx - jxf * jff_inv * jxf.transpose();
  const Eigen::VectorXd b = bx - jxf * jff_inv * bf;
  LinearUpdate u;
  u.P = info.inverse();
  u.dx = u.P * b;
  return u;
}

LinearUpdate dense_update(const Eigen::MatrixXd& P, const Eigen::MatrixXd& H, const Eigen::MatrixXd& R,
                          const Eigen::VectorXd& r) {
  const Eigen::MatrixXd S = H * P * H.transpose() + R;
  const Eigen::MatrixXd K = P * H.transpose() * S.inverse();
  LinearUpdate u;
  u.dx = K * r;
  u.P = P - K * H * P;
  return u;
}

double rel_error(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double floor) {
  const double denom = std::max(b.cwiseAbs().maxCoeff(), floor);
  return (a - b).cwiseAbs().maxCoeff() / denom;
}

double gogps_variance_by_hand(double elevation, double snr, double sigma) {
  const double s1 = 50.0, s0 = 10.0, big_a = 30.0, a = 20.0;
  const double f = 1.0 / (std::sin(elevation) * std::sin(elevation));
  double m = 1.0;
  if (snr < s1) {
    const double lead = std::pow(10.0, -(snr - s1) / a);
    const double slope = big_a / std::pow(10.0, -(s0 - s1) / a) - 1.0;
    m = std::max(1.0, lead * (slope * (snr - s1) / (s0 - s1) + 1.0));
  }
  return f * m * sigma * sigma;
}

StereoScene random_stereo_scene(Rng& rng, int n) {
  StereoScene s;
  s.extr = ExtrinsicSet::forward_stereo(random_vec(rng, 0.3), 0.12);
  s.extr.rot_body_cam = s.extr.rot_body_cam * exp_so3(random_vec(rng, 0.05));
  const double yaw = uniform(rng, -3.0, 3.0);
  const Vec3 fwd(std::cos(yaw), std::sin(yaw), 0.0);
  const Vec3 left(-fwd.y(), fwd.x(), 0.0);
  const Vec3 origin = random_vec(rng, 100.0);
  for (int i = 0; i < n; ++i) {
    InsState ins;
    ins.position = origin + fwd * (1.5 * i) + random_vec(rng, 0.2);
    ins.attitude = Attitude::from_yaw(yaw).perturbed(random_vec(rng, 0.05));
    s.clones.push_back(make_clone(i, 0.1 * i, ins, s.extr));
  }
  s.feature = origin + fwd * uniform(rng, 12.0, 30.0) + left * uniform(rng, -4.0, 4.0) +
              Vec3(0, 0, uniform(rng, -1.0, 4.0));
  s.track.id = 1;
  for (const auto& c : s.clones) s.track.observations.push_back({c.id, project_stereo(s.feature, c, s.extr)});
  return s;
}

MsckfInstance random_msckf_instance(Rng& rng, int n, int rows_per_clone) {
  MsckfInstance in;
  in.st = make_filter_state(random_ins_state(rng), GnssMode::Spp, {}, 0.0);
  for (int i = 0; i < n; ++i) {
    CameraClone c;
    c.id = i;
    c.attitude = random_attitude(rng);
    c.position = random_vec(rng, 10.0);
    in.st.clones.push_back(c);
  }
  in.st.next_clone_id = n;
  in.st.covariance = random_spd(rng, 15 + 6 * n, 0.01);
  const int m = rows_per_clone * n;
  in.res.residual = Eigen::VectorXd::Random(m) * 1e-3;
  in.res.h_cam = Eigen::MatrixXd::Random(m, 6 * n);
  in.res.h_feature = Eigen::MatrixXd::Random(m, 3);
  for (int i = 0; i < n; ++i) in.res.clone_ids.push_back(i);
  return in;
}

double msckf_equivalence_error(MsckfInstance in, double sigma) {
  const Eigen::Index n = in.st.dim();
  Eigen::MatrixXd hx = Eigen::MatrixXd::Zero(in.res.h_cam.rows(), n);
  hx.rightCols(in.res.h_cam.cols()) = in.res.h_cam;
  const LinearUpdate ref = augment_then_marginalize(in.st.covariance, hx, in.res.h_feature, in.res.residual, sigma);
  FilterState expected = in.st;
  inject_error(expected, ref.dx);
  const auto p = nullspace_project(in.res);
  if (!p) return std::numeric_limits<double>::infinity();
  const UpdateReport r = update_vision(in.st, std::vector<ProjectedResidual>{*p}, sigma);
  if (r.skipped || r.used == 0) return std::numeric_limits<double>::infinity();
  double err = (in.st.covariance - ref.P).cwiseAbs().maxCoeff();
  err = std::max(err, (in.st.ins.position - expected.ins.position).norm());
  err = std::max(err, (in.st.ins.velocity - expected.ins.velocity).norm());
  err = std::max(err, (in.st.ins.attitude.matrix() - expected.ins.attitude.matrix()).norm());
  for (std::size_t i = 0; i < in.st.clones.size(); ++i) {
    err = std::max(err, (in.st.clones[i].position - expected.clones[i].position).norm());
    err = std::max(err, (in.st.clones[i].attitude.matrix() - expected.clones[i].attitude.matrix()).norm());
  }
  return err;
}

LabelTally tally_labels(const Dataset& ds, const FisheyeModel& model) {
  LabelTally t;
  for (const TruthLabel& l : ds.truth_labels) {
    const auto* entry = ds.mask_manifest.nearest(l.time, 1e-6);
    if (!entry) {
      ++t.no_mask;
      continue;
    }
    const SkyMask& mask = ds.masks.at(entry->file);
    const SatelliteDirection dir{l.id, l.ea};
    const Classification c = classify_epoch(&mask, std::span(&dir, 1), l.heading, model);
    const ProjectionLabel got = c.projections.front().label;
    if (got == ProjectionLabel::OutOfImage) continue;
    ++t.in_dome;
    if (to_signal_label(got) == l.label) ++t.agree;
  }
  return t;
}

std::map<std::string, std::string> read_tree(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    out[std::filesystem::relative(e.path(), dir).generic_string()] = ss.str();
  }
  return out;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("cnav_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace cnav::oracle
