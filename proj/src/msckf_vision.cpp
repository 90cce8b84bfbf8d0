#include "cnav/msckf_vision.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include <Eigen/Dense>

namespace cnav {

ExtrinsicSet ExtrinsicSet::forward_stereo(const Vec3& lever, double baseline) {
  ExtrinsicSet e;
  // Camera x right, y down, z forward; body x forward, y left, z up.
  e.rot_body_cam << 0.0, 0.0, 1.0,
                    -1.0, 0.0, 0.0,
                    0.0, -1.0, 0.0;
  e.pos_body_cam = lever;
  e.rot_left_right.setIdentity();
  e.pos_left_right = Vec3(baseline, 0.0, 0.0);
  return e;
}

CameraClone make_clone(std::int64_t id, double time, const InsState& ins, const ExtrinsicSet& extr) {
  CameraClone c;
  c.id = id;
  c.time = time;
  c.attitude = ins.attitude * Attitude(extr.rot_body_cam);
  c.position = ins.position + ins.attitude.matrix() * extr.pos_body_cam;
  return c;
}

Eigen::Matrix<double, 6, kInsErrorDim> clone_jacobian(const InsState& ins, const ExtrinsicSet& extr) {
  using namespace ins_index;
  Eigen::Matrix<double, 6, kInsErrorDim> j = Eigen::Matrix<double, 6, kInsErrorDim>::Zero();
  j.block<3, 3>(0, kAtt) = extr.rot_body_cam.transpose();
  j.block<3, 3>(3, kAtt) = -ins.attitude.matrix() * skew(extr.pos_body_cam);
  j.block<3, 3>(3, kPos).setIdentity();
  return j;
}

StereoPoint feature_in_cameras(const Vec3& feature, const CameraClone& clone, const ExtrinsicSet& extr) {
  const Vec3 left = clone.attitude.matrix().transpose() * (feature - clone.position);
  return {left, extr.rot_left_right.transpose() * (left - extr.pos_left_right)};
}

Eigen::Vector4d project_stereo(const Vec3& feature, const CameraClone& clone, const ExtrinsicSet& extr) {
  const StereoPoint p = feature_in_cameras(feature, clone, extr);
  return {p.left.x() / p.left.z(), p.left.y() / p.left.z(), p.right.x() / p.right.z(), p.right.y() / p.right.z()};
}

namespace {

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& p) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << iz, 0.0, -p.x() * iz * iz,
       0.0, iz, -p.y() * iz * iz;
  return j;
}

struct View {
  Mat3 rotation;  // camera axes in n
  Vec3 origin;
  Eigen::Vector2d uv;
};

std::vector<View> collect_views(const FeatureTrack& track, std::span<const CameraClone> clones,
                                const ExtrinsicSet& extr, std::vector<const CameraClone*>& used) {
  std::unordered_map<std::int64_t, const CameraClone*> by_id;
  for (const auto& c : clones) by_id[c.id] = &c;
  std::vector<View> views;
  for (const auto& obs : track.observations) {
    auto it = by_id.find(obs.clone_id);
    if (it == by_id.end()) continue;
    const CameraClone& c = *it->second;
    const Mat3 r = c.attitude.matrix();
    views.push_back({r, c.position, obs.uv.head<2>()});
    views.push_back({r * extr.rot_left_right, c.position + r * extr.pos_left_right, obs.uv.tail<2>()});
    used.push_back(&c);
  }
  return views;
}

}  // namespace

TriangulationResult triangulate(const FeatureTrack& track, std::span<const CameraClone> clones,
                                const ExtrinsicSet& extr, const TriangulationOptions& opt) {
  TriangulationResult result;
  std::vector<const CameraClone*> used;
  const std::vector<View> views = collect_views(track, clones, extr, used);
  if (used.size() < 2) return result;

  double max_baseline = 0.0;
  for (std::size_t i = 0; i < used.size(); ++i)
    for (std::size_t j = i + 1; j < used.size(); ++j)
      max_baseline = std::max(max_baseline, (used[i]->position - used[j]->position).norm());

  std::vector<Vec3> dirs;
  dirs.reserve(views.size());
  for (const auto& v : views) dirs.push_back((v.rotation * Vec3(v.uv.x(), v.uv.y(), 1.0)).normalized());
  double max_angle = 0.0;
  for (std::size_t i = 0; i < dirs.size(); ++i)
    for (std::size_t j = i + 1; j < dirs.size(); ++j)
      max_angle = std::max(max_angle, std::atan2(dirs[i].cross(dirs[j]).norm(), dirs[i].dot(dirs[j])));
  if (max_baseline <= opt.min_baseline || max_angle < opt.parallel_tolerance) {
    result.status = TriangulationStatus::Degenerate;
    return result;
  }

  // Midpoint-style linear solve: minimize perpendicular distances to all rays.
  Mat3 a = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (std::size_t i = 0; i < views.size(); ++i) {
    const Mat3 perp = Mat3::Identity() - dirs[i] * dirs[i].transpose();
    a += perp;
    b += perp * views[i].origin;
  }
  Eigen::LDLT<Mat3> ldlt(a);
  if (ldlt.info() != Eigen::Success) {
    result.status = TriangulationStatus::Degenerate;
    return result;
  }
  Vec3 p = ldlt.solve(b);

  // Inverse depth (alpha, beta, rho) in the anchor (first left) camera.
  const View& anchor = views.front();
  Vec3 pa = anchor.rotation.transpose() * (p - anchor.origin);
  if (pa.z() <= 0.0) {
    result.status = TriangulationStatus::NegativeDepth;
    return result;
  }
  Vec3 x(pa.x() / pa.z(), pa.y() / pa.z(), 1.0 / pa.z());
  auto to_world = [&](const Vec3& s) -> Vec3 { return anchor.rotation * Vec3(s.x(), s.y(), 1.0) / s.z() + anchor.origin; };

  const auto m = static_cast<Eigen::Index>(views.size());
  bool converged = false;
  for (int iter = 0; iter < opt.max_iterations && !converged; ++iter) {
    Eigen::VectorXd res(2 * m);
    Eigen::MatrixXd jac(2 * m, 3);
    const Vec3 pw = to_world(x);
    Mat3 dpw;
    dpw << 1.0 / x.z(), 0.0, -x.x() / (x.z() * x.z()),
           0.0, 1.0 / x.z(), -x.y() / (x.z() * x.z()),
           0.0, 0.0, -1.0 / (x.z() * x.z());
    dpw = anchor.rotation * dpw;
    for (Eigen::Index k = 0; k < m; ++k) {
      const View& v = views[static_cast<std::size_t>(k)];
      const Vec3 pc = v.rotation.transpose() * (pw - v.origin);
      if (pc.z() <= 0.0) {
        result.status = TriangulationStatus::NegativeDepth;
        return result;
      }
      res.segment<2>(2 * k) = v.uv - pc.head<2>() / pc.z();
      jac.block<2, 3>(2 * k, 0) = projection_jacobian(pc) * v.rotation.transpose() * dpw;
    }
    const Vec3 step = (jac.transpose() * jac).ldlt().solve(jac.transpose() * res);
    if (!step.allFinite()) {
      result.status = TriangulationStatus::Degenerate;
      return result;
    }
    x += step;
    if (x.z() <= 0.0) {
      result.status = TriangulationStatus::NegativeDepth;
      return result;
    }
    converged = step.norm() < opt.step_tolerance;
  }

  p = to_world(x);
  double sq = 0.0;
  for (const auto& v : views) {
    const Vec3 pc = v.rotation.transpose() * (p - v.origin);
    if (pc.z() <= 0.0) {
      result.status = TriangulationStatus::NegativeDepth;
      return result;
    }
    sq += (v.uv - pc.head<2>() / pc.z()).squaredNorm();
  }
  result.feature.position = p;
  result.feature.converged = converged;
  result.feature.reprojection_rms = std::sqrt(sq / static_cast<double>(2 * views.size()));
  if (!converged)
    result.status = TriangulationStatus::NotConverged;
  else if (result.feature.reprojection_rms > opt.max_rms)
    result.status = TriangulationStatus::HighResidual;
  else
    result.status = TriangulationStatus::Ok;
  return result;
}

std::optional<FeatureResidual> reprojection_residual(const FeatureTrack& track, std::span<const CameraClone> clones,
                                                     const TriangulatedFeature& feature, const ExtrinsicSet& extr) {
  std::unordered_map<std::int64_t, const CameraClone*> by_id;
  for (const auto& c : clones) by_id[c.id] = &c;

  const auto n = static_cast<Eigen::Index>(track.observations.size());
  FeatureResidual out;
  out.residual.resize(4 * n);
  out.h_cam = Eigen::MatrixXd::Zero(4 * n, 6 * n);
  out.h_feature.resize(4 * n, 3);
  const Mat3 rlr_t = extr.rot_left_right.transpose();

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& obs = track.observations[static_cast<std::size_t>(i)];
    auto it = by_id.find(obs.clone_id);
    if (it == by_id.end()) return std::nullopt;
    const CameraClone& c = *it->second;
    const StereoPoint sp = feature_in_cameras(feature.position, c, extr);
    if (std::abs(sp.left.z()) < 0.1 || std::abs(sp.right.z()) < 0.1) return std::nullopt;

    out.residual.segment<4>(4 * i) =
        obs.uv - Eigen::Vector4d(sp.left.x() / sp.left.z(), sp.left.y() / sp.left.z(), sp.right.x() / sp.right.z(),
                                 sp.right.y() / sp.right.z());

    Eigen::Matrix<double, 4, 3> dz_dleft;
    dz_dleft.topRows<2>() = projection_jacobian(sp.left);
    dz_dleft.bottomRows<2>() = projection_jacobian(sp.right) * rlr_t;

    const Mat3 rt = c.attitude.matrix().transpose();
    out.h_cam.block<4, 3>(4 * i, 6 * i) = dz_dleft * skew(sp.left);
    out.h_cam.block<4, 3>(4 * i, 6 * i + 3) = -dz_dleft * rt;
    out.h_feature.block<4, 3>(4 * i, 0) = dz_dleft * rt;
    out.clone_ids.push_back(c.id);
  }
  return out;
}

std::optional<ProjectedResidual> nullspace_project(const FeatureResidual& r) {
  const Eigen::Index rows = r.h_feature.rows();
  if (rows < 7 || r.h_feature.cols() != 3) return std::nullopt;
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(r.h_feature);
  const Eigen::MatrixXd upper = qr.matrixQR().topRows<3>().triangularView<Eigen::Upper>();
  const double scale = std::max(upper.cwiseAbs().maxCoeff(), 1e-300);
  for (int i = 0; i < 3; ++i)
    if (std::abs(upper(i, i)) < 1e-10 * scale) return std::nullopt;

  const Eigen::MatrixXd qt_h = qr.householderQ().transpose() * r.h_cam;
  const Eigen::VectorXd qt_r = qr.householderQ().transpose() * r.residual;
  ProjectedResidual out;
  out.residual = qt_r.tail(rows - 3);
  out.h_cam = qt_h.bottomRows(rows - 3);
  out.clone_ids = r.clone_ids;
  return out;
}

}  // namespace cnav
