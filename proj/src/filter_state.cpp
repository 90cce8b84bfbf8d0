#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "cnav/errors.hpp"
#include "cnav/fusion_filter.hpp"

namespace cnav {

std::string_view to_string(GnssMode mode) { return mode == GnssMode::Spp ? "spp" : "rtk"; }

std::optional<std::size_t> FilterState::clock_index(char constellation) const {
  auto it = std::find(clock_keys.begin(), clock_keys.end(), constellation);
  if (it == clock_keys.end()) return std::nullopt;
  return static_cast<std::size_t>(it - clock_keys.begin());
}

std::optional<std::size_t> FilterState::ambiguity_index(const AmbiguityKey& key) const {
  auto it = std::find(ambiguity_keys.begin(), ambiguity_keys.end(), key);
  if (it == ambiguity_keys.end()) return std::nullopt;
  return static_cast<std::size_t>(it - ambiguity_keys.begin());
}

std::optional<std::size_t> FilterState::clone_index(std::int64_t id) const {
  auto it = std::find_if(clones.begin(), clones.end(), [&](const CameraClone& c) { return c.id == id; });
  if (it == clones.end()) return std::nullopt;
  return static_cast<std::size_t>(it - clones.begin());
}

void FilterState::check_layout() const {
  if (covariance.rows() != dim() || covariance.cols() != dim())
    throw NumericalError("covariance dimension " + std::to_string(covariance.rows()) + " != state dimension " +
                         std::to_string(dim()));
  if (clocks.size() != clock_keys.size() || ambiguities.size() != ambiguity_keys.size() ||
      ambiguity_wavelengths.size() != ambiguity_keys.size())
    throw NumericalError("GNSS state bookkeeping out of sync");
}

FilterState make_filter_state(const InsState& ins, GnssMode mode, const InitialUncertainty& sigma, double time) {
  using namespace ins_index;
  FilterState s;
  s.ins = ins;
  s.mode = mode;
  s.time = time;
  s.covariance = Eigen::MatrixXd::Zero(kInsErrorDim, kInsErrorDim);
  auto set = [&](int off, double sd) { s.covariance.block<3, 3>(off, off) = Mat3::Identity() * sd * sd; };
  set(kPos, sigma.position);
  set(kVel, sigma.velocity);
  set(kAtt, sigma.attitude);
  set(kAccBias, sigma.accel_bias);
  set(kGyroBias, sigma.gyro_bias);
  return s;
}

void remove_states(Eigen::MatrixXd& P, Eigen::Index start, Eigen::Index count) {
  const Eigen::Index n = P.rows();
  const Eigen::Index tail = n - start - count;
  Eigen::MatrixXd out(n - count, n - count);
  out.topLeftCorner(start, start) = P.topLeftCorner(start, start);
  out.topRightCorner(start, tail) = P.topRightCorner(start, tail);
  out.bottomLeftCorner(tail, start) = P.bottomLeftCorner(tail, start);
  out.bottomRightCorner(tail, tail) = P.bottomRightCorner(tail, tail);
  P = std::move(out);
}

void insert_states(Eigen::MatrixXd& P, Eigen::Index at, Eigen::Index count, double prior_variance) {
  const Eigen::Index n = P.rows();
  const Eigen::Index tail = n - at;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n + count, n + count);
  out.topLeftCorner(at, at) = P.topLeftCorner(at, at);
  out.topRightCorner(at, tail) = P.topRightCorner(at, tail);
  out.bottomLeftCorner(tail, at) = P.bottomLeftCorner(tail, at);
  out.bottomRightCorner(tail, tail) = P.bottomRightCorner(tail, tail);
  out.block(at, at, count, count).diagonal().setConstant(prior_variance);
  P = std::move(out);
}

void inject_error(FilterState& state, const Eigen::VectorXd& dx) {
  using namespace ins_index;
  auto& ins = state.ins;
  ins.position += dx.segment<3>(kPos);
  ins.velocity += dx.segment<3>(kVel);
  ins.attitude = ins.attitude.perturbed(dx.segment<3>(kAtt));
  ins.accel_bias += dx.segment<3>(kAccBias);
  ins.gyro_bias += dx.segment<3>(kGyroBias);
  const Eigen::Index g = state.gnss_offset();
  if (state.mode == GnssMode::Spp) {
    for (std::size_t i = 0; i < state.clocks.size(); ++i) state.clocks[i] += dx(g + static_cast<Eigen::Index>(i));
  } else {
    for (std::size_t i = 0; i < state.ambiguities.size(); ++i)
      state.ambiguities[i] += dx(g + static_cast<Eigen::Index>(i));
  }
  for (std::size_t i = 0; i < state.clones.size(); ++i) {
    const Eigen::Index off = state.clone_offset(i);
    state.clones[i].attitude = state.clones[i].attitude.perturbed(dx.segment<3>(off));
    state.clones[i].position += dx.segment<3>(off + 3);
  }
}

Eigen::VectorXd kalman_update(FilterState& state, const Eigen::VectorXd& residual, const Eigen::MatrixXd& H,
                              const Eigen::MatrixXd& R) {
  Eigen::MatrixXd& P = state.covariance;
  const Eigen::MatrixXd pht = P * H.transpose();
  const Eigen::MatrixXd s = H * pht + R;
  const Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalError("innovation covariance is not positive definite");
  const Eigen::MatrixXd k = llt.solve(pht.transpose()).transpose();
  const Eigen::VectorXd dx = k * residual;
  if (!dx.allFinite()) throw NumericalError("non-finite state correction");

  // Joseph form (I-KH) P (I-KH)^T + K R K^T, expanded to avoid n x n products.
  const Eigen::MatrixXd k_pht = k * pht.transpose();
  P += -k_pht - k_pht.transpose() + k * s * k.transpose();
  P = 0.5 * (P + P.transpose()).eval();

  inject_error(state, dx);
  return dx;
}

std::size_t select_clone_to_marginalize(const FilterState& state, std::span<const FeatureTrack> active_tracks) {
  if (state.clones.size() < 2) return 0;
  const std::int64_t oldest = state.clones.front().id;
  for (const auto& t : active_tracks)
    for (const auto& o : t.observations)
      if (o.clone_id == oldest) return 1;
  return 0;
}

void marginalize_clone(FilterState& state, std::size_t index) {
  remove_states(state.covariance, state.clone_offset(index), 6);
  state.clones.erase(state.clones.begin() + static_cast<std::ptrdiff_t>(index));
}

const CameraClone& augment_state(FilterState& state, const ExtrinsicSet& extr, std::size_t window_size,
                                 std::span<const FeatureTrack> active_tracks) {
  if (window_size > 0 && state.clones.size() >= window_size)
    marginalize_clone(state, select_clone_to_marginalize(state, active_tracks));

  const Eigen::Index n = state.dim();
  const auto j_ins = clone_jacobian(state.ins, extr);
  Eigen::MatrixXd& P = state.covariance;
  const Eigen::MatrixXd jp = j_ins * P.topRows(kInsErrorDim);  // 6 x n
  Eigen::MatrixXd out(n + 6, n + 6);
  out.topLeftCorner(n, n) = P;
  out.bottomLeftCorner(6, n) = jp;
  out.topRightCorner(n, 6) = jp.transpose();
  const Eigen::Matrix<double, 6, 6> block = jp.leftCols(kInsErrorDim) * j_ins.transpose();
  out.bottomRightCorner(6, 6) = 0.5 * (block + block.transpose());
  P = std::move(out);

  state.clones.push_back(make_clone(state.next_clone_id++, state.time, state.ins, extr));
  return state.clones.back();
}

}  // namespace cnav
