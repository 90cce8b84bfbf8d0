#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>
#include <unordered_set>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include "cnav/errors.hpp"
#include "cnav/fusion_filter.hpp"

namespace cnav {

using namespace ins_index;

double chi_square_quantile(double probability, int dof) {
  static thread_local std::map<std::pair<double, int>, double> cache;
  const auto key = std::make_pair(probability, dof);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const double q = boost::math::quantile(boost::math::chi_squared(dof), probability);
  cache.emplace(key, q);
  return q;
}

EcefPosition antenna_position(const FilterState& state, const FilterConfig& cfg) {
  const Vec3 enu = state.ins.position + state.ins.attitude.matrix() * cfg.lever_arm;
  return enu_to_ecef(enu, cfg.anchor);
}

SignalLabel label_for(const SatId& id, std::span<const SatelliteProjection> labels) {
  for (const auto& p : labels)
    if (p.id == id) return to_signal_label(p.label);
  return SignalLabel::Los;
}

namespace {

struct Geometry {
  EcefPosition antenna;
  Mat3 ecef_to_enu;
  Mat3 lever_matrix;  // R [l]x, so d(range)/d(dtheta) = e^T R [l]x
};

Geometry make_geometry(const FilterState& state, const FilterConfig& cfg) {
  Geometry g;
  g.antenna = antenna_position(state, cfg);
  g.ecef_to_enu = ecef_to_enu_rotation(cfg.anchor);
  g.lever_matrix = state.ins.attitude.matrix() * skew(cfg.lever_arm);
  return g;
}

/// Unit vector receiver -> satellite in the navigation frame, and the range.
std::pair<Vec3, double> line_of_sight(const Geometry& g, const EcefPosition& sat) {
  const Vec3 d = sat.xyz - g.antenna.xyz;
  const double rho = d.norm();
  return {g.ecef_to_enu * d / rho, rho};
}

struct DdPrediction {
  double range_dd = 0.0;
  Eigen::RowVector3d h_pos;
  Eigen::RowVector3d h_att;
};

std::optional<DdPrediction> predict_dd(const Geometry& g, const GnssEpoch& epoch, const DdObservation& dd) {
  const SatObservation* ref = epoch.find(dd.reference);
  const SatObservation* oth = epoch.find(dd.other);
  if (ref == nullptr || oth == nullptr || !epoch.base_position) return std::nullopt;
  const SatObservation* bref = epoch.find_base(dd.reference);
  const SatObservation* both = epoch.find_base(dd.other);
  const Vec3& base = epoch.base_position->xyz;
  const Vec3& sref_base = (bref ? bref->sat : ref->sat).position.xyz;
  const Vec3& soth_base = (both ? both->sat : oth->sat).position.xyz;

  const auto [e_ref, rho_ref] = line_of_sight(g, ref->sat.position);
  const auto [e_oth, rho_oth] = line_of_sight(g, oth->sat.position);
  DdPrediction p;
  p.range_dd = (rho_oth - (soth_base - base).norm()) - (rho_ref - (sref_base - base).norm());
  const Vec3 de = e_oth - e_ref;
  p.h_pos = -de.transpose();
  p.h_att = de.transpose() * g.lever_matrix;
  return p;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void manage_spp(FilterState& state, const GnssEpoch& epoch, const FilterConfig& cfg) {
  const Geometry g = make_geometry(state, cfg);
  std::map<char, std::vector<double>> offsets;
  for (const auto& s : epoch.sats) {
    if (!s.obs.pseudorange_valid) continue;
    const double pred = predict_pseudorange(g.antenna, 0.0, s.sat, {s.obs.iono, s.obs.tropo});
    offsets[constellation_of(s.obs.id)].push_back(s.obs.pseudorange - pred);
  }
  remove_states(state.covariance, state.gnss_offset(), state.gnss_dim());
  state.clock_keys.clear();
  state.clocks.clear();
  for (const auto& [c, v] : offsets) {
    state.clock_keys.push_back(c);
    state.clocks.push_back(median(v));
  }
  insert_states(state.covariance, state.gnss_offset(), static_cast<Eigen::Index>(state.clock_keys.size()),
                cfg.clock_prior_sigma * cfg.clock_prior_sigma);
}

void remove_ambiguity(FilterState& state, std::size_t i) {
  remove_states(state.covariance, state.gnss_offset() + static_cast<Eigen::Index>(i), 1);
  state.ambiguity_keys.erase(state.ambiguity_keys.begin() + static_cast<std::ptrdiff_t>(i));
  state.ambiguities.erase(state.ambiguities.begin() + static_cast<std::ptrdiff_t>(i));
  state.ambiguity_wavelengths.erase(state.ambiguity_wavelengths.begin() + static_cast<std::ptrdiff_t>(i));
}

void clear_ambiguities(FilterState& state) {
  while (!state.ambiguity_keys.empty()) remove_ambiguity(state, state.ambiguity_keys.size() - 1);
}

/// Re-expresses every ambiguity against `new_ref` as a linear map of the
/// existing ones; requires the pair (old_ref, new_ref) to be tracked.
bool switch_reference(FilterState& state, const SatId& new_ref) {
  const SatId old_ref = state.ambiguity_keys.front().reference;
  const auto pivot = state.ambiguity_index({old_ref, new_ref});
  if (!pivot) return false;
  const double lambda = state.ambiguity_wavelengths[*pivot];
  for (double l : state.ambiguity_wavelengths)
    if (std::abs(l - lambda) > 1e-12) return false;

  const auto y = static_cast<Eigen::Index>(state.ambiguity_keys.size());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(y, y);
  std::vector<AmbiguityKey> keys(state.ambiguity_keys.size());
  const auto p = static_cast<Eigen::Index>(*pivot);
  for (Eigen::Index i = 0; i < y; ++i) {
    const auto& k = state.ambiguity_keys[static_cast<std::size_t>(i)];
    if (i == p) {
      keys[static_cast<std::size_t>(i)] = {new_ref, old_ref};
      t(i, p) = -1.0;
    } else {
      keys[static_cast<std::size_t>(i)] = {new_ref, k.other};
      t(i, i) = 1.0;
      t(i, p) = -1.0;
    }
  }
  const Eigen::VectorXd values = t * Eigen::Map<const Eigen::VectorXd>(state.ambiguities.data(), y);
  state.ambiguities.assign(values.data(), values.data() + y);
  state.ambiguity_keys = std::move(keys);

  Eigen::MatrixXd& P = state.covariance;
  const Eigen::Index g = state.gnss_offset();
  P.middleRows(g, y) = (t * P.middleRows(g, y)).eval();
  P.middleCols(g, y) = (P.middleCols(g, y) * t.transpose()).eval();
  return true;
}

void manage_rtk(FilterState& state, const GnssEpoch& epoch, std::span<const DdObservation> dds,
                const FilterConfig& cfg) {
  if (dds.empty()) {
    clear_ambiguities(state);
    return;
  }
  const SatId& ref = dds.front().reference;
  if (!state.ambiguity_keys.empty() && state.ambiguity_keys.front().reference != ref) {
    if (!switch_reference(state, ref)) clear_ambiguities(state);
  }

  std::unordered_map<SatId, const DdObservation*> current;
  for (const auto& d : dds)
    if (d.carrier_valid) current[d.other] = &d;

  for (std::size_t i = state.ambiguity_keys.size(); i-- > 0;) {
    const auto it = current.find(state.ambiguity_keys[i].other);
    if (it == current.end() || it->second->loss_of_lock) remove_ambiguity(state, i);
  }

  const Geometry g = make_geometry(state, cfg);
  const double prior = cfg.ambiguity_prior_sigma * cfg.ambiguity_prior_sigma;
  for (const auto& d : dds) {
    if (!d.carrier_valid || state.ambiguity_index({d.reference, d.other})) continue;
    const auto pred = predict_dd(g, epoch, d);
    if (!pred) continue;
    const double n0 = (d.dd_carrier - (pred->range_dd - d.dd_iono + d.dd_tropo)) / d.wavelength;
    const Eigen::Index at = state.gnss_offset() + state.gnss_dim();
    insert_states(state.covariance, at, 1, prior);
    state.ambiguity_keys.push_back({d.reference, d.other});
    state.ambiguities.push_back(n0);
    state.ambiguity_wavelengths.push_back(d.wavelength);
  }
}

/// Copies with every label set to LOS.
std::vector<DdObservation> as_los(std::vector<DdObservation> dds) {
  for (auto& d : dds)
    for (WeightInputs* w : {&d.rover_ref, &d.rover_other, &d.base_ref, &d.base_other}) w->label = SignalLabel::Los;
  return dds;
}

/// Per-row innovation gate against the nominal (LOS) noise model; returns
/// accepted row indices. An NLOS label must not make a row easier to accept.
std::vector<Eigen::Index> gate_rows(const FilterState& state, const Eigen::VectorXd& r, const Eigen::MatrixXd& H,
                                    const Eigen::MatrixXd& R, double probability) {
  const double threshold = chi_square_quantile(probability, 1);
  const Eigen::MatrixXd hp = H * state.covariance;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    const double s = hp.row(i).dot(H.row(i)) + R(i, i);
    if (r(i) * r(i) / s <= threshold) keep.push_back(i);
  }
  return keep;
}

template <typename Idx>
Eigen::MatrixXd select_rows(const Eigen::MatrixXd& m, const Idx& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

template <typename Idx>
Eigen::MatrixXd select_square(const Eigen::MatrixXd& m, const Idx& idx) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  Eigen::MatrixXd out(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) out(i, j) = m(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  return out;
}

}  // namespace

void manage_gnss_states(FilterState& state, const GnssEpoch& epoch, std::span<const DdObservation> dds,
                        const FilterConfig& cfg) {
  if (state.mode == GnssMode::Spp)
    manage_spp(state, epoch, cfg);
  else
    manage_rtk(state, epoch, dds, cfg);
  state.check_layout();
}

UpdateReport update_spp(FilterState& state, const GnssEpoch& epoch, std::span<const SatelliteProjection> labels,
                        const FilterConfig& cfg) {
  UpdateReport report;
  report.time = epoch.time;
  report.kind = "spp";
  const Geometry g = make_geometry(state, cfg);
  const Eigen::Index n = state.dim();

  std::vector<const SatObservation*> used;
  std::vector<double> residuals, variances, nominal;
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<SignalLabel> used_labels;
  for (const auto& s : epoch.sats) {
    if (!s.obs.pseudorange_valid) continue;
    const auto ea = elevation_azimuth(s.sat.position, g.antenna);
    const auto ci = state.clock_index(constellation_of(s.obs.id));
    if (!ea || ea->elevation <= 0.0 || !ci) continue;
    const SignalLabel label = label_for(s.obs.id, labels);
    const double pred = predict_pseudorange(g.antenna, state.clocks[*ci], s.sat, {s.obs.iono, s.obs.tropo});
    const auto [e, rho] = line_of_sight(g, s.sat.position);
    Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(n);
    h.segment<3>(kPos) = -e.transpose();
    h.segment<3>(kAtt) = e.transpose() * g.lever_matrix;
    h(state.gnss_offset() + static_cast<Eigen::Index>(*ci)) = 1.0;
    used.push_back(&s);
    residuals.push_back(s.obs.pseudorange - pred);
    variances.push_back(
        observation_variance(label, ObservationKind::Pseudorange, ea->elevation, s.sat.snr, cfg.stochastic));
    nominal.push_back(
        observation_variance(SignalLabel::Los, ObservationKind::Pseudorange, ea->elevation, s.sat.snr, cfg.stochastic));
    rows.push_back(std::move(h));
    used_labels.push_back(label);
  }
  if (used.empty()) {
    report.skipped = true;
    return report;
  }

  const auto m = static_cast<Eigen::Index>(used.size());
  Eigen::VectorXd r = Eigen::Map<Eigen::VectorXd>(residuals.data(), m);
  Eigen::MatrixXd H(m, n);
  for (Eigen::Index i = 0; i < m; ++i) H.row(i) = rows[static_cast<std::size_t>(i)];
  const Eigen::MatrixXd R = Eigen::Map<Eigen::VectorXd>(variances.data(), m).asDiagonal();
  const Eigen::MatrixXd R_gate = Eigen::Map<Eigen::VectorXd>(nominal.data(), m).asDiagonal();

  const auto keep = gate_rows(state, r, H, R_gate, cfg.gnss_gate_probability);
  std::unordered_set<Eigen::Index> kept(keep.begin(), keep.end());
  for (Eigen::Index i = 0; i < m; ++i)
    if (!kept.count(i)) report.rejected.push_back(used[static_cast<std::size_t>(i)]->obs.id);
  if (keep.empty()) {
    report.skipped = true;
    return report;
  }
  for (auto i : keep) (used_labels[static_cast<std::size_t>(i)] == SignalLabel::Los ? report.los : report.nlos)++;
  report.used = keep.size();

  Eigen::VectorXd rk(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) rk(static_cast<Eigen::Index>(i)) = r(keep[i]);
  const Eigen::MatrixXd Hk = select_rows(H, keep);
  const Eigen::MatrixXd Rk = select_square(R, keep);

  const Eigen::VectorXd dx = kalman_update(state, rk, Hk, Rk);
  report.residual_norm_pre = rk.norm();
  report.residual_norm_post = (rk - Hk * dx).norm();
  report.correction_norm = dx.norm();
  return report;
}

UpdateReport update_rtk(FilterState& state, const GnssEpoch& epoch, std::span<const DdObservation> dds,
                        const FilterConfig& cfg) {
  UpdateReport report;
  report.time = epoch.time;
  report.kind = "rtk";
  if (dds.empty()) {
    report.skipped = true;
    return report;
  }
  const Geometry g = make_geometry(state, cfg);
  const Eigen::Index n = state.dim();

  std::vector<DdObservation> code_dd, phase_dd;
  std::vector<double> code_res, phase_res;
  std::vector<Eigen::RowVectorXd> code_rows, phase_rows;
  for (const auto& d : dds) {
    const auto pred = predict_dd(g, epoch, d);
    if (!pred) continue;
    Eigen::RowVectorXd h = Eigen::RowVectorXd::Zero(n);
    h.segment<3>(kPos) = pred->h_pos;
    h.segment<3>(kAtt) = pred->h_att;
    if (d.pseudorange_valid) {
      code_dd.push_back(d);
      code_res.push_back(d.dd_pseudorange - (pred->range_dd + d.dd_iono + d.dd_tropo));
      code_rows.push_back(h);
    }
    const auto ai = state.ambiguity_index({d.reference, d.other});
    if (d.carrier_valid && ai) {
      const double lambda = state.ambiguity_wavelengths[*ai];
      Eigen::RowVectorXd hl = h;
      hl(state.gnss_offset() + static_cast<Eigen::Index>(*ai)) = lambda;
      phase_dd.push_back(d);
      phase_res.push_back(d.dd_carrier -
                          (pred->range_dd - d.dd_iono + d.dd_tropo + lambda * state.ambiguities[*ai]));
      phase_rows.push_back(std::move(hl));
    }
  }
  const auto mc = static_cast<Eigen::Index>(code_dd.size());
  const auto mp = static_cast<Eigen::Index>(phase_dd.size());
  if (mc + mp == 0) {
    report.skipped = true;
    return report;
  }

  Eigen::VectorXd r(mc + mp);
  Eigen::MatrixXd H(mc + mp, n);
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(mc + mp, mc + mp);
  for (Eigen::Index i = 0; i < mc; ++i) {
    r(i) = code_res[static_cast<std::size_t>(i)];
    H.row(i) = code_rows[static_cast<std::size_t>(i)];
  }
  for (Eigen::Index i = 0; i < mp; ++i) {
    r(mc + i) = phase_res[static_cast<std::size_t>(i)];
    H.row(mc + i) = phase_rows[static_cast<std::size_t>(i)];
  }
  R.topLeftCorner(mc, mc) = dd_covariance(code_dd, ObservationKind::Pseudorange, cfg.stochastic);
  R.bottomRightCorner(mp, mp) = dd_covariance(phase_dd, ObservationKind::Carrier, cfg.stochastic);
  Eigen::MatrixXd R_gate = Eigen::MatrixXd::Zero(mc + mp, mc + mp);
  R_gate.topLeftCorner(mc, mc) = dd_covariance(as_los(code_dd), ObservationKind::Pseudorange, cfg.stochastic);
  R_gate.bottomRightCorner(mp, mp) = dd_covariance(as_los(phase_dd), ObservationKind::Carrier, cfg.stochastic);

  const auto keep = gate_rows(state, r, H, R_gate, cfg.gnss_gate_probability);
  std::unordered_set<Eigen::Index> kept(keep.begin(), keep.end());
  for (Eigen::Index i = 0; i < mc + mp; ++i) {
    if (kept.count(i)) continue;
    const auto& d = i < mc ? code_dd[static_cast<std::size_t>(i)] : phase_dd[static_cast<std::size_t>(i - mc)];
    report.rejected.push_back((i < mc ? "P:" : "L:") + d.other);
  }
  if (keep.empty()) {
    report.skipped = true;
    return report;
  }
  std::unordered_set<SatId> seen;
  for (const auto& d : dds) {
    if (seen.insert(d.reference).second) (d.rover_ref.label == SignalLabel::Los ? report.los : report.nlos)++;
    if (seen.insert(d.other).second) (d.rover_other.label == SignalLabel::Los ? report.los : report.nlos)++;
  }
  report.used = keep.size();

  Eigen::VectorXd rk(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) rk(static_cast<Eigen::Index>(i)) = r(keep[i]);
  const Eigen::MatrixXd Hk = select_rows(H, keep);
  const Eigen::MatrixXd Rk = select_square(R, keep);

  const Eigen::VectorXd dx = kalman_update(state, rk, Hk, Rk);
  report.residual_norm_pre = rk.norm();
  report.residual_norm_post = (rk - Hk * dx).norm();
  report.correction_norm = dx.norm();
  return report;
}

namespace {

/// Expands projected clone Jacobians into full-state columns.
Eigen::MatrixXd expand_clone_jacobian(const FilterState& state, const ProjectedResidual& p) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p.h_cam.rows(), state.dim());
  for (std::size_t i = 0; i < p.clone_ids.size(); ++i) {
    const auto idx = state.clone_index(p.clone_ids[i]);
    if (!idx) throw NumericalError("vision update references a clone outside the window");
    h.middleCols(state.clone_offset(*idx), 6) += p.h_cam.middleCols(6 * static_cast<Eigen::Index>(i), 6);
  }
  return h;
}

}  // namespace

bool passes_vision_gate(const FilterState& state, const ProjectedResidual& projected, double pixel_noise,
                        double probability) {
  const Eigen::MatrixXd h = expand_clone_jacobian(state, projected);
  const Eigen::Index m = h.rows();
  Eigen::MatrixXd s = h * state.covariance * h.transpose();
  s.diagonal().array() += pixel_noise * pixel_noise;
  const double gamma = projected.residual.dot(s.ldlt().solve(projected.residual));
  return gamma <= chi_square_quantile(probability, static_cast<int>(m));
}

UpdateReport update_vision(FilterState& state, std::span<const ProjectedResidual> projected, double pixel_noise) {
  UpdateReport report;
  report.time = state.time;
  report.kind = "vision";
  Eigen::Index rows = 0;
  for (const auto& p : projected) rows += p.residual.size();
  if (rows == 0) {
    report.skipped = true;
    return report;
  }
  const Eigen::Index n = state.dim();
  Eigen::MatrixXd H(rows, n);
  Eigen::VectorXd r(rows);
  Eigen::Index at = 0;
  for (const auto& p : projected) {
    const Eigen::Index m = p.residual.size();
    H.middleRows(at, m) = expand_clone_jacobian(state, p);
    r.segment(at, m) = p.residual;
    at += m;
  }
  report.used = projected.size();
  report.residual_norm_pre = r.norm();

  // Measurement compression: with R isotropic, Q^T keeps the noise white.
  if (rows > n) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(H);
    const Eigen::VectorXd qtr = qr.householderQ().transpose() * r;
    H = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
    r = qtr.head(n);
  }
  const Eigen::MatrixXd R =
      Eigen::MatrixXd::Identity(H.rows(), H.rows()) * (pixel_noise * pixel_noise);
  const Eigen::VectorXd dx = kalman_update(state, r, H, R);
  report.residual_norm_post = (r - H * dx).norm();
  report.correction_norm = dx.norm();
  return report;
}

}  // namespace cnav
