#include "cnav/gnss_models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace cnav {

const SatObservation* GnssEpoch::find(const SatId& id) const {
  for (const auto& s : sats)
    if (s.obs.id == id) return &s;
  return nullptr;
}

const SatObservation* GnssEpoch::find_base(const SatId& id) const {
  for (const auto& s : base_sats)
    if (s.obs.id == id) return &s;
  return nullptr;
}

std::optional<ElevationAzimuth> elevation_azimuth(const EcefPosition& sat, const EcefPosition& rcv) {
  const GeodeticPosition geo = ecef_to_geodetic(rcv);
  const Vec3 los = ecef_to_enu_rotation(geo) * (sat.xyz - rcv.xyz);
  const double horiz = std::hypot(los.x(), los.y());
  const double ele = std::atan2(los.z(), horiz);
  if (ele < 0.0) return std::nullopt;
  ElevationAzimuth ea;
  ea.elevation = ele;
  ea.azimuth = horiz > 0.0 ? wrap_two_pi(std::atan2(los.x(), los.y())) : 0.0;
  return ea;
}

double predict_pseudorange(const EcefPosition& rcv, double clock_r_m, const SatelliteState& sat,
                           const AtmosConfig& atmos) {
  const double rho = (sat.position.xyz - rcv.xyz).norm();
  return rho + clock_r_m - kSpeedOfLight * sat.clock + atmos.iono + atmos.tropo;
}

double predict_carrier(const EcefPosition& rcv, double clock_r_m, const SatelliteState& sat,
                       const AtmosConfig& atmos) {
  const double rho = (sat.position.xyz - rcv.xyz).norm();
  return rho + clock_r_m - kSpeedOfLight * sat.clock - atmos.iono + atmos.tropo;
}

double snr_multiplier(double snr, const StochasticConfig& cfg) {
  if (snr >= cfg.snr_s1) return 1.0;
  const double s1 = cfg.snr_s1, s0 = cfg.snr_s0, a = cfg.snr_a, big_a = cfg.snr_A;
  const double m = std::pow(10.0, -(snr - s1) / a) *
                   ((big_a / std::pow(10.0, -(s0 - s1) / a) - 1.0) * (snr - s1) / (s0 - s1) + 1.0);
  return std::max(m, 1.0);
}

double observation_variance(SignalLabel label, ObservationKind kind, double elevation, double snr,
                            const StochasticConfig& cfg) {
  if (!(elevation > 0.0)) throw std::invalid_argument("observation_variance: elevation must be > 0");
  const double s = std::sin(elevation);
  const double sigma = kind == ObservationKind::Pseudorange ? cfg.sigma_pseudorange : cfg.sigma_carrier;
  const double los = snr_multiplier(snr, cfg) * sigma * sigma / (s * s);
  return label == SignalLabel::Nlos ? cfg.nlos_scale * los : los;
}

std::vector<DdObservation> form_double_differences(const GnssEpoch& rover, const GnssEpoch& base,
                                                   std::span<const DdWeighting> weighting) {
  std::unordered_map<SatId, const DdWeighting*> w;
  for (const auto& item : weighting) w[item.id] = &item;

  struct Common {
    const SatObservation* r;
    const SatObservation* b;
    const DdWeighting* w;
  };
  std::vector<Common> common;
  for (const auto& r : rover.sats) {
    const SatObservation* b = base.find(r.obs.id);
    auto it = w.find(r.obs.id);
    if (b == nullptr || it == w.end()) continue;
    common.push_back({&r, b, it->second});
  }
  if (common.size() < 2) return {};

  auto pick = [&](bool require_los) -> const Common* {
    const Common* best = nullptr;
    for (const auto& c : common) {
      if (require_los && c.w->rover.label != SignalLabel::Los) continue;
      if (best == nullptr || c.w->rover.elevation > best->w->rover.elevation) best = &c;
    }
    return best;
  };
  const Common* ref = pick(true);
  if (ref == nullptr) ref = pick(false);

  const auto sd = [](const Common& c, auto field) { return c.r->obs.*field - c.b->obs.*field; };
  const double ref_p = sd(*ref, &GnssObservation::pseudorange);
  const double ref_l = sd(*ref, &GnssObservation::carrier);
  const double ref_i = sd(*ref, &GnssObservation::iono);
  const double ref_t = sd(*ref, &GnssObservation::tropo);
  const bool ref_lli = ref->r->obs.loss_of_lock || ref->b->obs.loss_of_lock;

  std::vector<DdObservation> out;
  out.reserve(common.size() - 1);
  for (const auto& c : common) {
    if (&c == ref) continue;
    DdObservation dd;
    dd.reference = ref->r->obs.id;
    dd.other = c.r->obs.id;
    dd.dd_pseudorange = sd(c, &GnssObservation::pseudorange) - ref_p;
    dd.dd_carrier = sd(c, &GnssObservation::carrier) - ref_l;
    dd.dd_iono = sd(c, &GnssObservation::iono) - ref_i;
    dd.dd_tropo = sd(c, &GnssObservation::tropo) - ref_t;
    dd.pseudorange_valid = c.r->obs.pseudorange_valid && c.b->obs.pseudorange_valid &&
                           ref->r->obs.pseudorange_valid && ref->b->obs.pseudorange_valid;
    dd.carrier_valid = c.r->obs.carrier_valid && c.b->obs.carrier_valid && ref->r->obs.carrier_valid &&
                       ref->b->obs.carrier_valid;
    dd.wavelength = c.r->sat.wavelength;
    dd.loss_of_lock = ref_lli || c.r->obs.loss_of_lock || c.b->obs.loss_of_lock;
    dd.rover_ref = ref->w->rover;
    dd.rover_other = c.w->rover;
    dd.base_ref = ref->w->base;
    dd.base_other = c.w->base;
    out.push_back(dd);
  }
  return out;
}

Eigen::MatrixXd dd_covariance(std::span<const DdObservation> dds, ObservationKind kind,
                              const StochasticConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(dds.size());
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(n, n);
  if (n == 0) return cov;
  auto var = [&](const WeightInputs& in) {
    return observation_variance(in.label, kind, in.elevation, in.snr, cfg);
  };
  // Single-difference variance of the reference is shared by all rows.
  const double ref_sd = var(dds[0].rover_ref) + var(dds[0].base_ref);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& d = dds[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < n; ++j) cov(i, j) = ref_sd;
    cov(i, i) += var(d.rover_other) + var(d.base_other);
  }
  return cov;
}

}  // namespace cnav
