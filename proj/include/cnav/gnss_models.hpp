#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cnav/geodesy.hpp"

namespace cnav {

/// Opaque satellite identifier, e.g. "G05". The first character names the
/// constellation; nothing else about the id is interpreted.
using SatId = std::string;

inline char constellation_of(const SatId& id) { return id.empty() ? '?' : id.front(); }

enum class SignalLabel { Los, Nlos };

enum class ObservationKind { Pseudorange, Carrier };

struct SatelliteState {
  SatId id;
  EcefPosition position;
  double clock = 0.0;        // satellite clock offset t^s (s)
  double snr = 45.0;         // dB-Hz
  double wavelength = 0.19;  // m
};

struct GnssObservation {
  SatId id;
  double pseudorange = 0.0;  // m
  double carrier = 0.0;      // m
  bool pseudorange_valid = true;
  bool carrier_valid = true;
  bool loss_of_lock = false;
  // Atmospheric delays supplied with the observation (zero when pre-corrected).
  double iono = 0.0;
  double tropo = 0.0;
};

struct SatObservation {
  GnssObservation obs;
  SatelliteState sat;
};

struct GnssEpoch {
  double time = 0.0;
  std::vector<SatObservation> sats;
  // RTK only.
  std::vector<SatObservation> base_sats;
  std::optional<EcefPosition> base_position;

  const SatObservation* find(const SatId& id) const;
  const SatObservation* find_base(const SatId& id) const;
};

struct ElevationAzimuth {
  double elevation = 0.0;  // rad, [0, pi/2]
  double azimuth = 0.0;    // rad, [0, 2pi), clockwise from North
};

/// Line-of-sight elevation/azimuth at the receiver; nullopt below the horizon.
std::optional<ElevationAzimuth> elevation_azimuth(const EcefPosition& sat, const EcefPosition& rcv);

struct AtmosConfig {
  double iono = 0.0;
  double tropo = 0.0;
};

/// rho + clock_r - c*t^s + I + T.
double predict_pseudorange(const EcefPosition& rcv, double clock_r_m, const SatelliteState& sat,
                           const AtmosConfig& atmos);

/// rho + clock_r - c*t^s - I + T (ambiguity excluded).
double predict_carrier(const EcefPosition& rcv, double clock_r_m, const SatelliteState& sat,
                       const AtmosConfig& atmos);

struct StochasticConfig {
  double sigma_pseudorange = 0.3;  // m
  double sigma_carrier = 0.03;     // m
  double snr_s1 = 50.0;
  double snr_s0 = 10.0;
  double snr_a = 20.0;
  double snr_A = 30.0;
  double nlos_scale = 10.0;
};

/// SNR-dependent variance multiplier (goGPS form), clamped to >= 1.
double snr_multiplier(double snr, const StochasticConfig& cfg);

/// Elevation/SNR observation variance in m^2; NLOS is scaled by cfg.nlos_scale.
/// Throws std::invalid_argument when ele <= 0.
double observation_variance(SignalLabel label, ObservationKind kind, double elevation, double snr,
                            const StochasticConfig& cfg);

/// Per-satellite weighting inputs for one receiver.
struct WeightInputs {
  double elevation = 0.0;
  double snr = 0.0;
  SignalLabel label = SignalLabel::Los;
};

struct DdObservation {
  SatId reference;
  SatId other;
  double dd_pseudorange = 0.0;  // m
  double dd_carrier = 0.0;      // m
  bool pseudorange_valid = true;
  bool carrier_valid = true;
  double dd_iono = 0.0;
  double dd_tropo = 0.0;
  double wavelength = 0.19;  // of `other`
  bool loss_of_lock = false;  // set when either satellite reports LLI at either receiver
  WeightInputs rover_ref, rover_other, base_ref, base_other;
};

/// Per-satellite information used to pick the reference and to weight the
/// double differences. `rover` must cover every satellite common to both epochs.
struct DdWeighting {
  SatId id;
  WeightInputs rover;
  WeightInputs base;
};

/// Double differences between `rover` and `base` against the highest-elevation
/// LOS common satellite (highest elevation overall when none is LOS).
/// Returns an empty list when fewer than two satellites are common.
std::vector<DdObservation> form_double_differences(const GnssEpoch& rover, const GnssEpoch& base,
                                                   std::span<const DdWeighting> weighting);

/// Dense DD covariance induced by differencing: the shared reference satellite
/// correlates every row.
Eigen::MatrixXd dd_covariance(std::span<const DdObservation> dds, ObservationKind kind,
                              const StochasticConfig& cfg);

}  // namespace cnav
