#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cnav/geodesy.hpp"
#include "cnav/gnss_models.hpp"
#include "cnav/ins_mech.hpp"
#include "cnav/msckf_vision.hpp"
#include "cnav/sky_ndm.hpp"

namespace cnav {

enum class GnssMode { Spp, Rtk };

std::string_view to_string(GnssMode mode);

struct AmbiguityKey {
  SatId reference;
  SatId other;
  bool operator==(const AmbiguityKey&) const = default;
};

struct FilterConfig {
  GnssMode mode = GnssMode::Spp;
  GeodeticPosition anchor;
  Vec3 lever_arm = Vec3::Zero();  // GNSS antenna in body frame
  StochasticConfig stochastic;
  ProcessNoiseConfig process;
  ExtrinsicSet extrinsics;
  std::size_t window_size = 20;
  double clock_prior_sigma = 300.0;           // m
  double ambiguity_prior_sigma = 10.0;        // cycles
  double gnss_gate_probability = 0.99;
  double vision_gate_probability = 0.95;
  double pixel_noise = 0.5 / 500.0;           // normalized image units
  TriangulationOptions triangulation;
};

/// Error-state filter bookkeeping: the nominal state plus one covariance over
/// [INS 15 | GNSS y | 6 per camera clone].
struct FilterState {
  InsState ins;
  GnssMode mode = GnssMode::Spp;
  // SPP: one receiver clock (m) per constellation.
  std::vector<char> clock_keys;
  std::vector<double> clocks;
  // RTK: float DD ambiguities (cycles) and their wavelengths.
  std::vector<AmbiguityKey> ambiguity_keys;
  std::vector<double> ambiguities;
  std::vector<double> ambiguity_wavelengths;
  std::vector<CameraClone> clones;
  Eigen::MatrixXd covariance;
  double time = 0.0;
  std::int64_t next_clone_id = 0;

  Eigen::Index gnss_offset() const { return kInsErrorDim; }
  Eigen::Index gnss_dim() const {
    return static_cast<Eigen::Index>(mode == GnssMode::Spp ? clock_keys.size() : ambiguity_keys.size());
  }
  Eigen::Index clone_offset(std::size_t i) const {
    return kInsErrorDim + gnss_dim() + 6 * static_cast<Eigen::Index>(i);
  }
  Eigen::Index dim() const { return clone_offset(clones.size()); }

  std::optional<std::size_t> clock_index(char constellation) const;
  std::optional<std::size_t> ambiguity_index(const AmbiguityKey& key) const;
  std::optional<std::size_t> clone_index(std::int64_t id) const;

  /// Throws NumericalError if the covariance dimension disagrees with the layout.
  void check_layout() const;
};

struct InitialUncertainty {
  double position = 1.0;       // m
  double velocity = 0.1;       // m/s
  double attitude = 0.01;      // rad
  double accel_bias = 0.02;    // m/s^2
  double gyro_bias = 1e-3;     // rad/s
};

FilterState make_filter_state(const InsState& ins, GnssMode mode, const InitialUncertainty& sigma, double time);

struct UpdateReport {
  double time = 0.0;
  std::string kind;  // "spp", "rtk", "vision"
  std::size_t used = 0;
  std::size_t los = 0;
  std::size_t nlos = 0;
  std::vector<std::string> rejected;
  double residual_norm_pre = 0.0;
  double residual_norm_post = 0.0;
  double correction_norm = 0.0;
  bool skipped = false;
};

/// Removes `count` states starting at `start` (rows and columns).
void remove_states(Eigen::MatrixXd& P, Eigen::Index start, Eigen::Index count);

/// Inserts `count` uncorrelated states with variance `prior_variance` at `at`.
void insert_states(Eigen::MatrixXd& P, Eigen::Index at, Eigen::Index count, double prior_variance);

/// Folds an error-state vector into the nominal state.
void inject_error(FilterState& state, const Eigen::VectorXd& dx);

/// Joseph-form linear update; injects and zeroes the error state.
/// Returns the applied correction dx.
Eigen::VectorXd kalman_update(FilterState& state, const Eigen::VectorXd& residual, const Eigen::MatrixXd& H,
                              const Eigen::MatrixXd& R);

/// Appends a camera clone of the current IMU pose and expands the covariance.
/// When the window is already full, one clone is marginalized first
/// (see select_clone_to_marginalize).
const CameraClone& augment_state(FilterState& state, const ExtrinsicSet& extr, std::size_t window_size,
                                 std::span<const FeatureTrack> active_tracks = {});

/// Keyframe thinning: the second-oldest clone, unless no active track still
/// references the oldest one, in which case the oldest.
std::size_t select_clone_to_marginalize(const FilterState& state, std::span<const FeatureTrack> active_tracks);

void marginalize_clone(FilterState& state, std::size_t index);

/// Antenna position predicted from the nominal INS state.
EcefPosition antenna_position(const FilterState& state, const FilterConfig& cfg);

/// SPP: re-initializes one epoch-white clock per constellation present.
/// RTK: remaps ambiguities on a reference switch, drops lost or slipped
/// pairs, and inserts new pairs with the configured prior.
void manage_gnss_states(FilterState& state, const GnssEpoch& epoch, std::span<const DdObservation> dds,
                        const FilterConfig& cfg);

/// S-NDM label lookup; satellites without a projection are LOS.
SignalLabel label_for(const SatId& id, std::span<const SatelliteProjection> labels);

UpdateReport update_spp(FilterState& state, const GnssEpoch& epoch, std::span<const SatelliteProjection> labels,
                        const FilterConfig& cfg);

UpdateReport update_rtk(FilterState& state, const GnssEpoch& epoch, std::span<const DdObservation> dds,
                        const FilterConfig& cfg);

/// Chi-square test of a projected feature residual at the configured probability.
bool passes_vision_gate(const FilterState& state, const ProjectedResidual& projected, double pixel_noise,
                        double probability);

/// Joint update on stacked projected residuals with R = pixel_noise^2 I.
UpdateReport update_vision(FilterState& state, std::span<const ProjectedResidual> projected, double pixel_noise);

/// Upper quantile of the chi-square distribution.
double chi_square_quantile(double probability, int dof);

}  // namespace cnav
