#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cnav/dataset.hpp"
#include "cnav/run_config.hpp"

namespace cnav {

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

// Stream files. Readers throw DataError naming the file and line; lines
// starting with '#' are comments.
std::vector<ImuSample> read_imu_csv(const std::filesystem::path& path);
void write_imu_csv(const std::filesystem::path& path, const std::vector<ImuSample>& samples);

/// One epoch per distinct time; rows of an epoch must be contiguous.
std::vector<GnssEpoch> read_gnss_csv(const std::filesystem::path& path);
/// Writes `sats` (or `base_sats` when `base` is set) of every epoch.
void write_gnss_csv(const std::filesystem::path& path, const std::vector<GnssEpoch>& epochs, bool base = false);

std::vector<TrackRow> read_tracks_csv(const std::filesystem::path& path);
void write_tracks_csv(const std::filesystem::path& path, const std::vector<TrackRow>& rows);

/// Trajectory (estimate or truth): ECEF, ENU, ENU velocity, quaternion.
std::vector<TrajectoryPoint> read_trajectory_csv(const std::filesystem::path& path);
void write_trajectory_csv(const std::filesystem::path& path, const std::vector<TrajectoryPoint>& points);

std::vector<TruthLabel> read_truth_labels_csv(const std::filesystem::path& path);
void write_truth_labels_csv(const std::filesystem::path& path, const std::vector<TruthLabel>& labels);

/// Attaches base observations to rover epochs whose times agree within 1 ms.
void attach_base(std::vector<GnssEpoch>& rover, const std::vector<GnssEpoch>& base,
                 const std::optional<EcefPosition>& base_position);

/// Loads and validates every stream referenced by the config.
Dataset parse_dataset(const RunConfig& cfg);

/// Writes every stream of `ds` under `dir` using the simulator's file names.
void write_dataset(const std::filesystem::path& dir, const Dataset& ds);

}  // namespace cnav
