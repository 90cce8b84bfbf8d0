#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "cnav/dataset.hpp"
#include "cnav/evaluation.hpp"
#include "cnav/fusion_filter.hpp"
#include "cnav/run_config.hpp"

namespace cnav {

/// LOS/NLOS bookkeeping of one GNSS epoch.
struct EpochSatelliteCounts {
  double time = 0.0;
  std::size_t los = 0;
  std::size_t nlos = 0;
  std::size_t out_of_image = 0;
  bool mask_missing = false;
};

struct PipelineResult {
  std::vector<TrajectoryPoint> trajectory;  // one point per GNSS epoch, after its update
  std::vector<UpdateReport> reports;
  std::vector<EpochSatelliteCounts> satellites;
  std::optional<ErrorReport> error;  // when the dataset carries truth
  std::size_t masks_missing = 0;
  std::size_t imu_gaps = 0;
};

/// Runs the filter over the dataset: INS propagation to each measurement
/// time, then GNSS (first on ties) and camera events in time order.
/// Throws NumericalError on filter breakdown.
PipelineResult run_pipeline(const RunConfig& cfg, const Dataset& ds);

/// trajectory.csv, updates.jsonl, error_report.json (with truth),
/// plot_errors.csv (with truth), plot_sats.csv; each written atomically.
void write_result_bundle(const std::filesystem::path& dir, const PipelineResult& result);

}  // namespace cnav
