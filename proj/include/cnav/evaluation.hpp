#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "cnav/dataset.hpp"

namespace cnav {

struct ErrorReport {
  std::vector<double> times;
  std::vector<Vec3> errors;  // ENU, estimate - truth
  Vec3 rmse = Vec3::Zero();  // E, N, U
  std::size_t matched = 0;

  double horizontal_rmse() const { return std::hypot(rmse.x(), rmse.y()); }
};

inline constexpr double kMatchTolerance = 1e-3;  // s
inline constexpr std::size_t kMinMatchedEpochs = 10;

/// Per-axis RMSE over estimate epochs with a truth sample within 1 ms, in the
/// ENU frame anchored at the first truth position. Throws DataError when
/// fewer than kMinMatchedEpochs epochs match.
ErrorReport compute_rmse(const std::vector<TrajectoryPoint>& estimate, const std::vector<TrajectoryPoint>& truth);

/// Per-axis improvement (baseline - test) / baseline in percent; an axis with
/// zero baseline RMSE has no defined improvement.
using Improvement = std::array<std::optional<double>, 3>;
Improvement ab_compare(const ErrorReport& baseline, const ErrorReport& test);
Improvement ab_compare(const Vec3& baseline_rmse, const Vec3& test_rmse);

nlohmann::json error_report_to_json(const ErrorReport& r);
/// Reads the summary (rmse, matched) written by error_report_to_json.
ErrorReport error_report_from_json(const nlohmann::json& j);

}  // namespace cnav
