#include "cnav/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "cnav/errors.hpp"

namespace cnav {

ErrorReport compute_rmse(const std::vector<TrajectoryPoint>& estimate, const std::vector<TrajectoryPoint>& truth) {
  if (truth.empty()) throw DataError("empty truth trajectory");
  const GeodeticPosition anchor = ecef_to_geodetic(truth.front().ecef);
  ErrorReport r;
  Vec3 sum = Vec3::Zero();
  for (const auto& e : estimate) {
    auto it = std::lower_bound(truth.begin(), truth.end(), e.time,
                               [](const TrajectoryPoint& p, double t) { return p.time < t; });
    const TrajectoryPoint* best = nullptr;
    for (auto c : {it, it == truth.begin() ? it : std::prev(it)}) {
      if (c == truth.end()) continue;
      if (std::abs(c->time - e.time) <= kMatchTolerance &&
          (!best || std::abs(c->time - e.time) < std::abs(best->time - e.time)))
        best = &*c;
    }
    if (!best) continue;
    const Vec3 d = ecef_to_enu(e.ecef, anchor) - ecef_to_enu(best->ecef, anchor);
    r.times.push_back(e.time);
    r.errors.push_back(d);
    sum += d.cwiseAbs2();
  }
  r.matched = r.errors.size();
  if (r.matched < kMinMatchedEpochs)
    throw DataError("only " + std::to_string(r.matched) + " epochs match the truth within 1 ms (need " +
                    std::to_string(kMinMatchedEpochs) + ")");
  r.rmse = (sum / static_cast<double>(r.matched)).cwiseSqrt();
  return r;
}

Improvement ab_compare(const Vec3& baseline, const Vec3& test) {
  Improvement out;
  for (int i = 0; i < 3; ++i)
    if (baseline(i) > 0.0) out[static_cast<std::size_t>(i)] = 100.0 * (baseline(i) - test(i)) / baseline(i);
  return out;
}

Improvement ab_compare(const ErrorReport& baseline, const ErrorReport& test) {
  return ab_compare(baseline.rmse, test.rmse);
}

nlohmann::json error_report_to_json(const ErrorReport& r) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["matched"] = r.matched;
  j["rmse"] = {{"e", r.rmse.x()}, {"n", r.rmse.y()}, {"u", r.rmse.z()}};
  j["horizontal_rmse"] = r.horizontal_rmse();
  return j;
}

ErrorReport error_report_from_json(const nlohmann::json& j) {
  try {
    ErrorReport r;
    const auto& m = j.at("rmse");
    r.rmse = Vec3(m.at("e").get<double>(), m.at("n").get<double>(), m.at("u").get<double>());
    r.matched = j.at("matched").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed error report: ") + e.what());
  }
}

}  // namespace cnav
