#include "cnav/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "cnav/atomic_file.hpp"
#include "cnav/dataset_io.hpp"
#include "cnav/errors.hpp"

namespace cnav {

namespace {

constexpr double kPsdCheckInterval = 30.0;  // s

class Runner {
 public:
  Runner(const RunConfig& cfg, const Dataset& ds)
      : cfg_(cfg), fc_(cfg.filter_config()), ds_(ds),
        state_(make_filter_state(cfg.initial_state, cfg.mode, cfg.initial_sigma, cfg.initial_time)) {}

  PipelineResult run() {
    const auto& imu = ds_.imu;
    if (imu.size() < 2) throw DataError("need at least two IMU samples");
    if (cfg_.initial_time < imu.front().time || cfg_.initial_time > imu.back().time)
      throw DataError("initial time outside the IMU stream");
    cursor_ = static_cast<std::size_t>(
        std::upper_bound(imu.begin(), imu.end(), state_.time, [](double t, const ImuSample& s) { return t < s.time; }) -
        imu.begin() - 1);
    last_ = sample_at(state_.time);

    const auto frames = group_frames(ds_.tracks);
    std::size_t g = 0, f = 0;
    last_check_ = state_.time;
    while (g < ds_.gnss.size() || f < frames.size()) {
      const bool take_gnss = f >= frames.size() || (g < ds_.gnss.size() && ds_.gnss[g].time <= frames[f].time);
      const double t = take_gnss ? ds_.gnss[g].time : frames[f].time;
      if (t < state_.time) {
        take_gnss ? ++g : ++f;
        continue;
      }
      if (t > imu.back().time) break;
      propagate_to(t);
      if (take_gnss)
        gnss_epoch(ds_.gnss[g++]);
      else
        camera_frame(frames[f++]);
      if (state_.time - last_check_ >= kPsdCheckInterval) {
        require_psd(state_.covariance);
        last_check_ = state_.time;
      }
    }
    if (!ds_.truth.empty()) result_.error = compute_rmse(result_.trajectory, ds_.truth);
    return std::move(result_);
  }

 private:
  ImuSample sample_at(double t) const {
    const auto& imu = ds_.imu;
    if (t == imu[cursor_].time || cursor_ + 1 >= imu.size()) return imu[cursor_];
    return interpolate(imu[cursor_], imu[cursor_ + 1], t);
  }

  void propagate_to(double t) {
    const auto& imu = ds_.imu;
    while (state_.time < t) {
      const bool full = imu[cursor_ + 1].time <= t;
      const ImuSample next = full ? imu[cursor_ + 1] : interpolate(imu[cursor_], imu[cursor_ + 1], t);
      const double dt = next.time - last_.time;
      const Mat15 F = build_error_dynamics(state_.ins, last_);
      const StepResult step = mechanize_step(state_.ins, last_, next);
      propagate_covariance(state_.covariance, state_.ins, F, fc_.process, dt, PsdCheck::None);
      if (step.status == StepStatus::Gap) {
        // No usable IMU data: coast at constant velocity and let the covariance grow.
        ++result_.imu_gaps;
        state_.ins.position += state_.ins.velocity * dt;
      } else {
        state_.ins = step.state;
      }
      state_.time = next.time;
      last_ = next;
      if (full) ++cursor_;
    }
  }

  void gnss_epoch(const GnssEpoch& epoch) {
    const EcefPosition antenna = antenna_position(state_, fc_);
    std::vector<SatelliteDirection> dirs;
    std::map<SatId, ElevationAzimuth> rover_ea;
    for (const auto& s : epoch.sats)
      if (const auto ea = elevation_azimuth(s.sat.position, antenna); ea && ea->elevation > 0.0) {
        dirs.push_back({s.obs.id, *ea});
        rover_ea[s.obs.id] = *ea;
      }

    EpochSatelliteCounts counts;
    counts.time = epoch.time;
    std::vector<SatelliteProjection> labels;
    if (cfg_.sndm) {
      const SkyMask* mask = nullptr;
      if (const auto* entry = ds_.mask_manifest.nearest(epoch.time, cfg_.mask_time_tolerance)) {
        const auto it = ds_.masks.find(entry->file);
        if (it != ds_.masks.end()) mask = &it->second;
      }
      Classification c = classify_epoch(mask, dirs, state_.ins.attitude.heading(), cfg_.fisheye);
      counts.mask_missing = c.mask_missing;
      if (c.mask_missing) ++result_.masks_missing;
      labels = std::move(c.projections);
    }
    for (const auto& d : dirs) {
      const auto it = std::find_if(labels.begin(), labels.end(), [&](const auto& p) { return p.id == d.id; });
      const ProjectionLabel l = it == labels.end() ? ProjectionLabel::Los : it->label;
      if (l == ProjectionLabel::Los)
        ++counts.los;
      else
        ++counts.nlos;
      if (l == ProjectionLabel::OutOfImage) ++counts.out_of_image;
    }
    result_.satellites.push_back(counts);

    UpdateReport report;
    if (state_.mode == GnssMode::Spp) {
      manage_gnss_states(state_, epoch, {}, fc_);
      report = update_spp(state_, epoch, labels, fc_);
    } else {
      std::vector<DdObservation> dds;
      if (epoch.base_position && !epoch.base_sats.empty()) {
        GnssEpoch rover_only;
        rover_only.time = epoch.time;
        rover_only.sats = epoch.sats;
        GnssEpoch base;
        base.time = epoch.time;
        base.sats = epoch.base_sats;
        std::vector<DdWeighting> weighting;
        for (const auto& [id, ea] : rover_ea) {
          const SatObservation* b = epoch.find_base(id);
          if (b == nullptr) continue;
          const auto bea = elevation_azimuth(b->sat.position, *epoch.base_position);
          if (!bea || bea->elevation <= 0.0) continue;
          const SatObservation* r = epoch.find(id);
          weighting.push_back({id, {ea.elevation, r->sat.snr, label_for(id, labels)},
                               {bea->elevation, b->sat.snr, SignalLabel::Los}});
        }
        dds = form_double_differences(rover_only, base, weighting);
      }
      manage_gnss_states(state_, epoch, dds, fc_);
      report = update_rtk(state_, epoch, dds, fc_);
    }
    result_.reports.push_back(std::move(report));

    TrajectoryPoint p;
    p.time = epoch.time;
    p.enu = state_.ins.position;
    p.ecef = enu_to_ecef(p.enu, fc_.anchor);
    p.velocity = state_.ins.velocity;
    p.attitude = state_.ins.attitude;
    result_.trajectory.push_back(p);
  }

  /// Triangulates, projects, and gates the given tracks, then runs one joint update.
  void update_with(const std::vector<const FeatureTrack*>& tracks) {
    std::vector<ProjectedResidual> accepted;
    for (const FeatureTrack* t : tracks) {
      if (t->observations.size() < 2) continue;
      const TriangulationResult tri = triangulate(*t, state_.clones, fc_.extrinsics, fc_.triangulation);
      if (tri.status != TriangulationStatus::Ok) continue;
      const auto res = reprojection_residual(*t, state_.clones, tri.feature, fc_.extrinsics);
      if (!res) continue;
      auto proj = nullspace_project(*res);
      if (!proj) continue;
      if (!passes_vision_gate(state_, *proj, fc_.pixel_noise, fc_.vision_gate_probability)) continue;
      accepted.push_back(std::move(*proj));
    }
    if (accepted.empty()) return;
    result_.reports.push_back(update_vision(state_, accepted, fc_.pixel_noise));
  }

  void camera_frame(const CameraFrame& frame) {
    std::map<std::int64_t, const Eigen::Vector4d*> seen;
    for (const auto& [id, uv] : frame.features) seen[id] = &uv;

    // Tracks that ended before this frame.
    std::vector<const FeatureTrack*> lost;
    for (const auto& [id, t] : tracks_)
      if (!seen.count(id)) lost.push_back(&t);
    update_with(lost);
    for (const FeatureTrack* t : lost) tracks_.erase(t->id);

    if (fc_.window_size > 0 && state_.clones.size() >= fc_.window_size) {
      std::vector<FeatureTrack> active;
      active.reserve(tracks_.size());
      for (const auto& [id, t] : tracks_) active.push_back(t);
      const std::size_t victim = select_clone_to_marginalize(state_, active);
      const std::int64_t victim_id = state_.clones[victim].id;
      std::vector<const FeatureTrack*> involved;
      for (const auto& [id, t] : tracks_)
        if (std::any_of(t.observations.begin(), t.observations.end(),
                        [&](const StereoObservation& o) { return o.clone_id == victim_id; }))
          involved.push_back(&t);
      update_with(involved);
      // Their information is consumed; later sightings start fresh tracks.
      for (const FeatureTrack* t : involved) tracks_.erase(t->id);
      marginalize_clone(state_, victim);
    }

    const CameraClone& clone = augment_state(state_, fc_.extrinsics, 0);
    for (const auto& [id, uv] : frame.features) {
      FeatureTrack& t = tracks_[id];
      t.id = id;
      t.observations.push_back({clone.id, uv});
    }
  }

  const RunConfig& cfg_;
  FilterConfig fc_;
  const Dataset& ds_;
  FilterState state_;
  std::size_t cursor_ = 0;
  ImuSample last_;
  double last_check_ = 0.0;
  std::map<std::int64_t, FeatureTrack> tracks_;
  PipelineResult result_;
};

std::string csv_line(std::initializer_list<std::string> fields) {
  std::string s;
  for (const auto& f : fields) {
    if (!s.empty()) s += ',';
    s += f;
  }
  return s + '\n';
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, const Dataset& ds) {
  if (cfg.mode == GnssMode::Rtk && !cfg.base_position) throw ConfigError("mode rtk requires base_position");
  return Runner(cfg, ds).run();
}

void write_result_bundle(const std::filesystem::path& dir, const PipelineResult& result) {
  std::filesystem::create_directories(dir);
  write_trajectory_csv(dir / "trajectory.csv", result.trajectory);

  std::string log;
  for (const auto& r : result.reports) {
    nlohmann::json j = {{"schema_version", 1},
                        {"time", r.time},
                        {"kind", r.kind},
                        {"used", r.used},
                        {"los", r.los},
                        {"nlos", r.nlos},
                        {"rejected", r.rejected},
                        {"residual_norm_pre", r.residual_norm_pre},
                        {"residual_norm_post", r.residual_norm_post},
                        {"correction_norm", r.correction_norm},
                        {"skipped", r.skipped}};
    log += j.dump() + "\n";
  }
  write_text_atomically(dir / "updates.jsonl", log);

  std::string sats = "# schema_version: 1\ntime,los,nlos,out_of_image,mask_missing\n";
  for (const auto& s : result.satellites)
    sats += csv_line({format_double(s.time), std::to_string(s.los), std::to_string(s.nlos),
                      std::to_string(s.out_of_image), s.mask_missing ? "1" : "0"});
  write_text_atomically(dir / "plot_sats.csv", sats);

  if (result.error) {
    nlohmann::json j = error_report_to_json(*result.error);
    j["masks_missing"] = result.masks_missing;
    j["imu_gaps"] = result.imu_gaps;
    write_text_atomically(dir / "error_report.json", j.dump(2) + "\n");
    std::string errs = "# schema_version: 1\ntime,e,n,u\n";
    for (std::size_t i = 0; i < result.error->times.size(); ++i) {
      const Vec3& e = result.error->errors[i];
      errs += csv_line({format_double(result.error->times[i]), format_double(e.x()), format_double(e.y()),
                        format_double(e.z())});
    }
    write_text_atomically(dir / "plot_errors.csv", errs);
  }
}

}  // namespace cnav
