#include "cnav/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>

#include "cnav/atomic_file.hpp"
#include "cnav/dataset_io.hpp"
#include "cnav/errors.hpp"

namespace cnav {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kHalfPi = kPi / 2.0;
constexpr double kEarthGm = 3.986004418e14;
constexpr double kEarthRate = 7.2921151467e-5;
constexpr double kOrbitRadius = 26559.7e3;
constexpr double kInclination = 55.0 * kPi / 180.0;
constexpr double kL1Wavelength = 0.190293672798;
constexpr double kStartTime = 100000.0;
constexpr int kTruthSubsteps = 10;

const GeodeticPosition kAnchor{0.5340, 1.9897, 50.0};

/// Nominal vehicle motion at scenario time tau (seconds from start).
struct Motion {
  double speed = 0.0;
  double speed_dot = 0.0;
  double yaw_rate = 0.0;  // counter-clockwise
  int segment = 0;
  double street_yaw = 0.0;  // relative to the initial yaw
};

Motion motion_at(const TrajectorySpec& t, double tau) {
  Motion m;
  const double w = 2.0 * kPi / t.speed_period;
  m.speed = t.speed + t.speed_variation * std::sin(w * tau);
  m.speed_dot = t.speed_variation * w * std::cos(w * tau);
  if (t.path == PathKind::CityGrid) {
    const double period = t.leg_duration + t.turn_duration;
    const int k = static_cast<int>(std::floor(tau / period));
    const double within = tau - k * period;
    // Turn pattern left, left, right, right keeps the path near the origin.
    auto direction = [](int leg) { return (leg % 4) < 2 ? 1.0 : -1.0; };
    if (within >= t.leg_duration) {
      const double s = std::sin(kPi * (within - t.leg_duration) / t.turn_duration);
      m.yaw_rate = direction(k) * kPi / t.turn_duration * s * s;
    }
    m.segment = k;
    for (int i = 0; i < k; ++i) m.street_yaw += direction(i) * kHalfPi;
  } else {
    const double p = t.figure_eight_period;
    m.yaw_rate = 2.0 * kPi * kPi / p * std::sin(2.0 * kPi * tau / p);
    m.segment = static_cast<int>(std::floor(tau / t.leg_duration));
    const double start = m.segment * t.leg_duration;
    m.street_yaw = kPi * (1.0 - std::cos(2.0 * kPi * start / p));
  }
  return m;
}

/// Heading clockwise from North of a counter-clockwise-from-East yaw.
double heading_of_yaw(double yaw) { return wrap_two_pi(kHalfPi - yaw); }

int steps_per(double imu_rate, double rate, const char* what) {
  const double ratio = imu_rate / rate;
  const auto n = static_cast<int>(std::lround(ratio));
  if (n < 1 || std::abs(ratio - n) > 1e-9)
    throw DataError(std::string(what) + " rate must divide the IMU rate");
  return n;
}

struct SatelliteTraits {
  double nlos_scale = 1.0;
  double carrier_phase = 0.0;
  double clock = 0.0;
  double clock_drift = 0.0;
};

struct ArcState {
  std::int64_t rover_cycles = 0;
  std::int64_t base_cycles = 0;
  double last_seen = -1.0;
};

struct MaskGeometry {
  std::vector<double> elevation;  // per pixel; 0 outside the rim
  std::vector<double> angle;      // image angle clockwise from image-up
};

MaskGeometry mask_geometry(int size, const FisheyeModel& model) {
  MaskGeometry g;
  g.elevation.resize(static_cast<std::size_t>(size) * size);
  g.angle.resize(g.elevation.size());
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double dx = x - model.cx;
      const double dy = model.cy - y;
      const double r = std::min(std::hypot(dx, dy), model.rim_radius);
      const std::size_t i = static_cast<std::size_t>(y) * size + x;
      g.elevation[i] = kHalfPi - kHalfPi * r / model.rim_radius;
      g.angle[i] = r > 0.0 ? std::atan2(dx, dy) : 0.0;
    }
  return g;
}

}  // namespace

double Skyline::cutoff(double relative_azimuth) const {
  const double a = wrap_two_pi(relative_azimuth);
  for (const auto& s : sectors) {
    if (s.end <= 2.0 * kPi) {
      if (a >= s.begin && a < s.end) return s.cutoff;
    } else if (a >= s.begin || a < s.end - 2.0 * kPi) {
      return s.cutoff;
    }
  }
  return default_cutoff;
}

Skyline Skyline::constant(double cutoff) {
  Skyline s;
  s.default_cutoff = cutoff;
  return s;
}

Skyline Skyline::canyon(double side_cutoff, double along_cutoff, double half_opening) {
  Skyline s;
  s.default_cutoff = side_cutoff;
  s.sectors.push_back({2.0 * kPi - half_opening, 2.0 * kPi + half_opening, along_cutoff});
  s.sectors.push_back({kPi - half_opening, kPi + half_opening, along_cutoff});
  return s;
}

SceneSpec SceneSpec::urban_canyon() {
  constexpr double deg = kPi / 180.0;
  SceneSpec s;
  // Moderate street, canyon, open street, canyon.
  s.segments = {Skyline::canyon(30.0 * deg, 10.0 * deg, 30.0 * deg),
                Skyline::canyon(55.0 * deg, 20.0 * deg, 20.0 * deg),
                Skyline::canyon(20.0 * deg, 5.0 * deg, 35.0 * deg),
                Skyline::canyon(45.0 * deg, 15.0 * deg, 25.0 * deg)};
  return s;
}

SceneSpec SceneSpec::open_sky() {
  SceneSpec s;
  s.segments = {Skyline::constant(0.0)};
  return s;
}

SceneSpec SceneSpec::perfect() const {
  SceneSpec s = *this;
  s.nlos_pseudorange_bias = 0.0;
  s.nlos_carrier_bias = 0.0;
  s.nlos_noise_scale = 0.0;
  s.nlos_slip_probability = 0.0;
  s.pseudorange_sigma = 0.0;
  s.carrier_sigma = 0.0;
  s.imu_noise = false;
  s.imu_bias = false;
  s.pixel_sigma = 0.0;
  s.initial_position_error = 0.0;
  s.initial_velocity_error = 0.0;
  s.initial_attitude_error = 0.0;
  return s;
}

EcefPosition constellation_position(int slot, double time, double phase_offset) {
  const int plane = slot / 4;
  const int index = slot % 4;
  const double n = std::sqrt(kEarthGm / (kOrbitRadius * kOrbitRadius * kOrbitRadius));
  const double raan = plane * kPi / 3.0;
  const double u = index * kHalfPi + plane * kPi / 12.0 + n * (time + phase_offset);
  const Vec3 orbital(kOrbitRadius * std::cos(u), kOrbitRadius * std::sin(u), 0.0);
  const Mat3 r = (Eigen::AngleAxisd(raan - kEarthRate * (time + phase_offset), Vec3::UnitZ()) *
                  Eigen::AngleAxisd(kInclination, Vec3::UnitX()))
                     .toRotationMatrix();
  return {r * orbital};
}

ScenarioBundle generate_scenario(const TrajectorySpec& traj, const SceneSpec& scene, std::uint64_t seed) {
  if (!(traj.duration > 0.0)) throw DataError("trajectory duration must be positive");
  if (!(traj.imu_rate > 0.0 && traj.gnss_rate > 0.0 && traj.camera_rate > 0.0 && traj.mask_rate > 0.0))
    throw DataError("sensor rates must be positive");
  if (scene.segments.empty()) throw DataError("scene needs at least one skyline segment");
  for (const auto& sky : scene.segments) {
    auto check = [](double c) {
      if (c < 0.0 || c > kHalfPi) throw DataError("skyline cutoff outside [0, pi/2]");
    };
    check(sky.default_cutoff);
    for (const auto& s : sky.sectors) check(s.cutoff);
  }
  if (scene.nlos_pseudorange_bias < 0.0 || scene.nlos_carrier_bias < 0.0)
    throw DataError("NLOS biases must be non-negative");

  const int gnss_step = steps_per(traj.imu_rate, traj.gnss_rate, "GNSS");
  const int camera_step = steps_per(traj.imu_rate, traj.camera_rate, "camera");
  const int mask_step = steps_per(traj.imu_rate, traj.mask_rate, "mask");
  const auto samples = static_cast<int>(std::lround(traj.duration * traj.imu_rate));

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto gauss = [&](double sd) { return sd > 0.0 ? sd * normal(rng) : 0.0; };

  const double phase = uniform(0.0, 43082.0);
  const double yaw0 = uniform(0.0, 2.0 * kPi);

  ScenarioBundle out;
  Dataset& ds = out.dataset;
  RunConfig& cfg = out.config;
  cfg.anchor = kAnchor;
  cfg.seed = seed;
  cfg.lever_arm = Vec3(0.0, 0.0, 1.5);
  cfg.extrinsics = ExtrinsicSet::forward_stereo(Vec3(1.5, 0.0, 1.2), 0.12);
  const double size = scene.mask_size;
  cfg.fisheye = {(size - 1.0) / 2.0, (size - 1.0) / 2.0, scene.mask_rim_radius, 0.0};
  cfg.pixel_noise = std::max(scene.pixel_sigma, 0.1) / scene.focal_length;
  cfg.process_noise = scene.imu;
  const Vec3 base_enu(500.0, 300.0, 0.0);
  const EcefPosition base_ecef = enu_to_ecef(base_enu, kAnchor);
  cfg.base_position = base_ecef;
  ds.base_position = base_ecef;

  // IMU stream: exact planar signals sampled at the IMU rate, plus bias and noise.
  const double dt = 1.0 / traj.imu_rate;
  std::vector<ImuSample> exact(static_cast<std::size_t>(samples) + 1);
  std::vector<Motion> motions(exact.size());
  for (int k = 0; k <= samples; ++k) {
    const double tau = k / traj.imu_rate;
    const Motion m = motion_at(traj, tau);
    motions[static_cast<std::size_t>(k)] = m;
    auto& s = exact[static_cast<std::size_t>(k)];
    s.time = kStartTime + tau;
    s.gyro = Vec3(0.0, 0.0, m.yaw_rate);
    s.accel = Vec3(m.speed_dot, m.speed * m.yaw_rate, -kGravity);
  }
  Vec3 accel_bias = Vec3::Zero(), gyro_bias = Vec3::Zero();
  if (scene.imu_bias) {
    for (int i = 0; i < 3; ++i) accel_bias(i) = gauss(1.3e-2);
    for (int i = 0; i < 3; ++i) gyro_bias(i) = gauss(8.0 * kPi / 180.0 / 3600.0);
  }
  const double sq = std::sqrt(traj.imu_rate);
  ds.imu.resize(exact.size());
  for (std::size_t k = 0; k < exact.size(); ++k) {
    ImuSample s = exact[k];
    if (scene.imu_bias) {
      for (int i = 0; i < 3; ++i) accel_bias(i) += gauss(scene.imu.accel_bias_walk / sq);
      for (int i = 0; i < 3; ++i) gyro_bias(i) += gauss(scene.imu.gyro_bias_walk / sq);
      s.accel += accel_bias;
      s.gyro += gyro_bias;
    }
    if (scene.imu_noise) {
      for (int i = 0; i < 3; ++i) s.accel(i) += gauss(scene.imu.accel_noise * sq);
      for (int i = 0; i < 3; ++i) s.gyro(i) += gauss(scene.imu.gyro_noise * sq);
    }
    ds.imu[k] = s;
  }

  // Truth: the exact signals, linearly interpolated, integrated with fine sub-steps.
  InsState truth;
  truth.attitude = Attitude::from_yaw(yaw0);
  truth.velocity = truth.attitude.matrix() * Vec3(motions.front().speed, 0.0, 0.0);
  std::vector<InsState> truth_states(exact.size());
  truth_states.front() = truth;
  for (std::size_t k = 1; k < exact.size(); ++k) {
    const ImuSample& a = exact[k - 1];
    const ImuSample& b = exact[k];
    ImuSample prev = a;
    for (int i = 1; i <= kTruthSubsteps; ++i) {
      const ImuSample next = i == kTruthSubsteps ? b : interpolate(a, b, a.time + dt * i / kTruthSubsteps);
      truth = mechanize_step(truth, prev, next).state;
      prev = next;
    }
    truth_states[k] = truth;
  }
  auto to_point = [&](std::size_t k) {
    const InsState& s = truth_states[k];
    TrajectoryPoint p;
    p.time = exact[k].time;
    p.enu = s.position;
    p.ecef = enu_to_ecef(s.position, kAnchor);
    p.velocity = s.velocity;
    p.attitude = s.attitude;
    return p;
  };
  for (std::size_t k = 0; k < exact.size(); k += static_cast<std::size_t>(camera_step))
    ds.truth.push_back(to_point(k));

  // Filter initial state: truth perturbed by the configured initial error.
  cfg.initial_time = exact.front().time;
  cfg.initial_state = truth_states.front();
  for (int i = 0; i < 3; ++i) cfg.initial_state.position(i) += gauss(scene.initial_position_error);
  for (int i = 0; i < 3; ++i) cfg.initial_state.velocity(i) += gauss(scene.initial_velocity_error);
  Vec3 dtheta;
  for (int i = 0; i < 3; ++i) dtheta(i) = gauss(scene.initial_attitude_error);
  cfg.initial_state.attitude = cfg.initial_state.attitude.perturbed(dtheta);

  // GNSS and masks.
  std::map<int, SatelliteTraits> traits;
  for (int slot = 0; slot < 24; ++slot) {
    SatelliteTraits t;
    t.nlos_scale = uniform(0.5, 1.5);
    t.carrier_phase = uniform(0.0, 2.0 * kPi);
    t.clock = uniform(-1e-4, 1e-4);
    t.clock_drift = uniform(-1e-11, 1e-11);
    traits[slot] = t;
  }
  std::map<int, ArcState> arcs;
  const double rover_clock0 = uniform(-3e4, 3e4), rover_drift = uniform(-2.0, 2.0);
  const double base_clock0 = uniform(-3e4, 3e4), base_drift = uniform(-2.0, 2.0);
  StochasticConfig weight;
  weight.sigma_pseudorange = scene.pseudorange_sigma;
  weight.sigma_carrier = scene.carrier_sigma;
  const MaskGeometry geom = mask_geometry(scene.mask_size, cfg.fisheye);
  auto random_cycles = [&]() { return static_cast<std::int64_t>(std::floor(uniform(-5e5, 5e5))); };

  auto make_obs = [&](const EcefPosition& rcv, double rcv_clock, const EcefPosition& sat_pos, int slot,
                      double time, double snr, double elevation, bool nlos, std::int64_t cycles, bool slip) {
    const SatelliteTraits& tr = traits[slot];
    SatObservation so;
    char id[16];
    std::snprintf(id, sizeof id, "G%02d", slot + 1);
    so.obs.id = id;
    so.sat.id = id;
    so.sat.position = sat_pos;
    so.sat.clock = tr.clock + tr.clock_drift * (time - kStartTime);
    so.sat.snr = snr;
    so.sat.wavelength = kL1Wavelength;
    const double s_e = std::sin(elevation);
    so.obs.iono = 3.0 / std::sqrt(1.0 - 0.8836 * std::cos(elevation) * std::cos(elevation));
    so.obs.tropo = 2.3 / s_e;
    const double rho = (sat_pos.xyz - rcv.xyz).norm();
    const double common = rho + rcv_clock - kSpeedOfLight * so.sat.clock;
    const double code_sd =
        std::sqrt(observation_variance(SignalLabel::Los, ObservationKind::Pseudorange, elevation, snr, weight));
    const double phase_sd =
        std::sqrt(observation_variance(SignalLabel::Los, ObservationKind::Carrier, elevation, snr, weight));
    double code_err = gauss(code_sd), phase_err = gauss(phase_sd);
    if (nlos) {
      code_err = scene.nlos_pseudorange_bias * tr.nlos_scale + gauss(code_sd * scene.nlos_noise_scale);
      phase_err = scene.nlos_carrier_bias * tr.nlos_scale *
                      (0.5 + 0.5 * std::sin(2.0 * kPi * (time - kStartTime) / 60.0 + tr.carrier_phase)) +
                  gauss(phase_sd * scene.nlos_noise_scale);
    }
    so.obs.pseudorange = common + so.obs.iono + so.obs.tropo + code_err;
    so.obs.carrier = common - so.obs.iono + so.obs.tropo + kL1Wavelength * static_cast<double>(cycles) + phase_err;
    so.obs.loss_of_lock = slip;
    return so;
  };

  for (int k = 0; k <= samples; k += gnss_step) {
    const auto ku = static_cast<std::size_t>(k);
    const double time = exact[ku].time;
    const InsState& st = truth_states[ku];
    const Motion& m = motions[ku];
    const Skyline& sky = scene.segments[static_cast<std::size_t>(m.segment) % scene.segments.size()];
    const double street_heading = heading_of_yaw(yaw0 + m.street_yaw);
    const double vehicle_heading = st.attitude.heading();
    const EcefPosition antenna = enu_to_ecef(st.position + st.attitude.matrix() * cfg.lever_arm, kAnchor);
    const double rover_clock = rover_clock0 + rover_drift * (time - kStartTime);
    const double base_clock = base_clock0 + base_drift * (time - kStartTime);

    GnssEpoch epoch;
    epoch.time = time;
    epoch.base_position = base_ecef;
    std::vector<std::pair<Pixel, bool>> stamps;
    for (int slot = 0; slot < 24; ++slot) {
      const EcefPosition sat = constellation_position(slot, time, phase);
      const auto ea = elevation_azimuth(sat, antenna);
      if (!ea || ea->elevation < scene.elevation_mask) continue;
      const bool nlos = ea->elevation < sky.cutoff(ea->azimuth - street_heading);
      ArcState& arc = arcs[slot];
      bool slip = false;
      if (arc.last_seen < 0.0 || time - arc.last_seen > 1.5 / traj.gnss_rate) {
        arc.rover_cycles = random_cycles();
        arc.base_cycles = random_cycles();
      } else if (nlos && scene.nlos_slip_probability > 0.0 && uniform(0.0, 1.0) < scene.nlos_slip_probability) {
        arc.rover_cycles += static_cast<std::int64_t>(std::floor(uniform(1.0, 50.0)));
        slip = true;
      }
      arc.last_seen = time;

      const double snr = 30.0 + 20.0 * std::sin(ea->elevation) - (nlos ? scene.nlos_snr_drop : 0.0);
      epoch.sats.push_back(make_obs(antenna, rover_clock, sat, slot, time, snr, ea->elevation, nlos,
                                    arc.rover_cycles, slip));
      ds.truth_labels.push_back({time, epoch.sats.back().obs.id, *ea, nlos ? SignalLabel::Nlos : SignalLabel::Los,
                                 vehicle_heading});
      stamps.push_back({project_satellite(*ea, vehicle_heading, cfg.fisheye), !nlos});

      const auto base_ea = elevation_azimuth(sat, base_ecef);
      if (base_ea && base_ea->elevation > 0.0) {
        const double base_snr = 30.0 + 20.0 * std::sin(base_ea->elevation);
        epoch.base_sats.push_back(make_obs(base_ecef, base_clock, sat, slot, time, base_snr, base_ea->elevation,
                                           false, arc.base_cycles, false));
      }
    }
    if (epoch.sats.empty())
      throw DataError("no visible satellite at t=" + std::to_string(time) + "; scene too aggressive");
    ds.gnss.push_back(std::move(epoch));

    if (k % mask_step == 0) {
      SkyMask mask(scene.mask_size, scene.mask_size);
      for (std::size_t i = 0; i < geom.elevation.size(); ++i) {
        const double az = geom.angle[i] + vehicle_heading + cfg.fisheye.mounting_yaw;
        const int x = static_cast<int>(i % static_cast<std::size_t>(scene.mask_size));
        const int y = static_cast<int>(i / static_cast<std::size_t>(scene.mask_size));
        mask.set(x, y, geom.elevation[i] >= sky.cutoff(az - street_heading));
      }
      // Boundary pixels are ambiguous at raster resolution; the satellite's own
      // pixel carries its generator label.
      for (const auto& [px, los] : stamps) {
        const int x = static_cast<int>(std::lround(px.u));
        const int y = static_cast<int>(std::lround(px.v));
        if (mask.contains(x, y)) mask.set(x, y, los);
      }
      char name[32];
      std::snprintf(name, sizeof name, "mask_%06zu.png", ds.mask_manifest.entries.size());
      mask.image_id = name;
      mask.time = time;
      ds.mask_manifest.entries.push_back({time, name});
      ds.masks.emplace(name, std::move(mask));
    }
  }

  // Stereo feature tracks.
  struct Landmark {
    std::int64_t id;
    Vec3 position;
    int remaining;
  };
  std::vector<Landmark> active;
  std::int64_t next_feature = 0;
  const double pixel_sd = scene.pixel_sigma / scene.focal_length;
  auto visible = [&](const Vec3& p, const CameraClone& c) {
    const StereoPoint sp = feature_in_cameras(p, c, cfg.extrinsics);
    for (const Vec3& x : {sp.left, sp.right}) {
      if (x.z() < scene.feature_min_range || x.z() > scene.feature_max_range) return false;
      if (std::abs(x.x() / x.z()) > 0.64 || std::abs(x.y() / x.z()) > 0.48) return false;
    }
    return true;
  };
  std::int64_t frame = 0;
  for (int k = 0; k <= samples; k += camera_step, ++frame) {
    const auto ku = static_cast<std::size_t>(k);
    const double time = exact[ku].time;
    const CameraClone clone = make_clone(frame, time, truth_states[ku], cfg.extrinsics);
    auto emit = [&](const Landmark& l) {
      TrackRow row;
      row.time = time;
      row.clone_id = frame;
      row.feature_id = l.id;
      row.uv = project_stereo(l.position, clone, cfg.extrinsics);
      for (int i = 0; i < 4; ++i) row.uv(i) += gauss(pixel_sd);
      ds.tracks.push_back(row);
    };
    std::vector<Landmark> kept;
    for (auto& l : active)
      if (l.remaining > 0 && visible(l.position, clone)) {
        emit(l);
        --l.remaining;
        kept.push_back(l);
      }
    active = std::move(kept);
    const Mat3 rc = clone.attitude.matrix();
    for (int attempt = 0; attempt < 4 * scene.max_features && static_cast<int>(active.size()) < scene.max_features;
         ++attempt) {
      const double z = uniform(scene.feature_min_range + 2.0, 0.6 * scene.feature_max_range);
      const Vec3 xc(uniform(-0.55, 0.55) * z, uniform(-0.4, 0.4) * z, z);
      const Vec3 p = rc * xc + clone.position;
      if (!visible(p, clone)) continue;
      Landmark l{next_feature++, p,
                 static_cast<int>(std::floor(uniform(scene.min_track_length, scene.max_track_length + 1.0)))};
      emit(l);
      --l.remaining;
      active.push_back(l);
    }
  }

  cfg.paths.imu = "imu.csv";
  cfg.paths.gnss = "gnss.csv";
  cfg.paths.base_gnss = "base_gnss.csv";
  cfg.paths.tracks = "tracks.csv";
  cfg.paths.masks = "masks/manifest.json";
  cfg.paths.truth = "truth.csv";
  cfg.paths.truth_labels = "truth_labels.csv";
  return out;
}

void write_scenario(const std::filesystem::path& dir, const ScenarioBundle& bundle) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "masks");
  write_dataset(dir, bundle.dataset);
  RunConfig cfg = bundle.config;
  cfg.paths.imu = dir / "imu.csv";
  cfg.paths.gnss = dir / "gnss.csv";
  cfg.paths.base_gnss = dir / "base_gnss.csv";
  cfg.paths.tracks = dir / "tracks.csv";
  cfg.paths.masks = dir / "masks" / "manifest.json";
  cfg.paths.truth = dir / "truth.csv";
  cfg.paths.truth_labels = dir / "truth_labels.csv";
  save_run_config(dir / "config.json", cfg);
}

namespace {

void flood_keep_connected(SkyMask& mask, int sx, int sy) {
  SkyMask seen(mask.width(), mask.height());
  std::vector<std::pair<int, int>> stack;
  if (mask.sky(sx, sy)) stack.push_back({sx, sy});
  seen.set(sx, sy, true);
  while (!stack.empty()) {
    const auto [x, y] = stack.back();
    stack.pop_back();
    for (const auto& [nx, ny] : {std::pair{x + 1, y}, {x - 1, y}, {x, y + 1}, {x, y - 1}}) {
      if (!mask.contains(nx, ny) || seen.sky(nx, ny) || !mask.sky(nx, ny)) continue;
      seen.set(nx, ny, true);
      stack.push_back({nx, ny});
    }
  }
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) mask.set(x, y, mask.sky(x, y) && seen.sky(x, y));
}

}  // namespace

std::vector<CorpusImage> generate_segmentation_corpus(CorpusKind kind, int count, int size, std::uint64_t seed) {
  if (count <= 0) throw DataError("corpus count must be positive");
  std::mt19937_64 rng(seed);
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto pick = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };
  const FisheyeModel model{(size - 1.0) / 2.0, (size - 1.0) / 2.0, 0.47 * size, 0.0};
  const MaskGeometry geom = mask_geometry(size, model);

  std::vector<CorpusImage> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    // Random skyline: sectors of building heights around the dome.
    Skyline sky;
    sky.default_cutoff = uniform(0.1, 1.1);
    double a = 0.0;
    while (a < 2.0 * kPi - 0.35) {
      const double w = uniform(0.35, 1.2);
      sky.sectors.push_back({a, std::min(a + w, 2.0 * kPi), uniform(0.0, 1.2)});
      a += w;
    }
    const double heading = uniform(0.0, 2.0 * kPi);

    SkyMask truth(size, size);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * size + x;
        const double r = std::hypot(x - model.cx, model.cy - y);
        const bool inside = r <= model.rim_radius;
        truth.set(x, y, inside && geom.elevation[i] >= sky.cutoff(geom.angle[i] + heading));
      }
    const int cx = static_cast<int>(std::lround(model.cx));
    const int cy = static_cast<int>(std::lround(model.cy));
    if (kind == CorpusKind::ConnectedSky) flood_keep_connected(truth, cx, cy);

    GrayImage img(size, size);
    if (kind == CorpusKind::Bimodal) {
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          img.at(x, y) = static_cast<std::uint8_t>(truth.sky(x, y) ? pick(190, 230) : pick(20, 60));
    } else {
      // Sky within the growth tolerance of any seed; facades far below it;
      // bright disconnected windows that fool global thresholds.
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          img.at(x, y) = static_cast<std::uint8_t>(truth.sky(x, y) ? pick(178, 198) : pick(40, 140));
      const int windows = pick(3, 8);
      for (int w = 0; w < windows; ++w) {
        const int wx = pick(0, size - 8), wy = pick(0, size - 8);
        const int ww = pick(3, 8), wh = pick(3, 8);
        bool touches = false;
        for (int y = std::max(0, wy - 1); y < std::min(size, wy + wh + 1) && !touches; ++y)
          for (int x = std::max(0, wx - 1); x < std::min(size, wx + ww + 1) && !touches; ++x)
            touches = truth.sky(x, y);
        if (touches) continue;
        for (int y = wy; y < std::min(size, wy + wh); ++y)
          for (int x = wx; x < std::min(size, wx + ww); ++x) img.at(x, y) = static_cast<std::uint8_t>(pick(235, 250));
      }
    }
    char name[32];
    std::snprintf(name, sizeof name, "image_%04d.png", n);
    truth.image_id = name;
    out.push_back({std::move(img), std::move(truth)});
  }
  return out;
}

void write_segmentation_corpus(const std::filesystem::path& dir, const std::vector<CorpusImage>& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "truth");
  for (const auto& c : corpus) {
    write_png_gray(dir / c.truth.image_id, c.image);
    write_mask_png(dir / "truth" / c.truth.image_id, c.truth);
  }
}

}  // namespace cnav
