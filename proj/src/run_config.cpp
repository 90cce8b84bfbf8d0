#include "cnav/run_config.hpp"

#include <fstream>

#include "cnav/atomic_file.hpp"
#include "cnav/errors.hpp"

namespace cnav {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

template <typename T>
T field(const json& j, const char* key, const char* where) {
  if (!j.contains(key)) throw ConfigError(std::string("missing field '") + key + "' in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid field '") + key + "' in " + where + ": " + e.what());
  }
}

template <typename T>
T field_or(const json& j, const char* key, const char* where, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return field<T>(j, key, where);
}

Vec3 vec3(const json& j, const char* key, const char* where) {
  const auto v = field<std::vector<double>>(j, key, where);
  if (v.size() != 3) throw ConfigError(std::string("field '") + key + "' in " + where + " needs 3 values");
  return Vec3(v[0], v[1], v[2]);
}

Vec3 vec3_or(const json& j, const char* key, const char* where, const Vec3& fallback) {
  if (!j.contains(key)) return fallback;
  return vec3(j, key, where);
}

Mat3 mat3_or(const json& j, const char* key, const char* where, const Mat3& fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = field<std::vector<double>>(j, key, where);
  if (v.size() != 9) throw ConfigError(std::string("field '") + key + "' in " + where + " needs 9 row-major values");
  Mat3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = v[static_cast<std::size_t>(3 * r + c)];
  if ((m.transpose() * m - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw ConfigError(std::string("field '") + key + "' in " + where + " is not a rotation");
  return m;
}

json to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

json to_json(const Mat3& m) {
  json a = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a.push_back(m(r, c));
  return a;
}

fs::path resolve(const json& paths, const char* key, const fs::path& base_dir) {
  const auto s = field_or<std::string>(paths, key, "paths", "");
  if (s.empty()) return {};
  fs::path p(s);
  return p.is_absolute() ? p : base_dir / p;
}

std::string relative_to(const fs::path& p, const fs::path& dir) {
  if (p.empty()) return "";
  if (dir.empty()) return p.string();
  const fs::path rel = p.lexically_normal().lexically_relative(dir.lexically_normal());
  if (rel.empty() || *rel.begin() == "..") return p.string();
  return rel.string();
}

}  // namespace

FilterConfig RunConfig::filter_config() const {
  FilterConfig f;
  f.mode = mode;
  f.anchor = anchor;
  f.lever_arm = lever_arm;
  f.stochastic = stochastic;
  f.process = process_noise;
  f.extrinsics = extrinsics;
  f.window_size = window_size;
  f.pixel_noise = pixel_noise;
  f.gnss_gate_probability = gnss_gate_probability;
  f.vision_gate_probability = vision_gate_probability;
  return f;
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  const int version = field_or<int>(j, "schema_version", "config", kSchemaVersion);
  if (version != kSchemaVersion) throw ConfigError("unsupported config schema_version " + std::to_string(version));

  RunConfig c;
  const auto mode = field<std::string>(j, "mode", "config");
  if (mode == "spp")
    c.mode = GnssMode::Spp;
  else if (mode == "rtk")
    c.mode = GnssMode::Rtk;
  else
    throw ConfigError("mode must be 'spp' or 'rtk', got '" + mode + "'");
  c.sndm = field_or<bool>(j, "sndm", "config", true);

  const json& p = j.contains("paths") ? j.at("paths") : throw ConfigError("missing field 'paths' in config");
  c.paths.imu = resolve(p, "imu", base_dir);
  c.paths.gnss = resolve(p, "gnss", base_dir);
  c.paths.base_gnss = resolve(p, "base_gnss", base_dir);
  c.paths.tracks = resolve(p, "tracks", base_dir);
  c.paths.masks = resolve(p, "masks", base_dir);
  c.paths.truth = resolve(p, "truth", base_dir);
  c.paths.truth_labels = resolve(p, "truth_labels", base_dir);

  const json& a = j.contains("anchor") ? j.at("anchor") : throw ConfigError("missing field 'anchor' in config");
  c.anchor = {field<double>(a, "lat", "anchor"), field<double>(a, "lon", "anchor"),
              field<double>(a, "height", "anchor")};
  if (j.contains("base_position") && !j.at("base_position").is_null())
    c.base_position = EcefPosition{vec3(j, "base_position", "config")};

  const json& s = j.contains("initial_state") ? j.at("initial_state")
                                              : throw ConfigError("missing field 'initial_state' in config");
  c.initial_time = field<double>(s, "time", "initial_state");
  c.initial_state.position = vec3(s, "position", "initial_state");
  c.initial_state.velocity = vec3(s, "velocity", "initial_state");
  const auto q = field<std::vector<double>>(s, "attitude", "initial_state");
  if (q.size() != 4) throw ConfigError("initial_state.attitude needs 4 values (w, x, y, z)");
  c.initial_state.attitude = Attitude(q[0], q[1], q[2], q[3]);
  c.initial_state.accel_bias = vec3_or(s, "accel_bias", "initial_state", Vec3::Zero());
  c.initial_state.gyro_bias = vec3_or(s, "gyro_bias", "initial_state", Vec3::Zero());

  if (j.contains("initial_sigma")) {
    const json& u = j.at("initial_sigma");
    InitialUncertainty d;
    c.initial_sigma = {field_or(u, "position", "initial_sigma", d.position),
                       field_or(u, "velocity", "initial_sigma", d.velocity),
                       field_or(u, "attitude", "initial_sigma", d.attitude),
                       field_or(u, "accel_bias", "initial_sigma", d.accel_bias),
                       field_or(u, "gyro_bias", "initial_sigma", d.gyro_bias)};
  }
  if (j.contains("fisheye")) {
    const json& f = j.at("fisheye");
    FisheyeModel d;
    c.fisheye = {field_or(f, "cx", "fisheye", d.cx), field_or(f, "cy", "fisheye", d.cy),
                 field_or(f, "rim_radius", "fisheye", d.rim_radius),
                 field_or(f, "mounting_yaw", "fisheye", d.mounting_yaw)};
  }
  if (j.contains("extrinsics")) {
    const json& e = j.at("extrinsics");
    ExtrinsicSet d;
    c.extrinsics.rot_body_cam = mat3_or(e, "rot_body_cam", "extrinsics", d.rot_body_cam);
    c.extrinsics.pos_body_cam = vec3_or(e, "pos_body_cam", "extrinsics", d.pos_body_cam);
    c.extrinsics.rot_left_right = mat3_or(e, "rot_left_right", "extrinsics", d.rot_left_right);
    c.extrinsics.pos_left_right = vec3_or(e, "pos_left_right", "extrinsics", d.pos_left_right);
  }
  c.lever_arm = vec3_or(j, "lever_arm", "config", Vec3::Zero());
  if (j.contains("stochastic")) {
    const json& t = j.at("stochastic");
    StochasticConfig d;
    c.stochastic = {field_or(t, "sigma_pseudorange", "stochastic", d.sigma_pseudorange),
                    field_or(t, "sigma_carrier", "stochastic", d.sigma_carrier),
                    field_or(t, "snr_s1", "stochastic", d.snr_s1),
                    field_or(t, "snr_s0", "stochastic", d.snr_s0),
                    field_or(t, "snr_a", "stochastic", d.snr_a),
                    field_or(t, "snr_A", "stochastic", d.snr_A),
                    field_or(t, "nlos_scale", "stochastic", d.nlos_scale)};
  }
  if (j.contains("process_noise")) {
    const json& n = j.at("process_noise");
    ProcessNoiseConfig d;
    c.process_noise = {field_or(n, "accel_noise", "process_noise", d.accel_noise),
                       field_or(n, "gyro_noise", "process_noise", d.gyro_noise),
                       field_or(n, "accel_bias_walk", "process_noise", d.accel_bias_walk),
                       field_or(n, "gyro_bias_walk", "process_noise", d.gyro_bias_walk)};
  }
  c.window_size = field_or<std::size_t>(j, "window_size", "config", c.window_size);
  c.pixel_noise = field_or(j, "pixel_noise", "config", c.pixel_noise);
  c.mask_time_tolerance = field_or(j, "mask_time_tolerance", "config", c.mask_time_tolerance);
  c.seed = field_or<std::uint64_t>(j, "seed", "config", c.seed);
  if (j.contains("gating")) {
    const auto& g = j.at("gating");
    c.gnss_gate_probability = field_or(g, "gnss_probability", "gating", c.gnss_gate_probability);
    c.vision_gate_probability = field_or(g, "vision_probability", "gating", c.vision_gate_probability);
  }

  if (c.fisheye.rim_radius <= 0.0) throw ConfigError("fisheye.rim_radius must be positive");
  if (c.pixel_noise <= 0.0) throw ConfigError("pixel_noise must be positive");
  if (c.window_size < 2) throw ConfigError("window_size must be at least 2");
  for (double p : {c.gnss_gate_probability, c.vision_gate_probability})
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("gating probabilities must lie in (0, 1)");
  const double baseline = c.extrinsics.pos_left_right.norm();
  if (baseline <= 0.01 || baseline >= 2.0) throw ConfigError("stereo baseline must lie in (0.01, 2) m");
  for (double v : {c.process_noise.accel_noise, c.process_noise.gyro_noise, c.process_noise.accel_bias_walk,
                   c.process_noise.gyro_bias_walk})
    if (!(v > 0.0)) throw ConfigError("process noise densities must be positive");
  return c;
}

json run_config_to_json(const RunConfig& c) {
  return run_config_to_json_relative(c, {});
}

json run_config_to_json_relative(const RunConfig& c, const fs::path& dir) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["mode"] = std::string(to_string(c.mode));
  j["sndm"] = c.sndm;
  j["paths"] = {{"imu", relative_to(c.paths.imu, dir)},
                {"gnss", relative_to(c.paths.gnss, dir)},
                {"base_gnss", relative_to(c.paths.base_gnss, dir)},
                {"tracks", relative_to(c.paths.tracks, dir)},
                {"masks", relative_to(c.paths.masks, dir)},
                {"truth", relative_to(c.paths.truth, dir)},
                {"truth_labels", relative_to(c.paths.truth_labels, dir)}};
  j["anchor"] = {{"lat", c.anchor.lat}, {"lon", c.anchor.lon}, {"height", c.anchor.height}};
  j["base_position"] = c.base_position ? to_json(c.base_position->xyz) : json(nullptr);
  const auto& q = c.initial_state.attitude.quaternion();
  j["initial_state"] = {{"time", c.initial_time},
                        {"position", to_json(c.initial_state.position)},
                        {"velocity", to_json(c.initial_state.velocity)},
                        {"attitude", json::array({q.w(), q.x(), q.y(), q.z()})},
                        {"accel_bias", to_json(c.initial_state.accel_bias)},
                        {"gyro_bias", to_json(c.initial_state.gyro_bias)}};
  const auto& u = c.initial_sigma;
  j["initial_sigma"] = {{"position", u.position},
                        {"velocity", u.velocity},
                        {"attitude", u.attitude},
                        {"accel_bias", u.accel_bias},
                        {"gyro_bias", u.gyro_bias}};
  j["fisheye"] = {{"cx", c.fisheye.cx},
                  {"cy", c.fisheye.cy},
                  {"rim_radius", c.fisheye.rim_radius},
                  {"mounting_yaw", c.fisheye.mounting_yaw}};
  j["extrinsics"] = {{"rot_body_cam", to_json(c.extrinsics.rot_body_cam)},
                     {"pos_body_cam", to_json(c.extrinsics.pos_body_cam)},
                     {"rot_left_right", to_json(c.extrinsics.rot_left_right)},
                     {"pos_left_right", to_json(c.extrinsics.pos_left_right)}};
  j["lever_arm"] = to_json(c.lever_arm);
  const auto& t = c.stochastic;
  j["stochastic"] = {{"sigma_pseudorange", t.sigma_pseudorange},
                     {"sigma_carrier", t.sigma_carrier},
                     {"snr_s1", t.snr_s1},
                     {"snr_s0", t.snr_s0},
                     {"snr_a", t.snr_a},
                     {"snr_A", t.snr_A},
                     {"nlos_scale", t.nlos_scale}};
  // Densities per sqrt(Hz); see ProcessNoiseConfig for the datasheet conversion.
  const auto& n = c.process_noise;
  j["process_noise"] = {{"accel_noise", n.accel_noise},
                        {"gyro_noise", n.gyro_noise},
                        {"accel_bias_walk", n.accel_bias_walk},
                        {"gyro_bias_walk", n.gyro_bias_walk}};
  j["window_size"] = c.window_size;
  j["pixel_noise"] = c.pixel_noise;
  j["mask_time_tolerance"] = c.mask_time_tolerance;
  j["seed"] = c.seed;
  j["gating"] = {{"gnss_probability", c.gnss_gate_probability}, {"vision_probability", c.vision_gate_probability}};
  return j;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

void save_run_config(const fs::path& path, const RunConfig& cfg) {
  write_text_atomically(path, run_config_to_json_relative(cfg, path.parent_path()).dump(2) + "\n");
}

void validate_run_config(const RunConfig& c) {
  auto require = [](const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string("missing path: ") + what);
    if (!fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
  };
  auto optional = [](const fs::path& p, const char* what) {
    if (!p.empty() && !fs::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
  };
  require(c.paths.imu, "imu");
  require(c.paths.gnss, "gnss");
  if (c.mode == GnssMode::Rtk) {
    if (c.paths.base_gnss.empty()) throw ConfigError("mode rtk requires paths.base_gnss");
    require(c.paths.base_gnss, "base_gnss");
    if (!c.base_position) throw ConfigError("mode rtk requires base_position");
  } else {
    optional(c.paths.base_gnss, "base_gnss");
  }
  if (c.sndm) require(c.paths.masks, "masks");
  else optional(c.paths.masks, "masks");
  optional(c.paths.tracks, "tracks");
  optional(c.paths.truth, "truth");
  optional(c.paths.truth_labels, "truth_labels");
}

}  // namespace cnav
