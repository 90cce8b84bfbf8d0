#include "cnav/dataset_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "cnav/atomic_file.hpp"
#include "cnav/errors.hpp"

namespace cnav {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string f = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    const auto b = f.find_first_not_of(" \t\r");
    const auto e = f.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : f.substr(b, e - b + 1));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

/// Header-addressed CSV table.
class Csv {
 public:
  explicit Csv(const fs::path& path) : path_(path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line.front() == '#') continue;
      if (header_.empty()) {
        header_ = split(line);
        continue;
      }
      rows_.push_back({number, split(line)});
    }
    if (header_.empty()) throw DataError(path.string() + ": missing header line");
  }

  struct Row {
    std::size_t line;
    std::vector<std::string> fields;
  };

  const std::vector<Row>& rows() const { return rows_; }

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header_.begin(), header_.end(), name);
    if (it == header_.end()) throw DataError(path_.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header_.begin());
  }

  const std::string& text(const Row& r, std::size_t col) const {
    if (r.fields.size() != header_.size())
      throw error(r, "expected " + std::to_string(header_.size()) + " fields, got " + std::to_string(r.fields.size()));
    return r.fields[col];
  }

  double number(const Row& r, std::size_t col) const {
    const std::string& s = text(r, col);
    if (s.empty()) throw error(r, "empty value in column '" + header_[col] + "'");
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
      throw error(r, "invalid number '" + s + "' in column '" + header_[col] + "'");
    return v;
  }

  std::optional<double> optional_number(const Row& r, std::size_t col) const {
    if (text(r, col).empty()) return std::nullopt;
    return number(r, col);
  }

  std::int64_t integer(const Row& r, std::size_t col) const {
    const std::string& s = text(r, col);
    if (s.empty()) throw error(r, "empty value in column '" + header_[col] + "'");
    std::int64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      throw error(r, "invalid integer '" + s + "' in column '" + header_[col] + "'");
    return v;
  }

  DataError error(const Row& r, const std::string& what) const {
    return DataError(path_.string() + ":" + std::to_string(r.line) + ": " + what);
  }

 private:
  fs::path path_;
  std::vector<std::string> header_;
  std::vector<Row> rows_;
};

class CsvWriter {
 public:
  explicit CsvWriter(std::string_view header) { out_ << "# schema_version: 1\n" << header << '\n'; }
  CsvWriter& operator<<(double v) { return field(format_double(v)); }
  CsvWriter& operator<<(std::int64_t v) { return field(std::to_string(v)); }
  CsvWriter& operator<<(const std::string& s) { return field(s); }
  CsvWriter& operator<<(const Vec3& v) { return *this << v.x() << v.y() << v.z(); }
  void end_row() {
    out_ << '\n';
    first_ = true;
  }
  void save(const fs::path& path) const { write_text_atomically(path, out_.str()); }

 private:
  CsvWriter& field(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
    return *this;
  }
  std::ostringstream out_;
  bool first_ = true;
};

void require_increasing(const Csv& csv, const Csv::Row& row, double prev, double t, bool strict) {
  if (strict ? t <= prev : t < prev)
    throw csv.error(row, "non-monotone time " + format_double(t) + " after " + format_double(prev));
}

}  // namespace

std::vector<ImuSample> read_imu_csv(const fs::path& path) {
  const Csv csv(path);
  const std::size_t ct = csv.column("time"), wx = csv.column("wx"), wy = csv.column("wy"), wz = csv.column("wz"),
                    ax = csv.column("ax"), ay = csv.column("ay"), az = csv.column("az");
  std::vector<ImuSample> out;
  out.reserve(csv.rows().size());
  for (const auto& r : csv.rows()) {
    ImuSample s;
    s.time = csv.number(r, ct);
    s.gyro = Vec3(csv.number(r, wx), csv.number(r, wy), csv.number(r, wz));
    s.accel = Vec3(csv.number(r, ax), csv.number(r, ay), csv.number(r, az));
    if (s.gyro.norm() >= 20.0) throw csv.error(r, "angular rate exceeds 20 rad/s");
    if (s.accel.norm() >= 200.0) throw csv.error(r, "specific force exceeds 200 m/s^2");
    if (!out.empty()) require_increasing(csv, r, out.back().time, s.time, true);
    out.push_back(s);
  }
  if (out.empty()) throw DataError(path.string() + ": no IMU samples");
  return out;
}

void write_imu_csv(const fs::path& path, const std::vector<ImuSample>& samples) {
  CsvWriter w("time,wx,wy,wz,ax,ay,az");
  for (const auto& s : samples) {
    w << s.time << s.gyro << s.accel;
    w.end_row();
  }
  w.save(path);
}

std::vector<GnssEpoch> read_gnss_csv(const fs::path& path) {
  const Csv csv(path);
  const std::size_t ct = csv.column("time"), cid = csv.column("sat_id"), cp = csv.column("P"),
                    cl = csv.column("L"), csnr = csv.column("snr"), cx = csv.column("sat_x"),
                    cy = csv.column("sat_y"), cz = csv.column("sat_z"), cclk = csv.column("sat_clk"),
                    clam = csv.column("lambda"), ci = csv.column("iono"), ctr = csv.column("tropo"),
                    clli = csv.column("lli");
  std::vector<GnssEpoch> out;
  std::unordered_set<std::string> ids;
  for (const auto& r : csv.rows()) {
    const double t = csv.number(r, ct);
    if (out.empty() || t != out.back().time) {
      if (!out.empty()) require_increasing(csv, r, out.back().time, t, true);
      out.emplace_back();
      out.back().time = t;
      ids.clear();
    }
    SatObservation so;
    so.obs.id = csv.text(r, cid);
    if (so.obs.id.empty()) throw csv.error(r, "empty value in column 'sat_id'");
    if (!ids.insert(so.obs.id).second) throw csv.error(r, "duplicate satellite " + so.obs.id + " in epoch");
    so.sat.id = so.obs.id;
    const auto p = csv.optional_number(r, cp);
    const auto l = csv.optional_number(r, cl);
    so.obs.pseudorange_valid = p.has_value();
    so.obs.carrier_valid = l.has_value();
    so.obs.pseudorange = p.value_or(0.0);
    so.obs.carrier = l.value_or(0.0);
    if (p && (*p < 1.8e7 || *p > 4.5e7)) throw csv.error(r, "pseudorange outside [1.8e7, 4.5e7] m");
    so.sat.snr = csv.number(r, csnr);
    if (so.sat.snr < 0.0 || so.sat.snr > 70.0) throw csv.error(r, "snr outside [0, 70] dB-Hz");
    so.sat.position = {Vec3(csv.number(r, cx), csv.number(r, cy), csv.number(r, cz))};
    so.sat.clock = csv.number(r, cclk);
    so.sat.wavelength = csv.number(r, clam);
    if (!(so.sat.wavelength > 0.0)) throw csv.error(r, "lambda must be positive");
    so.obs.iono = csv.number(r, ci);
    so.obs.tropo = csv.number(r, ctr);
    so.obs.loss_of_lock = csv.integer(r, clli) != 0;
    out.back().sats.push_back(std::move(so));
  }
  if (out.empty()) throw DataError(path.string() + ": no epochs");
  return out;
}

void write_gnss_csv(const fs::path& path, const std::vector<GnssEpoch>& epochs, bool base) {
  CsvWriter w("time,sat_id,P,L,snr,sat_x,sat_y,sat_z,sat_clk,lambda,iono,tropo,lli");
  for (const auto& e : epochs)
    for (const auto& s : base ? e.base_sats : e.sats) {
      w << e.time << s.obs.id << (s.obs.pseudorange_valid ? format_double(s.obs.pseudorange) : std::string())
        << (s.obs.carrier_valid ? format_double(s.obs.carrier) : std::string()) << s.sat.snr << s.sat.position.xyz
        << s.sat.clock << s.sat.wavelength << s.obs.iono << s.obs.tropo
        << static_cast<std::int64_t>(s.obs.loss_of_lock ? 1 : 0);
      w.end_row();
    }
  w.save(path);
}

std::vector<TrackRow> read_tracks_csv(const fs::path& path) {
  const Csv csv(path);
  const std::size_t ct = csv.column("time"), cc = csv.column("clone_id"), cf = csv.column("feature_id"),
                    u0 = csv.column("u0"), v0 = csv.column("v0"), u1 = csv.column("u1"), v1 = csv.column("v1");
  std::vector<TrackRow> out;
  out.reserve(csv.rows().size());
  for (const auto& r : csv.rows()) {
    TrackRow t;
    t.time = csv.number(r, ct);
    t.clone_id = csv.integer(r, cc);
    t.feature_id = csv.integer(r, cf);
    t.uv = Eigen::Vector4d(csv.number(r, u0), csv.number(r, v0), csv.number(r, u1), csv.number(r, v1));
    if (!out.empty()) {
      require_increasing(csv, r, out.back().time, t.time, false);
      if (t.time == out.back().time && t.clone_id != out.back().clone_id)
        throw csv.error(r, "two clone ids share one frame time");
      if (t.time != out.back().time && t.clone_id <= out.back().clone_id)
        throw csv.error(r, "clone ids must increase with time");
    }
    out.push_back(t);
  }
  return out;
}

void write_tracks_csv(const fs::path& path, const std::vector<TrackRow>& rows) {
  CsvWriter w("time,clone_id,feature_id,u0,v0,u1,v1");
  for (const auto& t : rows) {
    w << t.time << t.clone_id << t.feature_id << t.uv(0) << t.uv(1) << t.uv(2) << t.uv(3);
    w.end_row();
  }
  w.save(path);
}

std::vector<CameraFrame> group_frames(const std::vector<TrackRow>& rows) {
  std::vector<CameraFrame> out;
  for (const auto& r : rows) {
    if (out.empty() || out.back().clone_id != r.clone_id) {
      out.emplace_back();
      out.back().time = r.time;
      out.back().clone_id = r.clone_id;
    }
    out.back().features.emplace_back(r.feature_id, r.uv);
  }
  return out;
}

std::vector<TrajectoryPoint> read_trajectory_csv(const fs::path& path) {
  const Csv csv(path);
  const char* names[] = {"time", "x", "y", "z", "e", "n", "u", "ve", "vn", "vu", "qw", "qx", "qy", "qz"};
  std::size_t c[14];
  for (int i = 0; i < 14; ++i) c[i] = csv.column(names[i]);
  std::vector<TrajectoryPoint> out;
  out.reserve(csv.rows().size());
  for (const auto& r : csv.rows()) {
    TrajectoryPoint p;
    p.time = csv.number(r, c[0]);
    p.ecef = {Vec3(csv.number(r, c[1]), csv.number(r, c[2]), csv.number(r, c[3]))};
    p.enu = Vec3(csv.number(r, c[4]), csv.number(r, c[5]), csv.number(r, c[6]));
    p.velocity = Vec3(csv.number(r, c[7]), csv.number(r, c[8]), csv.number(r, c[9]));
    p.attitude = Attitude(csv.number(r, c[10]), csv.number(r, c[11]), csv.number(r, c[12]), csv.number(r, c[13]));
    if (!out.empty()) require_increasing(csv, r, out.back().time, p.time, true);
    out.push_back(p);
  }
  return out;
}

void write_trajectory_csv(const fs::path& path, const std::vector<TrajectoryPoint>& points) {
  CsvWriter w("time,x,y,z,e,n,u,ve,vn,vu,qw,qx,qy,qz");
  for (const auto& p : points) {
    const auto& q = p.attitude.quaternion();
    w << p.time << p.ecef.xyz << p.enu << p.velocity << q.w() << q.x() << q.y() << q.z();
    w.end_row();
  }
  w.save(path);
}

std::vector<TruthLabel> read_truth_labels_csv(const fs::path& path) {
  const Csv csv(path);
  const std::size_t ct = csv.column("time"), cid = csv.column("sat_id"), ce = csv.column("elevation"),
                    ca = csv.column("azimuth"), cl = csv.column("label"), ch = csv.column("heading");
  std::vector<TruthLabel> out;
  for (const auto& r : csv.rows()) {
    TruthLabel t;
    t.time = csv.number(r, ct);
    t.id = csv.text(r, cid);
    t.ea = {csv.number(r, ce), csv.number(r, ca)};
    const std::string& l = csv.text(r, cl);
    if (l == "los")
      t.label = SignalLabel::Los;
    else if (l == "nlos")
      t.label = SignalLabel::Nlos;
    else
      throw csv.error(r, "label must be 'los' or 'nlos', got '" + l + "'");
    t.heading = csv.number(r, ch);
    if (!out.empty()) require_increasing(csv, r, out.back().time, t.time, false);
    out.push_back(std::move(t));
  }
  return out;
}

void write_truth_labels_csv(const fs::path& path, const std::vector<TruthLabel>& labels) {
  CsvWriter w("time,sat_id,elevation,azimuth,label,heading");
  for (const auto& t : labels) {
    w << t.time << t.id << t.ea.elevation << t.ea.azimuth
      << std::string(t.label == SignalLabel::Los ? "los" : "nlos") << t.heading;
    w.end_row();
  }
  w.save(path);
}

void attach_base(std::vector<GnssEpoch>& rover, const std::vector<GnssEpoch>& base,
                 const std::optional<EcefPosition>& base_position) {
  std::size_t j = 0;
  for (auto& e : rover) {
    e.base_position = base_position;
    while (j < base.size() && base[j].time < e.time - 1e-3) ++j;
    if (j < base.size() && std::abs(base[j].time - e.time) <= 1e-3) e.base_sats = base[j].sats;
  }
}

Dataset parse_dataset(const RunConfig& cfg) {
  validate_run_config(cfg);
  Dataset ds;
  ds.imu = read_imu_csv(cfg.paths.imu);
  ds.gnss = read_gnss_csv(cfg.paths.gnss);
  ds.base_position = cfg.base_position;
  if (!cfg.paths.base_gnss.empty()) attach_base(ds.gnss, read_gnss_csv(cfg.paths.base_gnss), cfg.base_position);
  if (!cfg.paths.tracks.empty()) ds.tracks = read_tracks_csv(cfg.paths.tracks);
  if (!cfg.paths.masks.empty()) {
    ds.mask_manifest = read_mask_manifest(cfg.paths.masks);
    const fs::path dir = cfg.paths.masks.parent_path();
    for (const auto& e : ds.mask_manifest.entries) {
      SkyMask m = read_mask_png(dir / e.file);
      m.image_id = e.file;
      m.time = e.time;
      ds.masks.emplace(e.file, std::move(m));
    }
  }
  if (!cfg.paths.truth.empty()) ds.truth = read_trajectory_csv(cfg.paths.truth);
  if (!cfg.paths.truth_labels.empty()) ds.truth_labels = read_truth_labels_csv(cfg.paths.truth_labels);

  double lo = ds.imu.front().time, hi = ds.imu.back().time;
  auto widen = [&](double t) {
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  };
  widen(ds.gnss.front().time);
  widen(ds.gnss.back().time);
  if (!ds.tracks.empty()) {
    widen(ds.tracks.front().time);
    widen(ds.tracks.back().time);
  }
  if (!ds.mask_manifest.entries.empty()) {
    widen(ds.mask_manifest.entries.front().time);
    widen(ds.mask_manifest.entries.back().time);
  }
  if (hi - lo > 86400.0) throw DataError("input streams span more than 24 h; check time bases");
  return ds;
}

void write_dataset(const fs::path& dir, const Dataset& ds) {
  fs::create_directories(dir / "masks");
  write_imu_csv(dir / "imu.csv", ds.imu);
  write_gnss_csv(dir / "gnss.csv", ds.gnss);
  write_gnss_csv(dir / "base_gnss.csv", ds.gnss, true);
  write_tracks_csv(dir / "tracks.csv", ds.tracks);
  for (const auto& [name, mask] : ds.masks) write_mask_png(dir / "masks" / name, mask);
  write_mask_manifest(dir / "masks" / "manifest.json", ds.mask_manifest);
  write_trajectory_csv(dir / "truth.csv", ds.truth);
  write_truth_labels_csv(dir / "truth_labels.csv", ds.truth_labels);
}

}  // namespace cnav
