#include "ckfgait/trial_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <string_view>

#include "json.hpp"

#include "ckfgait/errors.hpp"

namespace fs = std::filesystem;

namespace ckfgait {
namespace {

constexpr const char* kImuHeader =
    "time,"
    "pelvis_acc_x,pelvis_acc_y,pelvis_acc_z,"
    "pelvis_quat_w,pelvis_quat_x,pelvis_quat_y,pelvis_quat_z,"
    "lshank_acc_x,lshank_acc_y,lshank_acc_z,"
    "lshank_quat_w,lshank_quat_x,lshank_quat_y,lshank_quat_z,"
    "rshank_acc_x,rshank_acc_y,rshank_acc_z,"
    "rshank_quat_w,rshank_quat_x,rshank_quat_y,rshank_quat_z";

constexpr const char* kPoseHeader =
    "time,"
    "mp_x,mp_y,mp_z,"
    "lhip_x,lhip_y,lhip_z,rhip_x,rhip_y,rhip_z,"
    "lknee_x,lknee_y,lknee_z,rknee_x,rknee_y,rknee_z,"
    "lankle_x,lankle_y,lankle_z,rankle_x,rankle_y,rankle_z,"
    "pelvis_quat_w,pelvis_quat_x,pelvis_quat_y,pelvis_quat_z,"
    "lthigh_quat_w,lthigh_quat_x,lthigh_quat_y,lthigh_quat_z,"
    "rthigh_quat_w,rthigh_quat_x,rthigh_quat_y,rthigh_quat_z,"
    "lshank_quat_w,lshank_quat_x,lshank_quat_y,lshank_quat_z,"
    "rshank_quat_w,rshank_quat_x,rshank_quat_y,rshank_quat_z";

constexpr int kPoseColumns = 42;

constexpr const char* kDebugHeader =
    "dbg_sckf_iterations,dbg_sckf_converged,"
    "dbg_res_thigh_len_l,dbg_res_thigh_len_r,"
    "dbg_res_hinge_l,dbg_res_hinge_r,"
    "dbg_knee_angle_l,dbg_knee_angle_r";

constexpr const char* kEventsHeader = "side,start_index,end_index";

void appendDouble(std::string& out, double v) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
  out.append(buf, static_cast<size_t>(n));
}

void appendVec(std::string& out, const Vec3& v) {
  for (int i = 0; i < 3; ++i) {
    out.push_back(',');
    appendDouble(out, v[i]);
  }
}

void appendQuat(std::string& out, const Quat& q) {
  const double wxyz[4] = {q.w(), q.x(), q.y(), q.z()};
  for (double c : wxyz) {
    out.push_back(',');
    appendDouble(out, c);
  }
}

void atomicWrite(const fs::path& file, const std::string& content) {
  fs::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot open " + tmp.string() + " for writing");
    }
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      throw DataError("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) {
    throw DataError("rename to " + file.string() + " failed: " +
                    ec.message());
  }
}

struct LineCtx {
  const std::string& file;
  size_t line;

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(file + " line " + std::to_string(line) + ": " + msg);
  }
};

std::vector<std::string_view> splitCsv(std::string_view line) {
  std::vector<std::string_view> fields;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

class FieldReader {
 public:
  FieldReader(const std::vector<std::string_view>& fields, const LineCtx& ctx)
      : fields_(fields), ctx_(ctx) {}

  double nextDouble() {
    const std::string_view f = next();
    double v = 0.0;
    const auto [ptr, err] =
        std::from_chars(f.data(), f.data() + f.size(), v);
    if (err != std::errc() || ptr != f.data() + f.size()) {
      ctx_.fail("column " + std::to_string(index_) + ": cannot parse \"" +
                std::string(f) + "\" as a number");
    }
    if (!std::isfinite(v)) {
      ctx_.fail("column " + std::to_string(index_) + ": non-finite value \"" +
                std::string(f) + "\"");
    }
    return v;
  }

  long long nextInt() {
    const std::string_view f = next();
    long long v = 0;
    const auto [ptr, err] =
        std::from_chars(f.data(), f.data() + f.size(), v);
    if (err != std::errc() || ptr != f.data() + f.size()) {
      ctx_.fail("column " + std::to_string(index_) + ": cannot parse \"" +
                std::string(f) + "\" as an integer");
    }
    return v;
  }

  std::string_view nextWord() { return next(); }

  Vec3 nextVec3() {
    Vec3 v;
    for (int i = 0; i < 3; ++i) v[i] = nextDouble();
    return v;
  }

  Quat nextQuat() {
    const double w = nextDouble();
    const double x = nextDouble();
    const double y = nextDouble();
    const double z = nextDouble();
    const double norm = std::sqrt(w * w + x * x + y * y + z * z);
    if (std::abs(norm - 1.0) > 1e-3) {
      ctx_.fail("quaternion norm " + std::to_string(norm) +
                " deviates from unit by more than 1e-3");
    }
    return Quat(w / norm, x / norm, y / norm, z / norm);
  }

 private:
  std::string_view next() {
    if (index_ >= fields_.size()) {
      ctx_.fail("expected more columns, row has " +
                std::to_string(fields_.size()));
    }
    return fields_[index_++];
  }

  const std::vector<std::string_view>& fields_;
  const LineCtx& ctx_;
  size_t index_ = 0;
};

// Reads a whole CSV file: leading '#' lines are comments (a
// "# format_version=N" comment is checked against the supported version),
// the first regular line is the header, everything after is data.
class CsvReader {
 public:
  explicit CsvReader(const fs::path& file) : label_(file.string()) {
    std::ifstream in(file, std::ios::binary);
    if (!in) {
      throw DataError("cannot open " + label_);
    }
    content_.assign(std::istreambuf_iterator<char>(in),
                    std::istreambuf_iterator<char>());
  }

  std::string_view header() {
    std::string_view line;
    while (fetch(line)) {
      if (!line.empty() && line.front() == '#') {
        checkComment(line);
        continue;
      }
      return line;
    }
    throw DataError(label_ + ": missing header line");
  }

  bool nextRow(std::vector<std::string_view>& fields, LineCtx& ctx) {
    std::string_view line;
    while (fetch(line)) {
      if (line.empty()) continue;
      if (line.front() == '#') {
        checkComment(line);
        continue;
      }
      fields = splitCsv(line);
      ctx.line = line_;
      return true;
    }
    return false;
  }

  const std::string& label() const { return label_; }

 private:
  bool fetch(std::string_view& line) {
    if (pos_ >= content_.size()) return false;
    size_t end = content_.find('\n', pos_);
    if (end == std::string::npos) end = content_.size();
    line = std::string_view(content_).substr(pos_, end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end + 1;
    ++line_;
    return true;
  }

  void checkComment(std::string_view line) {
    constexpr std::string_view kTag = "# format_version=";
    if (line.substr(0, kTag.size()) != kTag) return;
    const std::string_view num = line.substr(kTag.size());
    int v = 0;
    const auto [ptr, err] =
        std::from_chars(num.data(), num.data() + num.size(), v);
    if (err != std::errc() || ptr != num.data() + num.size() ||
        v != kFormatVersion) {
      throw DataError(label_ + ": unsupported format_version \"" +
                      std::string(num) + "\"");
    }
  }

  std::string label_;
  std::string content_;
  size_t pos_ = 0;
  size_t line_ = 0;
};

void requireIncreasingTime(double prev, double t, bool first,
                           const LineCtx& ctx) {
  if (!first && t <= prev) {
    ctx.fail("timestamp " + std::to_string(t) +
             " does not increase over previous " + std::to_string(prev));
  }
}

std::string versionLine() {
  return "# format_version=" + std::to_string(kFormatVersion) + "\n";
}

void appendPoseRow(std::string& out, const PoseSnapshot& p) {
  appendDouble(out, p.t);
  appendVec(out, p.mid_pelvis);
  appendVec(out, p.hip_l);
  appendVec(out, p.hip_r);
  appendVec(out, p.knee_l);
  appendVec(out, p.knee_r);
  appendVec(out, p.ankle_l);
  appendVec(out, p.ankle_r);
  appendQuat(out, p.ori.pelvis);
  appendQuat(out, p.ori.lthigh);
  appendQuat(out, p.ori.rthigh);
  appendQuat(out, p.ori.lshank);
  appendQuat(out, p.ori.rshank);
}

PoseSnapshot parsePoseRow(FieldReader& fr) {
  PoseSnapshot p;
  p.t = fr.nextDouble();
  p.mid_pelvis = fr.nextVec3();
  p.hip_l = fr.nextVec3();
  p.hip_r = fr.nextVec3();
  p.knee_l = fr.nextVec3();
  p.knee_r = fr.nextVec3();
  p.ankle_l = fr.nextVec3();
  p.ankle_r = fr.nextVec3();
  p.ori.pelvis = fr.nextQuat();
  p.ori.lthigh = fr.nextQuat();
  p.ori.rthigh = fr.nextQuat();
  p.ori.lshank = fr.nextQuat();
  p.ori.rshank = fr.nextQuat();
  return p;
}

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Strict accessor for one JSON object: every key must be consumed, absent
// keys fall back to defaults.
class Section {
 public:
  Section(const json& obj, std::string path)
      : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) {
      throw DataError(path_ + " must be a JSON object");
    }
  }

  const json* find(const char* key) {
    used_.insert(key);
    const auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  double number(const char* key, double fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number()) {
      throw DataError(path_ + "." + key + " must be a number");
    }
    return v->get<double>();
  }

  int integer(const char* key, int fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_integer() && !v->is_number_unsigned()) {
      throw DataError(path_ + "." + key + " must be an integer");
    }
    return v->get<int>();
  }

  std::uint64_t uinteger(const char* key, std::uint64_t fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_unsigned() && !v->is_number_integer()) {
      throw DataError(path_ + "." + key + " must be an integer");
    }
    if (v->is_number_integer() && v->get<std::int64_t>() < 0) {
      throw DataError(path_ + "." + key + " must be non-negative");
    }
    return v->get<std::uint64_t>();
  }

  bool boolean(const char* key, bool fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_boolean()) {
      throw DataError(path_ + "." + key + " must be a boolean");
    }
    return v->get<bool>();
  }

  std::string str(const char* key, const std::string& fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) {
      throw DataError(path_ + "." + key + " must be a string");
    }
    return v->get<std::string>();
  }

  template <typename VecT>
  VecT numbers(const char* key, const VecT& fallback) {
    const json* v = find(key);
    if (!v) return fallback;
    if (!v->is_array() ||
        v->size() != static_cast<size_t>(fallback.size())) {
      throw DataError(path_ + "." + key + " must be an array of " +
                      std::to_string(fallback.size()) + " numbers");
    }
    VecT out = fallback;
    for (int i = 0; i < fallback.size(); ++i) {
      const json& e = (*v)[static_cast<size_t>(i)];
      if (!e.is_number()) {
        throw DataError(path_ + "." + key + " must be an array of numbers");
      }
      out[i] = e.get<double>();
    }
    return out;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (used_.find(it.key()) == used_.end()) {
        throw DataError(path_ + ": unknown key \"" + it.key() + "\"");
      }
    }
  }

  const std::string& path() const { return path_; }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> used_;
};

}  // namespace

PathType parsePathType(const std::string& name) {
  if (name == "straight") return PathType::kStraight;
  if (name == "figure_eight") return PathType::kFigureEight;
  if (name == "zigzag") return PathType::kZigzag;
  throw DataError("unknown path type \"" + name +
                  "\" (expected straight, figure_eight, or zigzag)");
}

const char* pathTypeName(PathType type) {
  switch (type) {
    case PathType::kStraight: return "straight";
    case PathType::kFigureEight: return "figure_eight";
    case PathType::kZigzag: return "zigzag";
  }
  return "straight";
}

GaitParams RunConfig::gaitParams() const {
  GaitParams p;
  p.cadence = gait.cadence;
  p.stride_length = gait.stride_length;
  p.stance_fraction = gait.stance_fraction;
  p.peak_knee_flexion = gait.peak_knee_flexion_deg * M_PI / 180.0;
  p.path = parsePathType(gait.path);
  p.duration = gait.duration;
  p.sample_rate_hz = sample_rate_hz;
  p.lead_in = gait.lead_in;
  p.lead_out = gait.lead_out;
  p.body = body;
  p.rng_seed = gait.seed;
  return p;
}

void RunConfig::validate() const {
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw DataError("sample_rate_hz must be positive");
  }
  if (!gravity.allFinite()) {
    throw DataError("gravity must be finite");
  }
  if (!(p0_scale > 0.0)) {
    throw DataError("p0_scale must be positive");
  }
  if (!(step_detection.window_seconds > 0.0)) {
    throw DataError("step_detection.window_seconds must be positive");
  }
  if (!(step_detection.variance_threshold > 0.0)) {
    throw DataError("step_detection.variance_threshold must be positive");
  }
  if (gait.accel_noise_sd < 0.0 || gait.ori_noise_sd_deg < 0.0) {
    throw DataError("gait noise levels must be non-negative");
  }
  parseEulerOrder(metrics.euler_order);
  body.validate();
  noise.validate();
  gaitParams().validate();
}

std::vector<RawImuRow> loadImuCsv(const fs::path& file) {
  CsvReader reader(file);
  if (reader.header() != kImuHeader) {
    throw DataError(reader.label() + ": unexpected imu header");
  }
  std::vector<RawImuRow> rows;
  std::vector<std::string_view> fields;
  LineCtx ctx{reader.label(), 0};
  while (reader.nextRow(fields, ctx)) {
    if (fields.size() != 22) {
      ctx.fail("expected 22 columns, got " + std::to_string(fields.size()));
    }
    FieldReader fr(fields, ctx);
    RawImuRow row;
    row.t = fr.nextDouble();
    requireIncreasingTime(rows.empty() ? 0.0 : rows.back().t, row.t,
                          rows.empty(), ctx);
    row.accel_pelvis = fr.nextVec3();
    row.q_pelvis = fr.nextQuat();
    row.accel_lshank = fr.nextVec3();
    row.q_lshank = fr.nextQuat();
    row.accel_rshank = fr.nextVec3();
    row.q_rshank = fr.nextQuat();
    rows.push_back(row);
  }
  return rows;
}

void saveImuCsv(const fs::path& file, std::span<const RawImuRow> rows) {
  std::string out = versionLine();
  out += kImuHeader;
  out.push_back('\n');
  for (const RawImuRow& row : rows) {
    appendDouble(out, row.t);
    appendVec(out, row.accel_pelvis);
    appendQuat(out, row.q_pelvis);
    appendVec(out, row.accel_lshank);
    appendQuat(out, row.q_lshank);
    appendVec(out, row.accel_rshank);
    appendQuat(out, row.q_rshank);
    out.push_back('\n');
  }
  atomicWrite(file, out);
}

std::vector<PoseSnapshot> loadPoseCsv(const fs::path& file) {
  CsvReader reader(file);
  const std::string_view header = reader.header();
  size_t expected_columns = kPoseColumns;
  if (header != kPoseHeader) {
    const std::string base = std::string(kPoseHeader) + ",";
    if (header.substr(0, base.size()) != base) {
      throw DataError(reader.label() + ": unexpected pose header");
    }
    const auto extras = splitCsv(header.substr(base.size()));
    for (std::string_view name : extras) {
      if (name.substr(0, 4) != "dbg_") {
        throw DataError(reader.label() + ": unexpected pose column \"" +
                        std::string(name) + "\"");
      }
    }
    expected_columns += extras.size();
  }

  std::vector<PoseSnapshot> poses;
  std::vector<std::string_view> fields;
  LineCtx ctx{reader.label(), 0};
  while (reader.nextRow(fields, ctx)) {
    if (fields.size() != expected_columns) {
      ctx.fail("expected " + std::to_string(expected_columns) +
               " columns, got " + std::to_string(fields.size()));
    }
    FieldReader fr(fields, ctx);
    PoseSnapshot p = parsePoseRow(fr);
    requireIncreasingTime(poses.empty() ? 0.0 : poses.back().t, p.t,
                          poses.empty(), ctx);
    poses.push_back(p);
  }
  return poses;
}

void savePoseCsv(const fs::path& file, std::span<const PoseSnapshot> poses) {
  std::string out = versionLine();
  out += kPoseHeader;
  out.push_back('\n');
  for (const PoseSnapshot& p : poses) {
    appendPoseRow(out, p);
    out.push_back('\n');
  }
  atomicWrite(file, out);
}

void saveEstimateCsv(const fs::path& file,
                     std::span<const PoseSnapshot> poses,
                     std::span<const EstimateDebug> debug) {
  if (poses.size() != debug.size()) {
    throw DataError("estimate pose/debug length mismatch");
  }
  std::string out = versionLine();
  out += kPoseHeader;
  out.push_back(',');
  out += kDebugHeader;
  out.push_back('\n');
  for (size_t k = 0; k < poses.size(); ++k) {
    appendPoseRow(out, poses[k]);
    const EstimateDebug& d = debug[k];
    out += ',' + std::to_string(d.sckf_iterations);
    out += ',' + std::to_string(d.sckf_converged ? 1 : 0);
    for (double v : {d.res_thigh_len_l, d.res_thigh_len_r, d.res_hinge_l,
                     d.res_hinge_r, d.knee_angle_l, d.knee_angle_r}) {
      out.push_back(',');
      appendDouble(out, v);
    }
    out.push_back('\n');
  }
  atomicWrite(file, out);
}

StepEvents loadEventsCsv(const fs::path& file) {
  CsvReader reader(file);
  if (reader.header() != kEventsHeader) {
    throw DataError(reader.label() + ": unexpected events header");
  }
  StepEvents events;
  std::vector<std::string_view> fields;
  LineCtx ctx{reader.label(), 0};
  while (reader.nextRow(fields, ctx)) {
    if (fields.size() != 3) {
      ctx.fail("expected 3 columns, got " + std::to_string(fields.size()));
    }
    FieldReader fr(fields, ctx);
    const std::string_view side = fr.nextWord();
    const long long begin = fr.nextInt();
    const long long end = fr.nextInt();
    if (side != "left" && side != "right") {
      ctx.fail("side must be left or right, got \"" + std::string(side) +
               "\"");
    }
    if (begin < 0 || end < begin) {
      ctx.fail("invalid interval [" + std::to_string(begin) + ", " +
               std::to_string(end) + "]");
    }
    auto& list = side == "left" ? events.left : events.right;
    if (!list.empty() && begin <= list.back().end) {
      ctx.fail("intervals must be sorted and non-overlapping per side");
    }
    list.push_back(
        {static_cast<int>(begin), static_cast<int>(end)});
  }
  return events;
}

void saveEventsCsv(const fs::path& file, const StepEvents& events) {
  std::string out = versionLine();
  out += kEventsHeader;
  out.push_back('\n');
  for (Side s : {Side::kLeft, Side::kRight}) {
    for (const StepInterval& iv : events.side(s)) {
      out += sideName(s);
      out += ',' + std::to_string(iv.begin);
      out += ',' + std::to_string(iv.end);
      out.push_back('\n');
    }
  }
  atomicWrite(file, out);
}

std::vector<ImuFrame> toImuFrames(std::span<const RawImuRow> rows,
                                  const Vec3& gravity) {
  std::vector<ImuFrame> frames;
  frames.reserve(rows.size());
  for (const RawImuRow& row : rows) {
    ImuFrame f;
    f.t = row.t;
    f.accel_mp = worldInertialAccel(row.q_pelvis, row.accel_pelvis, gravity);
    f.accel_la = worldInertialAccel(row.q_lshank, row.accel_lshank, gravity);
    f.accel_ra = worldInertialAccel(row.q_rshank, row.accel_rshank, gravity);
    f.q_pelvis = row.q_pelvis;
    f.q_lshank = row.q_lshank;
    f.q_rshank = row.q_rshank;
    frames.push_back(f);
  }
  return frames;
}

std::vector<RawImuRow> toRawRows(std::span<const ImuFrame> frames,
                                 const Vec3& gravity) {
  std::vector<RawImuRow> rows;
  rows.reserve(frames.size());
  for (const ImuFrame& f : frames) {
    RawImuRow row;
    row.t = f.t;
    row.accel_pelvis =
        rotateVector(quatInverse(f.q_pelvis), f.accel_mp + gravity);
    row.accel_lshank =
        rotateVector(quatInverse(f.q_lshank), f.accel_la + gravity);
    row.accel_rshank =
        rotateVector(quatInverse(f.q_rshank), f.accel_ra + gravity);
    row.q_pelvis = f.q_pelvis;
    row.q_lshank = f.q_lshank;
    row.q_rshank = f.q_rshank;
    rows.push_back(row);
  }
  return rows;
}

RunConfig parseRunConfig(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(origin + ": " + e.what());
  }

  RunConfig cfg;
  Section top(root, origin);

  const int version = top.integer("format_version", kFormatVersion);
  if (version != kFormatVersion) {
    throw DataError(origin + ": unsupported format_version " +
                    std::to_string(version));
  }
  cfg.sample_rate_hz = top.number("sample_rate_hz", cfg.sample_rate_hz);
  cfg.gravity = top.numbers("gravity", cfg.gravity);
  cfg.p0_scale = top.number("p0_scale", cfg.p0_scale);

  if (const json* j = top.find("body")) {
    Section s(*j, origin + ".body");
    cfg.body.pelvis_width = s.number("pelvis_width", cfg.body.pelvis_width);
    cfg.body.thigh_left = s.number("thigh_left", cfg.body.thigh_left);
    cfg.body.thigh_right = s.number("thigh_right", cfg.body.thigh_right);
    cfg.body.shank_left = s.number("shank_left", cfg.body.shank_left);
    cfg.body.shank_right = s.number("shank_right", cfg.body.shank_right);
    cfg.body.standing_pelvis_z =
        s.number("standing_pelvis_z", cfg.body.standing_pelvis_z);
    cfg.body.floor_z = s.number("floor_z", cfg.body.floor_z);
    s.finish();
  }

  if (const json* j = top.find("noise")) {
    Section s(*j, origin + ".noise");
    cfg.noise.sigma2_acc =
        Vec9::Constant(s.number("accel_var", cfg.noise.sigma2_acc[0]));
    cfg.noise.sigma2_mp = s.numbers("mp_var", cfg.noise.sigma2_mp);
    cfg.noise.sigma2_ls = s.numbers("left_ankle_var", cfg.noise.sigma2_ls);
    cfg.noise.sigma2_rs = s.numbers("right_ankle_var", cfg.noise.sigma2_rs);
    cfg.noise.sigma2_lim =
        Vec9::Constant(s.number("limiter_var", cfg.noise.sigma2_lim[0]));
    s.finish();
  }

  if (const json* j = top.find("sckf")) {
    Section s(*j, origin + ".sckf");
    cfg.noise.sckf_threshold =
        s.number("threshold", cfg.noise.sckf_threshold);
    cfg.noise.max_sckf_iterations =
        s.integer("max_iterations", cfg.noise.max_sckf_iterations);
    s.finish();
  }

  if (const json* j = top.find("step_detection")) {
    Section s(*j, origin + ".step_detection");
    cfg.step_detection.window_seconds =
        s.number("window_seconds", cfg.step_detection.window_seconds);
    cfg.step_detection.variance_threshold = s.number(
        "variance_threshold", cfg.step_detection.variance_threshold);
    s.finish();
  }

  const std::string source = top.str("step_event_source", "detect");
  if (source == "detect") {
    cfg.event_source = EventSource::kDetect;
  } else if (source == "file") {
    cfg.event_source = EventSource::kFile;
  } else {
    throw DataError(origin +
                    ".step_event_source must be \"detect\" or \"file\"");
  }

  if (const json* j = top.find("metrics")) {
    Section s(*j, origin + ".metrics");
    cfg.metrics.euler_order = s.str("euler_order", cfg.metrics.euler_order);
    cfg.metrics.bias_removal =
        s.boolean("bias_removal", cfg.metrics.bias_removal);
    s.finish();
  }

  if (const json* j = top.find("gait")) {
    Section s(*j, origin + ".gait");
    cfg.gait.cadence = s.number("cadence", cfg.gait.cadence);
    cfg.gait.stride_length =
        s.number("stride_length", cfg.gait.stride_length);
    cfg.gait.stance_fraction =
        s.number("stance_fraction", cfg.gait.stance_fraction);
    cfg.gait.peak_knee_flexion_deg =
        s.number("peak_knee_flexion_deg", cfg.gait.peak_knee_flexion_deg);
    cfg.gait.path = s.str("path", cfg.gait.path);
    cfg.gait.duration = s.number("duration", cfg.gait.duration);
    cfg.gait.lead_in = s.number("lead_in", cfg.gait.lead_in);
    cfg.gait.lead_out = s.number("lead_out", cfg.gait.lead_out);
    cfg.gait.seed = s.uinteger("seed", cfg.gait.seed);
    cfg.gait.accel_noise_sd =
        s.number("accel_noise_sd", cfg.gait.accel_noise_sd);
    cfg.gait.ori_noise_sd_deg =
        s.number("ori_noise_sd_deg", cfg.gait.ori_noise_sd_deg);
    s.finish();
  }

  top.finish();

  if (!(cfg.sample_rate_hz > 0.0)) {
    throw DataError(origin + ": sample_rate_hz must be positive");
  }
  cfg.noise.dt = 1.0 / cfg.sample_rate_hz;
  cfg.validate();
  return cfg;
}

RunConfig loadRunConfig(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    throw DataError("cannot open " + file.string());
  }
  const std::string text{std::istreambuf_iterator<char>(in),
                         std::istreambuf_iterator<char>()};
  return parseRunConfig(text, file.string());
}

std::string runConfigText(const RunConfig& cfg) {
  ojson j;
  j["format_version"] = kFormatVersion;
  j["sample_rate_hz"] = cfg.sample_rate_hz;
  j["gravity"] = {cfg.gravity[0], cfg.gravity[1], cfg.gravity[2]};
  j["body"] = {
      {"pelvis_width", cfg.body.pelvis_width},
      {"thigh_left", cfg.body.thigh_left},
      {"thigh_right", cfg.body.thigh_right},
      {"shank_left", cfg.body.shank_left},
      {"shank_right", cfg.body.shank_right},
      {"standing_pelvis_z", cfg.body.standing_pelvis_z},
      {"floor_z", cfg.body.floor_z},
  };
  j["noise"] = {
      {"accel_var", cfg.noise.sigma2_acc[0]},
      {"mp_var", {cfg.noise.sigma2_mp[0], cfg.noise.sigma2_mp[1],
                  cfg.noise.sigma2_mp[2]}},
      {"left_ankle_var", {cfg.noise.sigma2_ls[0], cfg.noise.sigma2_ls[1],
                          cfg.noise.sigma2_ls[2], cfg.noise.sigma2_ls[3]}},
      {"right_ankle_var", {cfg.noise.sigma2_rs[0], cfg.noise.sigma2_rs[1],
                           cfg.noise.sigma2_rs[2], cfg.noise.sigma2_rs[3]}},
      {"limiter_var", cfg.noise.sigma2_lim[0]},
  };
  j["sckf"] = {
      {"threshold", cfg.noise.sckf_threshold},
      {"max_iterations", cfg.noise.max_sckf_iterations},
  };
  j["p0_scale"] = cfg.p0_scale;
  j["step_detection"] = {
      {"window_seconds", cfg.step_detection.window_seconds},
      {"variance_threshold", cfg.step_detection.variance_threshold},
  };
  j["step_event_source"] =
      cfg.event_source == EventSource::kDetect ? "detect" : "file";
  j["metrics"] = {
      {"euler_order", cfg.metrics.euler_order},
      {"bias_removal", cfg.metrics.bias_removal},
  };
  j["gait"] = {
      {"cadence", cfg.gait.cadence},
      {"stride_length", cfg.gait.stride_length},
      {"stance_fraction", cfg.gait.stance_fraction},
      {"peak_knee_flexion_deg", cfg.gait.peak_knee_flexion_deg},
      {"path", cfg.gait.path},
      {"duration", cfg.gait.duration},
      {"lead_in", cfg.gait.lead_in},
      {"lead_out", cfg.gait.lead_out},
      {"seed", cfg.gait.seed},
      {"accel_noise_sd", cfg.gait.accel_noise_sd},
      {"ori_noise_sd_deg", cfg.gait.ori_noise_sd_deg},
  };
  return j.dump(2) + "\n";
}

void saveRunConfig(const fs::path& file, const RunConfig& cfg) {
  atomicWrite(file, runConfigText(cfg));
}

std::string metricReportText(const MetricReport& report) {
  auto angle = [](const JointAngleStat& s) {
    ojson j;
    j["rmse_biased"] = s.rmse_biased;
    j["rmse_unbiased"] = s.rmse_unbiased;
    if (s.cc) {
      j["cc"] = *s.cc;
    } else {
      j["cc"] = nullptr;
    }
    return j;
  };

  ojson j;
  j["format_version"] = kFormatVersion;
  j["e_pos_m"] = report.e_pos;
  j["e_ori_biased_rad"] = report.e_ori_biased;
  j["e_ori_unbiased_rad"] = report.e_ori_unbiased;
  j["joint_angles_rad"] = {
      {"knee_sagittal", angle(report.knee_sagittal)},
      {"hip_sagittal", angle(report.hip_sagittal)},
      {"hip_frontal", angle(report.hip_frontal)},
      {"hip_transverse", angle(report.hip_transverse)},
  };
  if (report.ttd) {
    j["ttd_deviation"] = {
        {"pelvis", report.ttd->pelvis},
        {"left_ankle", report.ttd->left_ankle},
        {"right_ankle", report.ttd->right_ankle},
    };
  } else {
    j["ttd_deviation"] = nullptr;
  }
  return j.dump(2) + "\n";
}

void saveMetricReport(const fs::path& file, const MetricReport& report) {
  atomicWrite(file, metricReportText(report));
}

TrialFiles loadTrial(const fs::path& dir) {
  TrialFiles files;
  const fs::path imu_path = dir / kImuFile;
  if (!fs::exists(imu_path)) {
    throw DataError("missing " + imu_path.string());
  }
  files.imu = loadImuCsv(imu_path);

  const fs::path ref_path = dir / kRefFile;
  if (fs::exists(ref_path)) {
    files.reference = loadPoseCsv(ref_path);
    if (files.reference->size() != files.imu.size()) {
      throw DataError(ref_path.string() + ": " +
                      std::to_string(files.reference->size()) +
                      " frames but " + imu_path.string() + " has " +
                      std::to_string(files.imu.size()));
    }
  }

  const fs::path events_path = dir / kEventsFile;
  if (fs::exists(events_path)) {
    StepEvents events = loadEventsCsv(events_path);
    const int n = static_cast<int>(files.imu.size());
    for (Side s : {Side::kLeft, Side::kRight}) {
      for (const StepInterval& iv : events.side(s)) {
        if (iv.end >= n) {
          throw DataError(events_path.string() + ": interval [" +
                          std::to_string(iv.begin) + ", " +
                          std::to_string(iv.end) + "] exceeds " +
                          std::to_string(n) + " frames");
        }
      }
    }
    files.events = std::move(events);
  }
  return files;
}

}  // namespace ckfgait
