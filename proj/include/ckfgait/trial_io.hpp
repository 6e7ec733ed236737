#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ckfgait/ckf.hpp"
#include "ckfgait/metrics.hpp"
#include "ckfgait/preprocess.hpp"
#include "ckfgait/synth.hpp"

namespace ckfgait {

// File names inside a trial directory.
inline constexpr const char* kImuFile = "imu.csv";
inline constexpr const char* kRefFile = "ref.csv";
inline constexpr const char* kEstFile = "est.csv";
inline constexpr const char* kEventsFile = "events.csv";
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kMetricsFile = "metrics.json";

inline constexpr int kFormatVersion = 1;

// One stored IMU frame: sensor-frame specific force (gravity included) plus
// the orientation estimate, per sensor. This is what lands in imu.csv;
// gravity removal happens on load.
struct RawImuRow {
  double t = 0.0;
  Vec3 accel_pelvis = Vec3::Zero();
  Vec3 accel_lshank = Vec3::Zero();
  Vec3 accel_rshank = Vec3::Zero();
  Quat q_pelvis = Quat::Identity();
  Quat q_lshank = Quat::Identity();
  Quat q_rshank = Quat::Identity();
};

// Extra per-frame diagnostics written to est.csv under dbg_ columns. These
// are debugging aids, not part of the canonical pose schema, and are ignored
// when an estimate file is loaded back.
struct EstimateDebug {
  int sckf_iterations = 0;
  bool sckf_converged = true;
  double res_thigh_len_l = 0.0;
  double res_thigh_len_r = 0.0;
  double res_hinge_l = 0.0;
  double res_hinge_r = 0.0;
  double knee_angle_l = 0.0;
  double knee_angle_r = 0.0;
};

enum class EventSource { kDetect, kFile };

struct StepDetectionConfig {
  double window_seconds = 0.25;
  double variance_threshold = 1.0;
};

struct MetricsConfig {
  std::string euler_order = "ZXY";
  bool bias_removal = true;
};

// Gait-script settings as they appear in the config file. Body dimensions and
// the sample rate live at the top level of RunConfig; noise here corrupts the
// generated trial, zero means noiseless.
struct GaitConfig {
  double cadence = 1.1;
  double stride_length = 0.9;
  double stance_fraction = 0.6;
  double peak_knee_flexion_deg = 60.0;
  std::string path = "straight";
  double duration = 30.0;
  double lead_in = 2.0;
  double lead_out = 1.0;
  std::uint64_t seed = 1;
  double accel_noise_sd = 0.0;    // m/s^2
  double ori_noise_sd_deg = 0.0;  // degrees
};

struct RunConfig {
  double sample_rate_hz = 100.0;
  Vec3 gravity = kDefaultGravity;
  BodyDimensions body;
  NoiseConfig noise;
  double p0_scale = 0.5;
  StepDetectionConfig step_detection;
  EventSource event_source = EventSource::kDetect;
  MetricsConfig metrics;
  GaitConfig gait;

  GaitParams gaitParams() const;  // gait + body + sample rate, validated
  void validate() const;          // throws DataError
};

PathType parsePathType(const std::string& name);
const char* pathTypeName(PathType type);

// CSV layer. All writes are atomic (temp file in the same directory, then
// rename). Loads validate: mandatory exact headers, finite values, strictly
// increasing timestamps, quaternion norms within 1e-3 of unit (then
// renormalized). Errors carry the file name and 1-based line number.
std::vector<RawImuRow> loadImuCsv(const std::filesystem::path& file);
void saveImuCsv(const std::filesystem::path& file,
                std::span<const RawImuRow> rows);

std::vector<PoseSnapshot> loadPoseCsv(const std::filesystem::path& file);
void savePoseCsv(const std::filesystem::path& file,
                 std::span<const PoseSnapshot> poses);
void saveEstimateCsv(const std::filesystem::path& file,
                     std::span<const PoseSnapshot> poses,
                     std::span<const EstimateDebug> debug);

StepEvents loadEventsCsv(const std::filesystem::path& file);
void saveEventsCsv(const std::filesystem::path& file,
                   const StepEvents& events);

// Gravity removal and its inverse.
std::vector<ImuFrame> toImuFrames(std::span<const RawImuRow> rows,
                                  const Vec3& gravity);
std::vector<RawImuRow> toRawRows(std::span<const ImuFrame> frames,
                                 const Vec3& gravity);

// Config JSON. Unknown keys anywhere are rejected; absent keys keep their
// defaults, so "{}" is a valid config.
RunConfig loadRunConfig(const std::filesystem::path& file);
void saveRunConfig(const std::filesystem::path& file, const RunConfig& cfg);
RunConfig parseRunConfig(const std::string& text, const std::string& origin);
std::string runConfigText(const RunConfig& cfg);

std::string metricReportText(const MetricReport& report);
void saveMetricReport(const std::filesystem::path& file,
                      const MetricReport& report);

struct TrialFiles {
  std::vector<RawImuRow> imu;
  std::optional<std::vector<PoseSnapshot>> reference;
  std::optional<StepEvents> events;
};

// Reads imu.csv (required) plus ref.csv and events.csv when present, and
// cross-checks frame counts and event bounds.
TrialFiles loadTrial(const std::filesystem::path& dir);

}  // namespace ckfgait
