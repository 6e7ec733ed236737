#include "ckfgait/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <mutex>
#include <thread>

#include "ckfgait/errors.hpp"
#include "ckfgait/synth.hpp"

namespace fs = std::filesystem;

namespace ckfgait {
namespace {

LogLevel readLogLevel() {
  const char* env = std::getenv("CKFGAIT_LOG");
  if (!env) return LogLevel::kWarn;
  if (std::strcmp(env, "error") == 0) return LogLevel::kError;
  if (std::strcmp(env, "warn") == 0) return LogLevel::kWarn;
  if (std::strcmp(env, "info") == 0) return LogLevel::kInfo;
  if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
  return LogLevel::kWarn;
}

const char* levelName(LogLevel level) {
  switch (level) {
    case LogLevel::kError: return "error";
    case LogLevel::kWarn: return "warn";
    case LogLevel::kInfo: return "info";
    case LogLevel::kDebug: return "debug";
  }
  return "?";
}

std::mutex g_log_mutex;

SegmentOrientations frameOrientations(const ImuFrame& f) {
  SegmentOrientations oris;
  oris.pelvis = f.q_pelvis;
  oris.lshank = f.q_lshank;
  oris.rshank = f.q_rshank;
  return oris;
}

StepEvents detectEvents(const std::vector<ImuFrame>& frames,
                        const RunConfig& cfg) {
  StepEvents events;
  for (Side s : {Side::kLeft, Side::kRight}) {
    std::vector<Vec3> accel;
    accel.reserve(frames.size());
    for (const ImuFrame& f : frames) accel.push_back(f.accel(s));
    events.side(s) =
        detectSteps(accel, cfg.sample_rate_hz,
                    cfg.step_detection.window_seconds,
                    cfg.step_detection.variance_threshold);
  }
  return events;
}

void checkEventBounds(const StepEvents& events, size_t n_frames,
                      const std::string& origin) {
  for (Side s : {Side::kLeft, Side::kRight}) {
    for (const StepInterval& iv : events.side(s)) {
      if (iv.end >= static_cast<int>(n_frames)) {
        throw DataError(origin + ": step interval [" +
                        std::to_string(iv.begin) + ", " +
                        std::to_string(iv.end) + "] exceeds " +
                        std::to_string(n_frames) + " frames");
      }
    }
  }
}

}  // namespace

bool logEnabled(LogLevel level) {
  static const LogLevel configured = readLogLevel();
  return static_cast<int>(level) <= static_cast<int>(configured);
}

void logMessage(LogLevel level, const std::string& msg) {
  if (!logEnabled(level)) return;
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::fprintf(stderr, "[ckfgait %s] %s\n", levelName(level), msg.c_str());
}

StateVec initialStateFromReference(const PoseSnapshot& pose) {
  StateVec x = StateVec::Zero();
  x.segment<3>(kMpPos) = pose.mid_pelvis;
  x.segment<3>(anklePosIndex(Side::kLeft)) = pose.ankle_l;
  x.segment<3>(anklePosIndex(Side::kRight)) = pose.ankle_r;
  return x;
}

StateVec initialStateFromOrientations(const ImuFrame& frame,
                                      const BodyDimensions& body) {
  const Vec3 mp(0.0, 0.0, body.standing_pelvis_z);
  StateVec x = StateVec::Zero();
  x.segment<3>(kMpPos) = mp;
  for (Side s : {Side::kLeft, Side::kRight}) {
    Vec3 ankle =
        hipPosition(mp, frame.q_pelvis, body.pelvis_width, s);
    ankle.z() = body.floor_z;
    x.segment<3>(anklePosIndex(s)) = ankle;
  }
  return x;
}

EstimateResult runEstimate(
    std::vector<ImuFrame> frames, const RunConfig& cfg,
    const std::optional<StepEvents>& event_override,
    const std::optional<std::vector<PoseSnapshot>>& reference) {
  if (frames.empty()) {
    throw DataError("cannot estimate an empty trial");
  }
  if (reference && reference->size() != frames.size()) {
    throw DataError("reference length does not match imu frames");
  }

  EstimateResult result;
  result.events = event_override ? *event_override
                                 : detectEvents(frames, cfg);
  checkEventBounds(result.events, frames.size(), "step events");
  applyStepEvents(frames, result.events);

  const StateVec x0 = reference
                          ? initialStateFromReference(reference->front())
                          : initialStateFromOrientations(frames.front(),
                                                         cfg.body);

  NoiseConfig noise = cfg.noise;
  noise.dt = 1.0 / cfg.sample_rate_hz;
  Filter filter(cfg.body, noise);
  filter.initializeState(x0, cfg.p0_scale);

  result.poses.reserve(frames.size());
  result.debug.reserve(frames.size());
  for (const ImuFrame& f : frames) {
    const StepResult r = filter.step(f, frameOrientations(f));
    result.poses.push_back(r.pose);
    EstimateDebug dbg;
    dbg.sckf_iterations = r.sckf_iterations;
    dbg.sckf_converged = r.sckf_converged;
    dbg.res_thigh_len_l = r.residuals.thigh_len_l;
    dbg.res_thigh_len_r = r.residuals.thigh_len_r;
    dbg.res_hinge_l = r.residuals.hinge_l;
    dbg.res_hinge_r = r.residuals.hinge_r;
    dbg.knee_angle_l = r.residuals.knee_l;
    dbg.knee_angle_r = r.residuals.knee_r;
    result.debug.push_back(dbg);
    if (!r.sckf_converged && logEnabled(LogLevel::kDebug)) {
      logMessage(LogLevel::kDebug,
                 "projection not converged at t=" + std::to_string(f.t));
    }
  }
  return result;
}

void commandSynth(const RunConfig& cfg, const fs::path& out_dir) {
  const GaitParams params = cfg.gaitParams();
  logMessage(LogLevel::kInfo,
             "generating " + std::string(pathTypeName(params.path)) +
                 " trial of " + std::to_string(params.duration) + " s");
  GroundTruthTrial trial = generateGait(params);

  std::vector<ImuFrame> frames = trial.frames;
  if (cfg.gait.accel_noise_sd > 0.0 || cfg.gait.ori_noise_sd_deg > 0.0) {
    frames = corrupt(frames, cfg.gait.accel_noise_sd,
                     cfg.gait.ori_noise_sd_deg * M_PI / 180.0,
                     cfg.gait.seed);
  }

  fs::create_directories(out_dir);
  saveImuCsv(out_dir / kImuFile, toRawRows(frames, cfg.gravity));
  savePoseCsv(out_dir / kRefFile, trial.poses);
  saveEventsCsv(out_dir / kEventsFile, trial.events);
  saveRunConfig(out_dir / kConfigFile, cfg);
}

void commandEstimate(const RunConfig& cfg, const fs::path& in_dir,
                     const fs::path& out_dir,
                     const std::optional<fs::path>& events_file) {
  const TrialFiles files = loadTrial(in_dir);
  const std::vector<ImuFrame> frames = toImuFrames(files.imu, cfg.gravity);

  std::optional<StepEvents> events;
  if (events_file) {
    events = loadEventsCsv(*events_file);
    checkEventBounds(*events, frames.size(), events_file->string());
  } else if (cfg.event_source == EventSource::kFile) {
    if (!files.events) {
      throw DataError("config requests step events from file but " +
                      (in_dir / kEventsFile).string() + " is missing");
    }
    events = files.events;
  }

  const EstimateResult est =
      runEstimate(frames, cfg, events, files.reference);
  fs::create_directories(out_dir);
  saveEstimateCsv(out_dir / kEstFile, est.poses, est.debug);
}

MetricReport commandEvaluate(const RunConfig& cfg, const fs::path& in_dir,
                             const fs::path& out_dir) {
  const fs::path ref_path = in_dir / kRefFile;
  const fs::path est_path = in_dir / kEstFile;
  if (!fs::exists(ref_path)) {
    throw DataError("missing " + ref_path.string());
  }
  if (!fs::exists(est_path)) {
    throw DataError("missing " + est_path.string());
  }
  const std::vector<PoseSnapshot> ref = loadPoseCsv(ref_path);
  const std::vector<PoseSnapshot> est = loadPoseCsv(est_path);

  StepEvents events;
  const fs::path events_path = in_dir / kEventsFile;
  if (fs::exists(events_path)) {
    events = loadEventsCsv(events_path);
    checkEventBounds(events, ref.size(), events_path.string());
  }

  const MetricReport report =
      evaluateTrial(TrialComparison{est, ref}, events,
                    parseEulerOrder(cfg.metrics.euler_order),
                    cfg.metrics.bias_removal);
  fs::create_directories(out_dir);
  saveMetricReport(out_dir / kMetricsFile, report);
  return report;
}

void commandPipeline(const RunConfig& cfg, const fs::path& out_dir,
                     const std::optional<fs::path>& events_file) {
  commandSynth(cfg, out_dir);
  commandEstimate(cfg, out_dir, out_dir, events_file);
  commandEvaluate(cfg, out_dir, out_dir);
}

void commandBatch(const RunConfig& cfg, const fs::path& out_dir, int batch) {
  if (batch < 1) {
    throw DataError("batch count must be at least 1");
  }
  if (batch == 1) {
    commandPipeline(cfg, out_dir, std::nullopt);
    return;
  }

  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;

  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= batch) return;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error) return;
      }
      try {
        RunConfig trial_cfg = cfg;
        trial_cfg.gait.seed = cfg.gait.seed + static_cast<std::uint64_t>(i);
        commandPipeline(trial_cfg, out_dir / ("trial_" + std::to_string(i)),
                        std::nullopt);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 2;
  const int n_workers = std::min<int>(batch, static_cast<int>(hw));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(n_workers));
  for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace ckfgait
