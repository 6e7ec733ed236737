#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ckfgait/trial_io.hpp"

namespace ckfgait {

// Minimal stderr logger, level picked up from the CKFGAIT_LOG environment
// variable (error, warn, info, debug). Defaults to warn.
enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };
bool logEnabled(LogLevel level);
void logMessage(LogLevel level, const std::string& msg);

struct EstimateResult {
  std::vector<PoseSnapshot> poses;
  std::vector<EstimateDebug> debug;
  StepEvents events;  // the contact intervals the filter ran with
};

// Initial filter state from the first reference frame, velocities zero.
StateVec initialStateFromReference(const PoseSnapshot& pose);

// Standing-pose guess when no reference is available: pelvis at its nominal
// height above the origin, ankles on the floor below the hips.
StateVec initialStateFromOrientations(const ImuFrame& frame,
                                      const BodyDimensions& body);

// Runs the filter over one trial. Step events come from the override when
// given, from detection otherwise. The reference, when present, only seeds
// the initial state.
EstimateResult runEstimate(
    std::vector<ImuFrame> frames, const RunConfig& cfg,
    const std::optional<StepEvents>& event_override,
    const std::optional<std::vector<PoseSnapshot>>& reference);

// CLI verb implementations. Directories are created as needed; all file
// writes are atomic.
void commandSynth(const RunConfig& cfg, const std::filesystem::path& out_dir);

void commandEstimate(const RunConfig& cfg,
                     const std::filesystem::path& in_dir,
                     const std::filesystem::path& out_dir,
                     const std::optional<std::filesystem::path>& events_file);

MetricReport commandEvaluate(const RunConfig& cfg,
                             const std::filesystem::path& in_dir,
                             const std::filesystem::path& out_dir);

void commandPipeline(const RunConfig& cfg,
                     const std::filesystem::path& out_dir,
                     const std::optional<std::filesystem::path>& events_file);

// Runs `batch` pipelines into out_dir/trial_<i> with seeds seed+i, fanned
// across worker threads.
void commandBatch(const RunConfig& cfg, const std::filesystem::path& out_dir,
                  int batch);

}  // namespace ckfgait
