#include <cstdlib>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

#include "ckfgait/errors.hpp"
#include "ckfgait/pipeline.hpp"
#include "ckfgait/synth.hpp"
#include "ckfgait/trial_io.hpp"
#include "test_util.hpp"

using namespace ckfgait;

namespace {

constexpr const char* kSmallImuCsv =
    "# format_version=1\n"
    "time,"
    "pelvis_acc_x,pelvis_acc_y,pelvis_acc_z,"
    "pelvis_quat_w,pelvis_quat_x,pelvis_quat_y,pelvis_quat_z,"
    "lshank_acc_x,lshank_acc_y,lshank_acc_z,"
    "lshank_quat_w,lshank_quat_x,lshank_quat_y,lshank_quat_z,"
    "rshank_acc_x,rshank_acc_y,rshank_acc_z,"
    "rshank_quat_w,rshank_quat_x,rshank_quat_y,rshank_quat_z\n";

std::string imuLine(double t, const std::string& pelvis_acc_x = "0",
                    const std::string& quat_w = "1") {
  std::string row = std::to_string(t);
  row += "," + pelvis_acc_x + ",0,9.81," + quat_w + ",0,0,0";
  row += ",0,0,9.81,1,0,0,0";
  row += ",0,0,9.81,1,0,0,0\n";
  return row;
}

void writeText(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file);
  out << text;
}

std::string readText(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  return std::string{std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>()};
}

int runCli(const std::string& args) {
  const std::string cmd = std::string(CKFGAIT_CLI_PATH) + " " + args +
                          " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("imu csv round-trip is bit-exact") {
  testutil::TempDir dir("imu_rt");
  GaitParams params;
  params.duration = 3.0;
  const GroundTruthTrial trial = generateGait(params);
  const std::vector<RawImuRow> rows =
      toRawRows(trial.frames, kDefaultGravity);

  const auto file = dir.path() / "imu.csv";
  saveImuCsv(file, rows);
  const std::vector<RawImuRow> back = loadImuCsv(file);

  REQUIRE(back.size() == rows.size());
  for (size_t k = 0; k < rows.size(); ++k) {
    CHECK(back[k].t == rows[k].t);
    CHECK(back[k].accel_pelvis == rows[k].accel_pelvis);
    CHECK(back[k].accel_lshank == rows[k].accel_lshank);
    CHECK(back[k].accel_rshank == rows[k].accel_rshank);
    CHECK(back[k].q_pelvis.coeffs() == rows[k].q_pelvis.coeffs());
    CHECK(back[k].q_lshank.coeffs() == rows[k].q_lshank.coeffs());
    CHECK(back[k].q_rshank.coeffs() == rows[k].q_rshank.coeffs());
  }
}

TEST_CASE("pose csv round-trip is bit-exact") {
  testutil::TempDir dir("pose_rt");
  GaitParams params;
  params.duration = 2.0;
  const GroundTruthTrial trial = generateGait(params);

  const auto file = dir.path() / "ref.csv";
  savePoseCsv(file, trial.poses);
  const std::vector<PoseSnapshot> back = loadPoseCsv(file);

  REQUIRE(back.size() == trial.poses.size());
  for (size_t k = 0; k < back.size(); ++k) {
    CHECK(back[k].t == trial.poses[k].t);
    CHECK(back[k].mid_pelvis == trial.poses[k].mid_pelvis);
    CHECK(back[k].hip_l == trial.poses[k].hip_l);
    CHECK(back[k].knee_r == trial.poses[k].knee_r);
    CHECK(back[k].ankle_l == trial.poses[k].ankle_l);
    CHECK(back[k].ori.pelvis.coeffs() == trial.poses[k].ori.pelvis.coeffs());
    CHECK(back[k].ori.rthigh.coeffs() == trial.poses[k].ori.rthigh.coeffs());
  }
}

TEST_CASE("estimate csv keeps the pose columns loadable") {
  testutil::TempDir dir("est_rt");
  GaitParams params;
  params.duration = 2.0;
  const GroundTruthTrial trial = generateGait(params);
  std::vector<EstimateDebug> debug(trial.poses.size());

  const auto file = dir.path() / "est.csv";
  saveEstimateCsv(file, trial.poses, debug);
  const std::vector<PoseSnapshot> back = loadPoseCsv(file);
  REQUIRE(back.size() == trial.poses.size());
  CHECK(back[5].mid_pelvis == trial.poses[5].mid_pelvis);
}

TEST_CASE("events csv round-trip") {
  testutil::TempDir dir("ev_rt");
  GaitParams params;
  params.duration = 6.0;
  const GroundTruthTrial trial = generateGait(params);

  const auto file = dir.path() / "events.csv";
  saveEventsCsv(file, trial.events);
  const StepEvents back = loadEventsCsv(file);

  for (Side s : {Side::kLeft, Side::kRight}) {
    REQUIRE(back.side(s).size() == trial.events.side(s).size());
    for (size_t i = 0; i < back.side(s).size(); ++i) {
      CHECK(back.side(s)[i].begin == trial.events.side(s)[i].begin);
      CHECK(back.side(s)[i].end == trial.events.side(s)[i].end);
    }
  }
}

TEST_CASE("imu loader rejects bad data with the offending line") {
  testutil::TempDir dir("imu_bad");
  const auto file = dir.path() / "imu.csv";

  SUBCASE("NaN acceleration") {
    writeText(file, std::string(kSmallImuCsv) + imuLine(0.00) +
                        imuLine(0.01, "nan"));
    try {
      loadImuCsv(file);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
  }

  SUBCASE("quaternion norm far from unit") {
    writeText(file, std::string(kSmallImuCsv) + imuLine(0.00, "0", "1.5"));
    CHECK_THROWS_AS(loadImuCsv(file), DataError);
  }

  SUBCASE("slightly off-unit quaternion is renormalized") {
    writeText(file,
              std::string(kSmallImuCsv) + imuLine(0.00, "0", "1.0005"));
    const auto rows = loadImuCsv(file);
    REQUIRE(rows.size() == 1);
    CHECK(isUnitQuat(rows[0].q_pelvis));
  }

  SUBCASE("non-monotone timestamps") {
    writeText(file, std::string(kSmallImuCsv) + imuLine(0.01) + imuLine(0.01));
    CHECK_THROWS_AS(loadImuCsv(file), DataError);
  }

  SUBCASE("wrong column count") {
    writeText(file, std::string(kSmallImuCsv) + "0.0,1,2\n");
    CHECK_THROWS_AS(loadImuCsv(file), DataError);
  }

  SUBCASE("missing file") {
    CHECK_THROWS_AS(loadImuCsv(dir.path() / "absent.csv"), DataError);
  }
}

TEST_CASE("gravity removal round-trips") {
  GaitParams params;
  params.duration = 3.0;
  const GroundTruthTrial trial = generateGait(params);

  const std::vector<RawImuRow> rows = toRawRows(trial.frames, kDefaultGravity);
  const std::vector<ImuFrame> back = toImuFrames(rows, kDefaultGravity);
  REQUIRE(back.size() == trial.frames.size());
  for (size_t k = 0; k < back.size(); ++k) {
    CHECK((back[k].accel_mp - trial.frames[k].accel_mp).norm() < 1e-12);
    CHECK((back[k].accel_la - trial.frames[k].accel_la).norm() < 1e-12);
    CHECK((back[k].accel_ra - trial.frames[k].accel_ra).norm() < 1e-12);
  }
}

TEST_CASE("run config parsing") {
  SUBCASE("empty object keeps the defaults") {
    const RunConfig cfg = parseRunConfig("{}", "test");
    CHECK(cfg.sample_rate_hz == 100.0);
    CHECK(cfg.p0_scale == 0.5);
    CHECK(cfg.step_detection.window_seconds == 0.25);
    CHECK(cfg.step_detection.variance_threshold == 1.0);
    CHECK(cfg.noise.sckf_threshold == 100.0);
    CHECK(cfg.noise.sigma2_acc(0) == 100.0);
    CHECK(cfg.noise.sigma2_mp(2) == 0.1);
    CHECK(cfg.noise.sigma2_ls(3) == 1e-4);
    CHECK(cfg.body.pelvis_width == 0.23);
    CHECK(cfg.gait.cadence == 1.1);
    CHECK(cfg.event_source == EventSource::kDetect);
    CHECK(cfg.metrics.euler_order == "ZXY");
  }

  SUBCASE("unknown keys are rejected") {
    CHECK_THROWS_AS(parseRunConfig("{\"sckf\": 1}", "test"), DataError);
    CHECK_THROWS_AS(parseRunConfig("{\"gait\": {\"pace\": 2}}", "test"),
                    DataError);
  }

  SUBCASE("malformed json is rejected") {
    CHECK_THROWS_AS(parseRunConfig("{", "test"), DataError);
  }

  SUBCASE("values apply and round-trip") {
    const std::string text =
        "{\"gait\": {\"duration\": 7.5, \"path\": \"zigzag\","
        " \"accel_noise_sd\": 0.4},"
        " \"body\": {\"thigh_left\": 0.43},"
        " \"step_detection\": {\"window_seconds\": 0.3}}";
    const RunConfig cfg = parseRunConfig(text, "test");
    CHECK(cfg.gait.duration == 7.5);
    CHECK(cfg.gait.path == "zigzag");
    CHECK(cfg.gait.accel_noise_sd == 0.4);
    CHECK(cfg.body.thigh_left == 0.43);
    CHECK(cfg.step_detection.window_seconds == 0.3);

    const RunConfig back = parseRunConfig(runConfigText(cfg), "round");
    CHECK(back.gait.duration == cfg.gait.duration);
    CHECK(back.body.thigh_left == cfg.body.thigh_left);
    CHECK(back.step_detection.window_seconds ==
          cfg.step_detection.window_seconds);
    CHECK(back.gait.path == "zigzag");
  }

  SUBCASE("validation rejects impossible settings") {
    RunConfig cfg;
    cfg.sample_rate_hz = -5.0;
    CHECK_THROWS_AS(cfg.validate(), DataError);

    RunConfig cfg2;
    cfg2.gait.path = "spiral";
    CHECK_THROWS_AS(cfg2.gaitParams(), DataError);
  }
}

TEST_CASE("metric report serializes to valid json") {
  MetricReport report;
  report.e_pos = 0.012;
  report.e_ori_biased = 0.3;
  report.knee_sagittal.cc = 0.95;
  report.ttd = TtdDeviation{0.01, 0.02, 0.03};

  const std::string text = metricReportText(report);
  const nlohmann::json j = nlohmann::json::parse(text);
  CHECK(j.at("format_version").get<int>() == kFormatVersion);
  CHECK(j.at("e_pos_m").get<double>() == 0.012);
  CHECK(j.at("e_ori_biased_rad").get<double>() == 0.3);
  CHECK(j.at("joint_angles_rad").at("knee_sagittal").at("cc").get<double>() ==
        0.95);
  CHECK(j.at("ttd_deviation").at("pelvis").get<double>() == 0.01);
}

TEST_CASE("loadTrial reads a directory written by the synth command") {
  testutil::TempDir dir("trial");
  RunConfig cfg;
  cfg.gait.duration = 2.0;
  commandSynth(cfg, dir.path());

  CHECK(std::filesystem::exists(dir.path() / kImuFile));
  CHECK(std::filesystem::exists(dir.path() / kRefFile));
  CHECK(std::filesystem::exists(dir.path() / kEventsFile));

  const TrialFiles files = loadTrial(dir.path());
  CHECK(!files.imu.empty());
  REQUIRE(files.reference.has_value());
  CHECK(files.reference->size() == files.imu.size());
  CHECK(files.events.has_value());

  SUBCASE("frame count mismatch is rejected") {
    savePoseCsv(dir.path() / kRefFile,
                std::span<const PoseSnapshot>(files.reference->data(), 10));
    CHECK_THROWS_AS(loadTrial(dir.path()), DataError);
  }

  SUBCASE("missing imu.csv is rejected") {
    std::filesystem::remove(dir.path() / kImuFile);
    CHECK_THROWS_AS(loadTrial(dir.path()), DataError);
  }
}

TEST_CASE("cli exit codes") {
  testutil::TempDir dir("cli");

  SUBCASE("estimate without --config is a usage error") {
    CHECK(runCli("estimate --input x --output y") == 2);
  }

  SUBCASE("unknown subcommand is a usage error") {
    CHECK(runCli("frobnicate") == 2);
  }

  SUBCASE("missing config file is a data error") {
    CHECK(runCli("synth --config " + (dir.path() / "none.json").string() +
                 " --output " + (dir.path() / "out").string()) == 1);
  }

  SUBCASE("synth then estimate then evaluate succeed") {
    const auto config = dir.path() / "config.json";
    writeText(config, "{\"gait\": {\"duration\": 2.0}}\n");
    const std::string trial = (dir.path() / "trial").string();
    CHECK(runCli("synth --config " + config.string() + " --output " + trial) ==
          0);
    CHECK(runCli("estimate --config " + config.string() + " --input " + trial +
                 " --output " + trial) == 0);
    CHECK(runCli("evaluate --config " + config.string() + " --input " + trial +
                 " --output " + trial) == 0);
    CHECK(std::filesystem::exists(dir.path() / "trial" / kMetricsFile));

    const std::string text = readText(dir.path() / "trial" / kMetricsFile);
    const nlohmann::json j = nlohmann::json::parse(text);
    CHECK(j.contains("e_pos_m"));
    CHECK(j.contains("ttd_deviation"));
  }
}
