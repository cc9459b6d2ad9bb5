#pragma once

// Discrete-time simulation of the locked interferometer: environment, plant,
// detectors, controller and actuator on one clock, logged through the same
// boxcar / ADC / block-average chain as the laboratory acquisition.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "phaselock/config.hpp"
#include "phaselock/estimator.hpp"

namespace phaselock {

std::string software_version();

/// Equal-length logged columns at one sample rate.
struct RunSeries {
  double sample_rate_hz = 0.0;
  std::vector<double> t_s;
  std::vector<double> phi_sig_deg;  // true signal phase
  std::vector<double> phi_ref_deg;  // true reference phase
  std::vector<double> d1_w;         // reference output 1
  std::vector<double> d2_w;         // reference output 2
  std::vector<double> d3_w;         // signal output 1
  std::vector<double> d4_w;         // signal output 2
  std::vector<double> v_act_v;
  std::vector<double> phi_comp_deg;  // 360 g V / lambda_ref

  std::size_t size() const { return t_s.size(); }
};

/// What the controller believes about the reference channel.
struct ControllerSetup {
  double v1 = 1.0;
  double v2 = 1.0;
  double setpoint_fraction = 0.5;
  double constant_setpoint_w = 0.0;  // output-1 level for constant mode
  std::pair<double, double> offsets_w{0.0, 0.0};
  std::pair<double, double> efficiencies{1.0, 1.0};
};

struct ScanCalibration {
  CalibrationResult reference;
  CalibrationResult signal;
};

struct SaturationLog {
  std::uint64_t pid_ticks = 0;
  std::uint64_t stretcher_ticks = 0;
  std::uint64_t events = 0;  // entries into saturation
  double first_event_s = -1.0;
};

struct StaircaseStep {
  double offset_deg = 0.0;
  double expected_ratio = 0.0;  // (1 + V cos phi) / 2 of output 1
  double ratio = 0.0;           // measured output-1 share
  double standard_error = 0.0;
  int bins = 0;
  double counts = 0.0;          // signal counts, background removed (photon counting only)
};

struct RunRecord {
  ScenarioConfig config;
  std::string config_hash;
  std::string version;

  RunSeries fast;  // log_rate
  RunSeries slow;  // log_rate / post_average_factor, written to CSV
  std::vector<double> error_w;          // mean controller error per fast sample
  std::vector<double> phi_sig_est_deg;  // signal phase reconstructed from slow d3/d4

  std::optional<ScanCalibration> calibration;
  ControllerSetup controller;
  SaturationLog saturation;

  // fringe-scan runs: fast-sample range [begin, end) of the fitted ramp
  std::size_t scan_begin = 0;
  std::size_t scan_end = 0;

  std::vector<StaircaseStep> staircase;
};

/// Controller parameters derived analytically from the undetuned plant.
ControllerSetup nominal_controller(const ScenarioConfig& cfg);

/// Controller parameters from a pre-lock scan calibration.
ControllerSetup calibrated_controller(const ScenarioConfig& cfg, const ScanCalibration& cal);

/// Dispatches on cfg.mode. Validates first (ConfigError lists every issue).
RunRecord run_scenario(const ScenarioConfig& cfg);

/// Open-loop actuator ramp covering cfg.scan.fringes reference fringes.
RunRecord scan_fringe(const ScenarioConfig& cfg);

/// Fits both channels of a scan record.
ScanCalibration calibrate(const RunRecord& scan);

/// Reference locked, signal phase offset stepped through the staircase list.
RunRecord run_staircase(const ScenarioConfig& cfg);

/// Fitted least-squares slope of y against t.
double fitted_slope(const std::vector<double>& t, const std::vector<double>& y);

void write_csv(const RunSeries& series, std::ostream& out);
/// Sidecar metadata: seed, config, version, hash, calibration, saturation.
std::string metadata_json(const RunRecord& record);

}  // namespace phaselock
