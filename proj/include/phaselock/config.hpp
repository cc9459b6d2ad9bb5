#pragma once

// Scenario configuration: the static plant, the stochastic world, the
// detection chain and the controller, plus what to run.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "phaselock/control.hpp"
#include "phaselock/mzi_model.hpp"
#include "phaselock/noise.hpp"

namespace phaselock {

inline constexpr int kSchemaVersion = 1;

enum class RunMode { kOpenLoop, kClosedLoopAdaptive, kClosedLoopConstant, kFringeScan, kStaircase };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& name);

/// kFringe uses the visibility parametrization of each channel. kCoupler
/// derives both outputs from the coupler transmittances, which is what makes
/// an arm loss (mu_arm) visible to the loop.
enum class PlantModel { kFringe, kCoupler };

std::string to_string(PlantModel model);
PlantModel plant_model_from_string(const std::string& name);

/// Multiplies the global intensity by `scale` from time `t_s` onward.
struct IntensityEvent {
  double t_s = 0.0;
  double scale = 1.0;
};

struct AdcConfig {
  bool enabled = true;
  int bits = 18;
  double full_scale_v = 10.0;
  /// Divider between the PID output and its ADC monitor channel.
  double actuator_monitor_gain = 0.25;
};

/// Offset and efficiency trims of the analog controller's input stage.
struct ControllerTrim {
  bool from_detectors = true;
  std::pair<double, double> offsets_w{0.0, 0.0};
  std::pair<double, double> efficiencies{1.0, 1.0};
};

struct ScanConfig {
  double fringes = 40.0;          // reference fringes covered by the ramp
  double fringe_rate_hz = 1.0;    // reference fringes per second
  double settle_s = 2.0;          // hold before and after the ramp
  double transient_s = 1.0;       // ramp start excluded from the fit
  int phase_poly_degree = 2;      // per segment
  int envelope_poly_degree = 2;
  double fringes_per_segment = 1.0;
};

struct StaircaseConfig {
  std::vector<double> offsets_deg{0.0, 60.0, 90.0, 120.0, 180.0};
  double settle_s = 1.0;
  double dwell_s = 10.0;
  double bin_s = 1.0;
};

struct ScenarioConfig {
  int schema_version = kSchemaVersion;
  RunMode mode = RunMode::kClosedLoopAdaptive;
  double duration_s = 3600.0;
  double control_dt_s = 1e-4;
  double log_rate_hz = 16.0;
  int post_average_factor = 16;
  std::uint64_t seed = 1;
  double target_phase_deg = 90.0;

  PlantModel plant = PlantModel::kFringe;
  WavelengthChannel signal;
  WavelengthChannel reference;
  LsdParams signal_lsd;
  LsdParams reference_lsd;

  DriftConfig drift;
  DetectorModel ref_out1;
  DetectorModel ref_out2;
  DetectorModel sig_out1;
  DetectorModel sig_out2;
  AdcConfig adc;

  PidGains pid;
  StretcherModel stretcher;
  ControllerTrim trim;

  /// Sorted or not; every event with t_s <= t multiplies the intensity.
  std::vector<IntensityEvent> intensity_events;
  ScanConfig scan;
  StaircaseConfig staircase;
  /// Run a fringe scan of the undetuned setup first and take the
  /// controller's visibilities, trims and setpoint from it. The LSD
  /// parameters describe detuning that happens after this calibration.
  bool calibrate_before_lock = true;
};

/// Laboratory defaults: 810 nm / 1 pW signal, 840 nm / 1.5 nW reference,
/// detector, ADC and stretcher parameters of the described setup, desk-tuned
/// loop gains, closed-loop adaptive lock at quadrature for one hour.
ScenarioConfig default_config();

/// Noise-free, drift-free variant of `cfg` (ADC off as well).
ScenarioConfig noiseless(ScenarioConfig cfg);

/// Small-signal loop gain d(error)/d(voltage) in W/V at the target phase.
double plant_gain_w_per_v(const ScenarioConfig& cfg);

/// Integral-dominant PI gains giving unity loop gain near `crossover_hz`.
PidGains tuned_gains(const ScenarioConfig& cfg, double crossover_hz = 100.0, double proportional_fraction = 0.3);

/// Every violated invariant, empty when the config is usable.
std::vector<std::string> validation_issues(const ScenarioConfig& cfg);
/// Throws ConfigError listing every issue.
void validate(const ScenarioConfig& cfg);

std::uint64_t ticks_per_log_sample(const ScenarioConfig& cfg);

}  // namespace phaselock
