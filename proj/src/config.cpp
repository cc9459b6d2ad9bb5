#include "phaselock/config.hpp"

#include <cmath>
#include <stdexcept>

#include "phaselock/errors.hpp"

namespace phaselock {

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::kOpenLoop: return "open-loop";
    case RunMode::kClosedLoopAdaptive: return "closed-loop-adaptive";
    case RunMode::kClosedLoopConstant: return "closed-loop-constant";
    case RunMode::kFringeScan: return "fringe-scan";
    case RunMode::kStaircase: return "staircase";
  }
  return "unknown";
}

RunMode run_mode_from_string(const std::string& name) {
  for (RunMode m : {RunMode::kOpenLoop, RunMode::kClosedLoopAdaptive, RunMode::kClosedLoopConstant,
                    RunMode::kFringeScan, RunMode::kStaircase}) {
    if (to_string(m) == name) return m;
  }
  throw std::invalid_argument("unknown run mode '" + name + "'");
}

std::string to_string(PlantModel model) { return model == PlantModel::kCoupler ? "coupler" : "fringe"; }

PlantModel plant_model_from_string(const std::string& name) {
  if (name == "fringe") return PlantModel::kFringe;
  if (name == "coupler") return PlantModel::kCoupler;
  throw std::invalid_argument("unknown plant model '" + name + "'");
}

namespace {

DetectorModel analog_detector(double nep, double bandwidth_hz, double volts_per_watt, double wavelength_m) {
  DetectorModel d;
  d.mode = DetectorMode::kAnalog;
  d.nep = nep;
  d.bandwidth_hz = bandwidth_hz;
  d.adc_volts_per_watt = volts_per_watt;
  d.photon_energy_j = photon_energy(wavelength_m);
  return d;
}

}  // namespace

ScenarioConfig default_config() {
  ScenarioConfig cfg;

  cfg.signal.wavelength_m = 810e-9;
  cfg.signal.input_power_w = 1e-12;
  cfg.signal.visibility_out1 = 0.996;
  cfg.signal.visibility_out2 = 0.996;
  cfg.signal.coupler_t1 = 0.51;
  cfg.signal.coupler_t2 = 0.51;
  cfg.signal.phase_offset_rad = deg_to_rad(90.0);

  cfg.reference.wavelength_m = 840e-9;
  cfg.reference.input_power_w = 1.5e-9;
  cfg.reference.visibility_out1 = 0.986;
  cfg.reference.visibility_out2 = 0.986;
  cfg.reference.coupler_t1 = 0.35;
  cfg.reference.coupler_t2 = 0.35;
  cfg.reference.phase_offset_rad = deg_to_rad(90.0);

  // 4000 degrees of signal phase per 15 h, plus a slow random component.
  constexpr double kDriftSpanS = 15.0 * 3600.0;
  cfg.drift.opd.linear_rate = 4000.0 / 360.0 * 810e-9 / kDriftSpanS;
  cfg.drift.opd.ou_sigma = 20.0 / 360.0 * 810e-9;
  cfg.drift.opd.ou_tau = 600.0;
  cfg.drift.intensity.ou_sigma = 0.02;
  cfg.drift.intensity.ou_tau = 1000.0;
  cfg.drift.wavelength_signal.ou_tau = 1000.0;
  cfg.drift.wavelength_reference.ou_tau = 1000.0;

  cfg.ref_out1 = analog_detector(9e-15, 2e3, 5e9, cfg.reference.wavelength_m);
  cfg.ref_out2 = cfg.ref_out1;
  cfg.sig_out1 = analog_detector(1.4e-15, 30.0, 5e12, cfg.signal.wavelength_m);
  cfg.sig_out1.dark_rate = 50.0;
  cfg.sig_out1.background_rate = 30.0;
  cfg.sig_out2 = cfg.sig_out1;

  cfg.stretcher = StretcherModel{};
  cfg.pid = tuned_gains(cfg);
  // Output range maps onto the +-110 um of stretcher travel in use.
  cfg.pid.output_max = cfg.stretcher.path_range / cfg.stretcher.gain();
  cfg.pid.output_min = -cfg.pid.output_max;
  return cfg;
}

ScenarioConfig noiseless(ScenarioConfig cfg) {
  cfg.drift = DriftConfig{};
  for (DetectorModel* d : {&cfg.ref_out1, &cfg.ref_out2, &cfg.sig_out1, &cfg.sig_out2}) {
    d->nep = 0.0;
    d->dark_rate = 0.0;
    d->background_rate = 0.0;
  }
  cfg.adc.enabled = false;
  return cfg;
}

double plant_gain_w_per_v(const ScenarioConfig& cfg) {
  // error slope per radian at the target, times radians per volt of stretcher drive
  const double target = deg_to_rad(cfg.target_phase_deg);
  const double p = cfg.reference.input_power_w;
  const double s = std::sin(target);
  const double v1 = cfg.reference.visibility_out1;
  const double v2 = cfg.reference.visibility_out2;
  double slope = 0.0;
  if (cfg.mode == RunMode::kClosedLoopConstant) {
    slope = 0.5 * p * v1 * s;
  } else {
    const double f = setpoint_fraction(target, v1, v2);
    slope = 0.5 * p * s * ((1.0 - f) * v1 + f * (1.0 - cfg.reference_lsd.mu_out) * v2);
  }
  const double rad_per_volt = 2.0 * kPi * cfg.stretcher.gain() / cfg.reference.wavelength_m;
  return slope * rad_per_volt;
}

PidGains tuned_gains(const ScenarioConfig& cfg, double crossover_hz, double proportional_fraction) {
  const double k = plant_gain_w_per_v(cfg);
  if (!(k > 0.0)) throw std::invalid_argument("tuned_gains: plant gain vanishes at the target phase");
  PidGains g = cfg.pid;
  // e rises with stretcher path, so the loop needs negative gains.
  g.ki = -2.0 * kPi * crossover_hz / k;
  g.kp = -proportional_fraction / k;
  g.kd = 0.0;
  return g;
}

std::uint64_t ticks_per_log_sample(const ScenarioConfig& cfg) {
  return static_cast<std::uint64_t>(std::llround(1.0 / (cfg.log_rate_hz * cfg.control_dt_s)));
}

std::vector<std::string> validation_issues(const ScenarioConfig& cfg) {
  std::vector<std::string> issues;
  auto check = [&issues](bool ok, const std::string& what) {
    if (!ok) issues.push_back(what);
  };
  auto guarded = [&issues](const std::string& where, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      issues.push_back(where + ": " + e.what());
    }
  };

  check(cfg.schema_version == kSchemaVersion, "schema_version must be " + std::to_string(kSchemaVersion));
  check(cfg.duration_s > 0.0, "duration_s must be positive");
  check(cfg.control_dt_s > 0.0, "control_dt_s must be positive");
  check(cfg.log_rate_hz > 0.0, "log_rate_hz must be positive");
  check(cfg.post_average_factor >= 1, "post_average_factor must be at least 1");
  if (cfg.control_dt_s > 0.0 && cfg.log_rate_hz > 0.0) {
    const double ratio = 1.0 / (cfg.log_rate_hz * cfg.control_dt_s);
    check(cfg.log_rate_hz * cfg.control_dt_s <= 1.0, "log_rate_hz * control_dt_s must not exceed 1");
    check(std::abs(ratio - std::round(ratio)) < 1e-6,
          "1 / (log_rate_hz * control_dt_s) must be an integer number of control ticks");
  }
  guarded("signal", [&] { validate(cfg.signal); });
  guarded("reference", [&] { validate(cfg.reference); });
  guarded("signal_lsd", [&] { validate(cfg.signal_lsd); });
  guarded("reference_lsd", [&] { validate(cfg.reference_lsd); });
  guarded("drift", [&] { validate(cfg.drift); });
  guarded("detectors.ref_out1", [&] { validate(cfg.ref_out1); });
  guarded("detectors.ref_out2", [&] { validate(cfg.ref_out2); });
  guarded("detectors.sig_out1", [&] { validate(cfg.sig_out1); });
  guarded("detectors.sig_out2", [&] { validate(cfg.sig_out2); });
  check(cfg.ref_out1.mode == DetectorMode::kAnalog && cfg.ref_out2.mode == DetectorMode::kAnalog,
        "reference detectors must be analog");
  check(cfg.sig_out1.mode == cfg.sig_out2.mode, "signal detectors must share one mode");
  for (const DetectorModel* d : {&cfg.ref_out1, &cfg.ref_out2, &cfg.sig_out1, &cfg.sig_out2}) {
    if (d->mode == DetectorMode::kAnalog && cfg.control_dt_s > 0.0) {
      check(d->bandwidth_hz * cfg.control_dt_s <= 0.2,
            "control_dt_s must resolve every analog detector bandwidth (bandwidth * dt <= 0.2)");
    }
    check(d->adc_volts_per_watt > 0.0, "adc_volts_per_watt must be positive");
  }
  check(cfg.adc.bits >= 1 && cfg.adc.bits <= 32, "adc.bits must lie in [1, 32]");
  check(cfg.adc.full_scale_v > 0.0, "adc.full_scale_v must be positive");
  check(cfg.adc.actuator_monitor_gain > 0.0, "adc.actuator_monitor_gain must be positive");
  guarded("pid", [&] { validate(cfg.pid); });
  guarded("stretcher", [&] { validate(cfg.stretcher); });
  check(cfg.trim.efficiencies.first > 0.0 && cfg.trim.efficiencies.second > 0.0,
        "trim.efficiencies must be positive");
  for (const auto& ev : cfg.intensity_events) {
    check(ev.t_s >= 0.0 && ev.scale >= 0.0, "intensity_events need t_s >= 0 and scale >= 0");
  }
  check(cfg.scan.fringes > 0.0 && cfg.scan.fringe_rate_hz > 0.0, "scan.fringes and scan.fringe_rate_hz must be positive");
  check(cfg.scan.settle_s >= 0.0 && cfg.scan.transient_s >= 0.0, "scan.settle_s and scan.transient_s must be non-negative");
  check(cfg.scan.fringes_per_segment > 0.0, "scan.fringes_per_segment must be positive");
  check(cfg.scan.envelope_poly_degree >= 0 && cfg.scan.envelope_poly_degree <= 8,
        "scan.envelope_poly_degree must lie in [0, 8]");
  check(cfg.scan.phase_poly_degree >= 1 && cfg.scan.phase_poly_degree <= 8, "scan.phase_poly_degree must lie in [1, 8]");
  if (cfg.mode == RunMode::kFringeScan) {
    const double half_volts = 0.5 * cfg.scan.fringes * cfg.reference.wavelength_m / cfg.stretcher.gain();
    check(half_volts <= cfg.pid.output_max && -half_volts >= cfg.pid.output_min &&
              half_volts * cfg.stretcher.gain() <= cfg.stretcher.path_range,
          "scan ramp exceeds the actuator range");
  }
  if (cfg.mode == RunMode::kStaircase) {
    check(!cfg.staircase.offsets_deg.empty(), "staircase.offsets_deg must not be empty");
    check(cfg.staircase.dwell_s > 0.0 && cfg.staircase.bin_s > 0.0 && cfg.staircase.settle_s >= 0.0,
          "staircase dwell_s and bin_s must be positive, settle_s non-negative");
    if (cfg.staircase.bin_s > 0.0 && cfg.log_rate_hz > 0.0) {
      const double per_bin = cfg.staircase.bin_s * cfg.log_rate_hz;
      check(std::abs(per_bin - std::round(per_bin)) < 1e-6 && per_bin >= 1.0,
            "staircase.bin_s must be a whole number of log samples");
    }
  }
  if (cfg.mode == RunMode::kClosedLoopAdaptive || cfg.mode == RunMode::kClosedLoopConstant ||
      cfg.mode == RunMode::kStaircase) {
    check(cfg.target_phase_deg > 0.0 && cfg.target_phase_deg < 180.0,
          "target_phase_deg must lie strictly between 0 and 180");
  }
  return issues;
}

void validate(const ScenarioConfig& cfg) {
  auto issues = validation_issues(cfg);
  if (!issues.empty()) throw ConfigError(std::move(issues));
}

}  // namespace phaselock
