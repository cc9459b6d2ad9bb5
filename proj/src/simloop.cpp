#include "phaselock/simloop.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "phaselock/config_json.hpp"
#include "phaselock/errors.hpp"

#ifndef PHASELOCK_VERSION
#define PHASELOCK_VERSION "0.0.0"
#endif

namespace phaselock {

std::string software_version() { return PHASELOCK_VERSION; }

namespace {

constexpr double kRadToDeg = 180.0 / kPi;

/// Output intensities for a total phase (offset already included).
class Plant {
 public:
  Plant(PlantModel model, WavelengthChannel ch, LsdParams lsd) : model_(model), ch_(ch), lsd_(lsd) {
    ch_.phase_offset_rad = 0.0;
  }

  OutputIntensities operator()(double phase_rad, double scale) const {
    if (model_ == PlantModel::kFringe) return fringe_intensities(phase_rad, ch_, lsd_, scale);
    const OutputIntensities o = coupler_model(phase_rad + kPi, ch_.coupler_t1, ch_.coupler_t2, lsd_.mu_arm);
    const double p = ch_.input_power_w * scale;
    return {p * o.i1, p * (1.0 - lsd_.mu_out) * o.i2};
  }

 private:
  PlantModel model_;
  WavelengthChannel ch_;
  LsdParams lsd_;
};

/// Mean levels of the two outputs (fraction of input power) and visibilities
/// of an undetuned channel.
struct NominalFringe {
  double mean1 = 0.5;
  double mean2 = 0.5;
  double v1 = 1.0;
  double v2 = 1.0;
};

NominalFringe nominal_fringe(PlantModel model, const WavelengthChannel& ch) {
  if (model == PlantModel::kFringe) return {0.5, 0.5, ch.visibility_out1, ch.visibility_out2};
  const double t1 = ch.coupler_t1;
  const double t2 = ch.coupler_t2;
  const double m1 = t1 * t2 + (1.0 - t1) * (1.0 - t2);
  const double m2 = t1 * (1.0 - t2) + (1.0 - t1) * t2;
  const double s = 2.0 * std::sqrt(t1 * t2 * (1.0 - t1) * (1.0 - t2));
  return {m1, m2, s / m1, s / m2};
}

double counting_offset_w(const DetectorModel& d) {
  if (d.mode != DetectorMode::kPhotonCounting) return d.offset_w;
  return (d.dark_rate + d.background_rate) * d.photon_energy_j / d.efficiency;
}

/// Per-tick inputs the schedule supplies.
struct TickControl {
  bool engaged = true;
  bool commanded = false;
  double command_v = 0.0;
  double signal_offset_rad = 0.0;
};

/// Unquantized fast-rate log plus photon counts.
struct RawLog {
  RunSeries fast;
  std::vector<double> error_w;
  std::vector<double> counts3;
  std::vector<double> counts4;
  SaturationLog saturation;
};

void reserve_series(RunSeries& s, std::size_t n) {
  for (auto* v : {&s.t_s, &s.phi_sig_deg, &s.phi_ref_deg, &s.d1_w, &s.d2_w, &s.d3_w, &s.d4_w, &s.v_act_v,
                  &s.phi_comp_deg}) {
    v->reserve(n);
  }
}

/// Signal-channel detector: analog chain or photon counter integrated per log window.
class SignalDetector {
 public:
  SignalDetector(const DetectorModel& model, double dt, std::uint64_t seed, StreamId id)
      : analog_(model.mode == DetectorMode::kAnalog),
        model_(model),
        dt_(dt),
        detector_(model.mode == DetectorMode::kAnalog ? model : analog_stand_in(model), dt, seed, id),
        rng_(seed, static_cast<std::uint64_t>(id)) {
    if (!analog_) {
      rate_per_watt_ = model.efficiency / model.photon_energy_j;
      background_ = model.dark_rate + model.background_rate;
    }
  }

  /// Analog reading, or 0 while accumulating expected counts.
  double step(double power_w) {
    if (analog_) return detector_.step(power_w);
    expected_ += (rate_per_watt_ * power_w + background_) * dt_;
    return 0.0;
  }

  bool analog() const { return analog_; }

  /// Ends a log window of `ticks` ticks: returns counts and the equivalent power.
  std::pair<double, double> close_window(std::uint64_t ticks) {
    const auto n = static_cast<double>(rng_.poisson(expected_));
    expected_ = 0.0;
    const double window_s = static_cast<double>(ticks) * dt_;
    return {n, n * model_.photon_energy_j / (model_.efficiency * window_s)};
  }

 private:
  static DetectorModel analog_stand_in(DetectorModel m) {
    m.mode = DetectorMode::kAnalog;
    m.nep = 0.0;
    if (!(m.bandwidth_hz > 0.0)) m.bandwidth_hz = 1.0;
    return m;
  }

  bool analog_;
  DetectorModel model_;
  double dt_;
  AnalogDetector detector_;
  RandomStream rng_;
  double rate_per_watt_ = 0.0;
  double background_ = 0.0;
  double expected_ = 0.0;
};

/// Runs `windows` log windows. `schedule(window, t)` gives the control
/// inputs of the tick starting at time t.
template <typename Schedule>
RawLog simulate(const ScenarioConfig& cfg, const ControllerSetup& ctl, std::uint64_t windows, Schedule&& schedule) {
  const double dt = cfg.control_dt_s;
  const std::uint64_t per_window = ticks_per_log_sample(cfg);
  const double window_s = static_cast<double>(per_window) * dt;

  EnvironmentState env;
  DriftStreams streams(cfg.seed);
  const DriftIntegrator drift(cfg.drift, dt);

  std::vector<IntensityEvent> events = cfg.intensity_events;
  std::stable_sort(events.begin(), events.end(),
                   [](const IntensityEvent& a, const IntensityEvent& b) { return a.t_s < b.t_s; });
  std::size_t next_event = 0;
  double event_scale = 1.0;

  const Plant ref_plant(cfg.plant, cfg.reference, cfg.reference_lsd);
  const Plant sig_plant(cfg.plant, cfg.signal, cfg.signal_lsd);
  const double lr = cfg.reference.wavelength_m;
  const double ls = cfg.signal.wavelength_m;
  const double k_r = 2.0 * kPi / lr;
  const double k_s = 2.0 * kPi / ls;

  AnalogDetector det1(cfg.ref_out1, dt, cfg.seed, StreamId::kDetectorRef1);
  AnalogDetector det2(cfg.ref_out2, dt, cfg.seed, StreamId::kDetectorRef2);
  SignalDetector det3(cfg.sig_out1, dt, cfg.seed, StreamId::kDetectorSig1);
  SignalDetector det4(cfg.sig_out2, dt, cfg.seed, StreamId::kDetectorSig2);

  StretcherModel stretcher = cfg.stretcher;
  ControllerState pid;
  const bool constant = cfg.mode == RunMode::kClosedLoopConstant;

  RawLog log;
  log.fast.sample_rate_hz = cfg.log_rate_hz;
  reserve_series(log.fast, windows);
  log.error_w.reserve(windows);
  if (!det3.analog()) {
    log.counts3.reserve(windows);
    log.counts4.reserve(windows);
  }

  bool was_saturated = false;
  std::uint64_t tick = 0;
  const double inv_n = 1.0 / static_cast<double>(per_window);

  for (std::uint64_t w = 0; w < windows; ++w) {
    double s_phs = 0, s_phr = 0, s_d1 = 0, s_d2 = 0, s_d3 = 0, s_d4 = 0, s_v = 0, s_e = 0;

    for (std::uint64_t k = 0; k < per_window; ++k, ++tick) {
      const double t = static_cast<double>(tick) * dt;
      const TickControl ctrl = schedule(w, t);
      pid.engaged = ctrl.engaged;
      drift.advance(env, streams);
      while (next_event < events.size() && events[next_event].t_s <= t) {
        event_scale *= events[next_event].scale;
        ++next_event;
      }
      const double scale = env.intensity_scale() * event_scale;

      const double net = env.opd_m() - stretcher.filtered_path;
      const double dls = env.wavelength_offset_s.value();
      const double dlr = env.wavelength_offset_r.value();
      const double phr = k_r * net + cfg.reference.phase_offset_rad +
                         (dlr != 0.0 ? k_r * (cfg.reference.static_opd_m + net) * dlr / lr : 0.0);
      const double phs = k_s * net + ctrl.signal_offset_rad +
                         (dls != 0.0 ? k_s * (cfg.signal.static_opd_m + net) * dls / ls : 0.0);

      const OutputIntensities ir = ref_plant(phr, scale);
      const OutputIntensities is = sig_plant(phs, scale);

      const double d1 = det1.step(ir.i1);
      const double d2 = det2.step(ir.i2);
      const double d3 = det3.step(is.i1);
      const double d4 = det4.step(is.i2);

      const double e = constant
                           ? error_signal_constant((d1 - ctl.offsets_w.first) / ctl.efficiencies.first,
                                                   ctl.constant_setpoint_w)
                           : error_signal_adaptive(d1, d2, ctl.setpoint_fraction, ctl.offsets_w, ctl.efficiencies);

      double v = 0.0;
      if (ctrl.commanded) {
        v = std::clamp(ctrl.command_v, cfg.pid.output_min, cfg.pid.output_max);
        pid.saturated = false;
      } else {
        v = pid_step(e, pid, cfg.pid, dt);
      }
      stretcher_step(v, stretcher, dt);

      const bool saturated = pid.saturated || stretcher.clamped;
      if (pid.saturated) ++log.saturation.pid_ticks;
      if (stretcher.clamped) ++log.saturation.stretcher_ticks;
      if (saturated && !was_saturated) {
        ++log.saturation.events;
        if (log.saturation.first_event_s < 0.0) log.saturation.first_event_s = t;
      }
      was_saturated = saturated;

      s_phs += phs;
      s_phr += phr;
      s_d1 += d1;
      s_d2 += d2;
      s_d3 += d3;
      s_d4 += d4;
      s_v += v;
      s_e += e;
    }

    RunSeries& f = log.fast;
    f.t_s.push_back((static_cast<double>(w) + 0.5) * window_s);
    f.phi_sig_deg.push_back(s_phs * inv_n * kRadToDeg);
    f.phi_ref_deg.push_back(s_phr * inv_n * kRadToDeg);
    f.d1_w.push_back(s_d1 * inv_n);
    f.d2_w.push_back(s_d2 * inv_n);
    if (det3.analog()) {
      f.d3_w.push_back(s_d3 * inv_n);
      f.d4_w.push_back(s_d4 * inv_n);
    } else {
      const auto [n3, p3] = det3.close_window(per_window);
      const auto [n4, p4] = det4.close_window(per_window);
      log.counts3.push_back(n3);
      log.counts4.push_back(n4);
      f.d3_w.push_back(p3);
      f.d4_w.push_back(p4);
    }
    f.v_act_v.push_back(s_v * inv_n);
    log.error_w.push_back(s_e * inv_n);
  }
  return log;
}

double quantize_watts(double w, double volts_per_watt, const AdcConfig& adc) {
  return adc_quantize(w * volts_per_watt, adc.bits, adc.full_scale_v) / volts_per_watt;
}

void apply_adc(RunSeries& s, const ScenarioConfig& cfg) {
  if (!cfg.adc.enabled) return;
  auto channel = [&](std::vector<double>& v, const DetectorModel& d) {
    if (d.mode != DetectorMode::kAnalog) return;
    for (double& x : v) x = quantize_watts(x, d.adc_volts_per_watt, cfg.adc);
  };
  channel(s.d1_w, cfg.ref_out1);
  channel(s.d2_w, cfg.ref_out2);
  channel(s.d3_w, cfg.sig_out1);
  channel(s.d4_w, cfg.sig_out2);
  const double g = cfg.adc.actuator_monitor_gain;
  for (double& x : s.v_act_v) x = adc_quantize(x * g, cfg.adc.bits, cfg.adc.full_scale_v) / g;
}

void fill_compensated(RunSeries& s, const ScenarioConfig& cfg) {
  const double k = 360.0 * cfg.stretcher.gain() / cfg.reference.wavelength_m;
  s.phi_comp_deg.resize(s.v_act_v.size());
  for (std::size_t i = 0; i < s.v_act_v.size(); ++i) s.phi_comp_deg[i] = k * s.v_act_v[i];
}

std::vector<double> block_mean(const std::vector<double>& v, std::size_t factor) {
  std::vector<double> out(v.size() / factor);
  for (std::size_t j = 0; j < out.size(); ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < factor; ++k) acc += v[j * factor + k];
    out[j] = acc / static_cast<double>(factor);
  }
  return out;
}

RunSeries post_average(const RunSeries& fast, std::size_t factor, const ScenarioConfig& cfg) {
  RunSeries s;
  s.sample_rate_hz = fast.sample_rate_hz / static_cast<double>(factor);
  s.t_s = block_mean(fast.t_s, factor);
  s.phi_sig_deg = block_mean(fast.phi_sig_deg, factor);
  s.phi_ref_deg = block_mean(fast.phi_ref_deg, factor);
  s.d1_w = block_mean(fast.d1_w, factor);
  s.d2_w = block_mean(fast.d2_w, factor);
  s.d3_w = block_mean(fast.d3_w, factor);
  s.d4_w = block_mean(fast.d4_w, factor);
  s.v_act_v = block_mean(fast.v_act_v, factor);
  fill_compensated(s, cfg);
  return s;
}

std::uint64_t window_count(double seconds, double rate_hz) {
  return static_cast<std::uint64_t>(std::floor(seconds * rate_hz + 1e-9));
}

/// Shared tail of every run: quantize, compensated phase, post-average.
RunRecord finish(const ScenarioConfig& cfg, RawLog&& log) {
  RunRecord rec;
  rec.config = cfg;
  rec.config_hash = config_hash(cfg);
  rec.version = software_version();
  rec.fast = std::move(log.fast);
  rec.error_w = std::move(log.error_w);
  rec.saturation = log.saturation;
  apply_adc(rec.fast, cfg);
  fill_compensated(rec.fast, cfg);
  rec.slow = post_average(rec.fast, static_cast<std::size_t>(cfg.post_average_factor), cfg);
  return rec;
}

struct SignalEstimator {
  double v1 = 1.0;
  double v2 = 1.0;
  double mu = 0.0;
  std::pair<double, double> offsets{0.0, 0.0};
};

SignalEstimator signal_estimator(const ScenarioConfig& cfg, const std::optional<ScanCalibration>& cal) {
  SignalEstimator est;
  if (cal) {
    est.v1 = cal->signal.v1;
    est.v2 = cal->signal.v2;
    est.offsets = cal->signal.detector_offsets;
    est.mu = cal->signal.efficiency_ratio > 0.0 ? 1.0 - 1.0 / cal->signal.efficiency_ratio : 0.0;
    return est;
  }
  const NominalFringe n = nominal_fringe(cfg.plant, cfg.signal);
  est.v1 = n.v1;
  est.v2 = n.v2;
  est.offsets = {counting_offset_w(cfg.sig_out1), counting_offset_w(cfg.sig_out2)};
  const double ratio = (cfg.sig_out2.efficiency * n.mean2) / (cfg.sig_out1.efficiency * n.mean1);
  est.mu = 1.0 - 1.0 / ratio;
  return est;
}

void reconstruct_signal(RunRecord& rec) {
  const SignalEstimator est = signal_estimator(rec.config, rec.calibration);
  const double v1 = std::clamp(est.v1, 1e-9, 1.0);
  const double v2 = std::clamp(est.v2, 1e-9, 1.0);
  rec.phi_sig_est_deg.resize(rec.slow.size());
  for (std::size_t i = 0; i < rec.slow.size(); ++i) {
    const double i1 = rec.slow.d3_w[i] - est.offsets.first;
    const double i2 = rec.slow.d4_w[i] - est.offsets.second;
    try {
      rec.phi_sig_est_deg[i] = estimate_phase_eq1(i1, i2, v1, v2, est.mu) * kRadToDeg;
    } catch (const std::domain_error&) {
      rec.phi_sig_est_deg[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
}

/// |H| of the log chain at a per-log-sample phase advance: the detector's
/// first-order filter at the control rate followed by the boxcar.
std::function<double(double)> chain_response(const DetectorModel& det, const ScenarioConfig& cfg) {
  const double n = static_cast<double>(ticks_per_log_sample(cfg));
  const bool analog = det.mode == DetectorMode::kAnalog;
  const double alpha = analog ? std::exp(-2.0 * kPi * det.bandwidth_hz * cfg.control_dt_s) : 0.0;
  return [n, alpha](double theta_log) {
    const double th = theta_log / n;
    const double half = 0.5 * th;
    const double boxcar = std::abs(std::sin(half)) < 1e-300 ? 1.0 : std::sin(n * half) / (n * std::sin(half));
    const double lpf = (1.0 - alpha) / std::sqrt(1.0 - 2.0 * alpha * std::cos(th) + alpha * alpha);
    return boxcar * lpf;
  };
}

ScenarioConfig undetuned(ScenarioConfig cfg) {
  cfg.signal_lsd = LsdParams{};
  cfg.reference_lsd = LsdParams{};
  return cfg;
}

std::optional<ScanCalibration> pre_lock_calibration(const ScenarioConfig& cfg) {
  if (!cfg.calibrate_before_lock) return std::nullopt;
  ScenarioConfig scan = undetuned(cfg);
  scan.mode = RunMode::kFringeScan;
  scan.intensity_events.clear();
  scan.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(StreamId::kCalibrationScan));
  return calibrate(scan_fringe(scan));
}

}  // namespace

ControllerSetup nominal_controller(const ScenarioConfig& cfg) {
  ControllerSetup c;
  const NominalFringe n = nominal_fringe(cfg.plant, cfg.reference);
  c.v1 = n.v1;
  c.v2 = n.v2;
  if (cfg.trim.from_detectors) {
    c.offsets_w = {cfg.ref_out1.offset_w, cfg.ref_out2.offset_w};
    c.efficiencies = {cfg.ref_out1.efficiency * 2.0 * n.mean1, cfg.ref_out2.efficiency * 2.0 * n.mean2};
  } else {
    c.offsets_w = cfg.trim.offsets_w;
    c.efficiencies = cfg.trim.efficiencies;
  }
  const double target = deg_to_rad(cfg.target_phase_deg);
  c.setpoint_fraction = setpoint_fraction(target, c.v1, c.v2);
  c.constant_setpoint_w = 0.5 * cfg.reference.input_power_w * (1.0 + c.v1 * std::cos(target));
  return c;
}

ControllerSetup calibrated_controller(const ScenarioConfig& cfg, const ScanCalibration& cal) {
  ControllerSetup c;
  c.v1 = std::clamp(cal.reference.v1, 0.0, 1.0);
  c.v2 = std::clamp(cal.reference.v2, 0.0, 1.0);
  c.offsets_w = cal.reference.detector_offsets;
  c.efficiencies = {1.0, cal.reference.efficiency_ratio > 0.0 ? cal.reference.efficiency_ratio : 1.0};
  const double target = deg_to_rad(cfg.target_phase_deg);
  c.setpoint_fraction = setpoint_fraction(target, c.v1, c.v2);
  c.constant_setpoint_w = cal.reference.mean_out1 * (1.0 + c.v1 * std::cos(target));
  return c;
}

RunRecord scan_fringe(const ScenarioConfig& in) {
  ScenarioConfig cfg = in;
  cfg.mode = RunMode::kFringeScan;
  const double ramp_s = cfg.scan.fringes / cfg.scan.fringe_rate_hz;
  cfg.duration_s = 2.0 * cfg.scan.settle_s + ramp_s;
  validate(cfg);

  const double rate = cfg.log_rate_hz;
  const double settle = cfg.scan.settle_s;
  const double half_v = 0.5 * cfg.scan.fringes * cfg.reference.wavelength_m / cfg.stretcher.gain();
  const double offset = cfg.signal.phase_offset_rad;

  RawLog log = simulate(cfg, nominal_controller(cfg), window_count(cfg.duration_s, rate),
                        [&](std::uint64_t, double t) {
                          TickControl c;
                          c.engaged = false;
                          c.commanded = true;
                          c.signal_offset_rad = offset;
                          if (t < settle) {
                            c.command_v = -half_v;
                          } else if (t < settle + ramp_s) {
                            c.command_v = -half_v + 2.0 * half_v * (t - settle) / ramp_s;
                          } else {
                            c.command_v = half_v;
                          }
                          return c;
                        });
  RunRecord rec = finish(cfg, std::move(log));
  // windows lying entirely inside the ramp, past the start transient
  rec.scan_begin = static_cast<std::size_t>(std::ceil((settle + cfg.scan.transient_s) * rate - 1e-9));
  rec.scan_end = static_cast<std::size_t>(std::floor((settle + ramp_s) * rate + 1e-9));
  rec.scan_end = std::min(rec.scan_end, rec.fast.size());
  reconstruct_signal(rec);
  return rec;
}

ScanCalibration calibrate(const RunRecord& scan) {
  const ScenarioConfig& cfg = scan.config;
  if (scan.scan_end <= scan.scan_begin) throw InsufficientDataError("calibrate: empty scan window");
  auto fit = [&](const std::vector<double>& a, const std::vector<double>& b, const DetectorModel& d1,
                 const DetectorModel& d2) {
    std::vector<FringeSample> samples;
    samples.reserve(scan.scan_end - scan.scan_begin);
    for (std::size_t i = scan.scan_begin; i < scan.scan_end; ++i) samples.push_back({a[i], b[i]});
    CalibrationOptions opt;
    opt.phase_poly_degree = cfg.scan.phase_poly_degree;
    opt.envelope_poly_degree = cfg.scan.envelope_poly_degree;
    const double fitted_fringes = cfg.scan.fringes * static_cast<double>(samples.size()) /
                                  (cfg.scan.fringes / cfg.scan.fringe_rate_hz * cfg.log_rate_hz);
    opt.phase_segments = std::max(1, static_cast<int>(std::floor(fitted_fringes / cfg.scan.fringes_per_segment)));
    opt.dark_offsets = {counting_offset_w(d1), counting_offset_w(d2)};
    opt.nominal_efficiencies = {d1.efficiency, d2.efficiency};
    opt.amplitude_response = chain_response(d1, cfg);
    return calibrate_from_scan(samples, opt);
  };
  ScanCalibration cal;
  cal.reference = fit(scan.fast.d1_w, scan.fast.d2_w, cfg.ref_out1, cfg.ref_out2);
  cal.signal = fit(scan.fast.d3_w, scan.fast.d4_w, cfg.sig_out1, cfg.sig_out2);
  return cal;
}

namespace {

RunRecord run_locked(const ScenarioConfig& cfg) {
  validate(cfg);
  std::optional<ScanCalibration> cal = pre_lock_calibration(cfg);
  const ControllerSetup ctl = cal ? calibrated_controller(cfg, *cal) : nominal_controller(cfg);
  const bool engaged = cfg.mode != RunMode::kOpenLoop;
  const double offset = cfg.signal.phase_offset_rad;
  RawLog log = simulate(cfg, ctl, window_count(cfg.duration_s, cfg.log_rate_hz), [&](std::uint64_t, double) {
    TickControl c;
    c.engaged = engaged;
    c.signal_offset_rad = offset;
    return c;
  });
  RunRecord rec = finish(cfg, std::move(log));
  rec.calibration = std::move(cal);
  rec.controller = ctl;
  reconstruct_signal(rec);
  return rec;
}

}  // namespace

RunRecord run_staircase(const ScenarioConfig& in) {
  ScenarioConfig cfg = in;
  cfg.mode = RunMode::kStaircase;
  const double rate = cfg.log_rate_hz;
  const std::uint64_t w_settle = window_count(cfg.staircase.settle_s, rate);
  const std::uint64_t w_dwell = window_count(cfg.staircase.dwell_s, rate);
  const std::uint64_t w_bin = std::max<std::uint64_t>(1, window_count(cfg.staircase.bin_s, rate));
  const std::uint64_t w_step = w_settle + w_dwell;
  const std::size_t steps = cfg.staircase.offsets_deg.size();
  cfg.duration_s = static_cast<double>(w_step * steps) / rate;
  validate(cfg);
  if (w_dwell < w_bin) throw ConfigError({"staircase.dwell_s must hold at least one bin"});

  std::optional<ScanCalibration> cal = pre_lock_calibration(cfg);
  const ControllerSetup ctl = cal ? calibrated_controller(cfg, *cal) : nominal_controller(cfg);
  std::vector<double> offsets_rad;
  for (double d : cfg.staircase.offsets_deg) offsets_rad.push_back(deg_to_rad(d));

  RawLog log = simulate(cfg, ctl, w_step * steps, [&](std::uint64_t w, double) {
    TickControl c;
    c.engaged = true;
    c.signal_offset_rad = offsets_rad[std::min<std::size_t>(w / w_step, steps - 1)];
    return c;
  });
  std::vector<double> counts3 = std::move(log.counts3);
  std::vector<double> counts4 = std::move(log.counts4);
  RunRecord rec = finish(cfg, std::move(log));
  rec.calibration = std::move(cal);
  rec.controller = ctl;
  reconstruct_signal(rec);

  const bool counting = cfg.sig_out1.mode == DetectorMode::kPhotonCounting;
  const double bin_s = static_cast<double>(w_bin) / rate;
  const double bg3 = (cfg.sig_out1.dark_rate + cfg.sig_out1.background_rate) * bin_s;
  const double bg4 = (cfg.sig_out2.dark_rate + cfg.sig_out2.background_rate) * bin_s;
  // locked reference phase carries the signal along by lambda_r / lambda_s
  const double carried = deg_to_rad(cfg.target_phase_deg) - cfg.reference.phase_offset_rad;
  const double carry = carried * cfg.reference.wavelength_m / cfg.signal.wavelength_m;
  WavelengthChannel sig = cfg.signal;
  sig.phase_offset_rad = 0.0;

  for (std::size_t k = 0; k < steps; ++k) {
    StaircaseStep st;
    st.offset_deg = cfg.staircase.offsets_deg[k];
    const double phase = offsets_rad[k] + carry;
    const OutputIntensities ideal = Plant(cfg.plant, sig, LsdParams{})(phase, 1.0);
    st.expected_ratio = ideal.i1 / (ideal.i1 + ideal.i2);

    const std::uint64_t first = k * w_step + w_settle;
    const std::uint64_t nbins = w_dwell / w_bin;
    st.bins = static_cast<int>(nbins);
    if (counting) {
      double n1 = 0.0, n2 = 0.0;
      for (std::uint64_t b = 0; b < nbins; ++b) {
        double c3 = 0.0, c4 = 0.0;
        for (std::uint64_t j = 0; j < w_bin; ++j) {
          c3 += counts3[first + b * w_bin + j];
          c4 += counts4[first + b * w_bin + j];
        }
        n1 += c3 - bg3;
        n2 += c4 - bg4;
      }
      const double total = n1 + n2;
      st.counts = total;
      st.ratio = total > 0.0 ? n1 / total : std::numeric_limits<double>::quiet_NaN();
      st.standard_error = total > 0.0 ? std::sqrt(std::max(0.0, st.ratio * (1.0 - st.ratio)) / total) : 0.0;
    } else {
      const double o3 = cfg.sig_out1.offset_w;
      const double o4 = cfg.sig_out2.offset_w;
      std::vector<double> ratios;
      for (std::uint64_t b = 0; b < nbins; ++b) {
        double a = 0.0, c = 0.0;
        for (std::uint64_t j = 0; j < w_bin; ++j) {
          a += rec.fast.d3_w[first + b * w_bin + j] - o3;
          c += rec.fast.d4_w[first + b * w_bin + j] - o4;
        }
        ratios.push_back(a / (a + c));
      }
      double mean = 0.0;
      for (double r : ratios) mean += r;
      mean /= static_cast<double>(ratios.size());
      double var = 0.0;
      for (double r : ratios) var += (r - mean) * (r - mean);
      st.ratio = mean;
      st.standard_error =
          ratios.size() > 1 ? std::sqrt(var / static_cast<double>(ratios.size() - 1) / static_cast<double>(ratios.size()))
                            : 0.0;
    }
    rec.staircase.push_back(st);
  }
  return rec;
}

RunRecord run_scenario(const ScenarioConfig& cfg) {
  switch (cfg.mode) {
    case RunMode::kFringeScan: {
      RunRecord rec = scan_fringe(cfg);
      rec.calibration = calibrate(rec);
      return rec;
    }
    case RunMode::kStaircase: return run_staircase(cfg);
    default: return run_locked(cfg);
  }
}

double fitted_slope(const std::vector<double>& t, const std::vector<double>& y) {
  if (t.size() != y.size() || t.size() < 2) throw InsufficientDataError("fitted_slope: need two or more points");
  long double mt = 0, my = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    mt += t[i];
    my += y[i];
  }
  mt /= t.size();
  my /= t.size();
  long double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sxy += (t[i] - mt) * (y[i] - my);
    sxx += (t[i] - mt) * (t[i] - mt);
  }
  return static_cast<double>(sxy / sxx);
}

void write_csv(const RunSeries& s, std::ostream& out) {
  out << "t_s,phi_sig_deg,phi_ref_deg,d1_W,d2_W,d3_W,d4_W,v_act_V,phi_comp_deg\n";
  char buf[512];
  for (std::size_t i = 0; i < s.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", s.t_s[i],
                  s.phi_sig_deg[i], s.phi_ref_deg[i], s.d1_w[i], s.d2_w[i], s.d3_w[i], s.d4_w[i], s.v_act_v[i],
                  s.phi_comp_deg[i]);
    out << buf;
  }
}

namespace {

nlohmann::json calibration_json(const CalibrationResult& c) {
  return {{"v1", c.v1},
          {"v2", c.v2},
          {"detector_offsets_w", {c.detector_offsets.first, c.detector_offsets.second}},
          {"efficiency_ratio", c.efficiency_ratio},
          {"output_loss_ratio", c.output_loss_ratio},
          {"mean_out1_w", c.mean_out1},
          {"mean_out2_w", c.mean_out2},
          {"fit_residual_w", c.fit_residual},
          {"iterations", c.iterations}};
}

}  // namespace

std::string metadata_json(const RunRecord& rec) {
  nlohmann::json j;
  j["software"] = "phaselock";
  j["version"] = rec.version;
  j["seed"] = rec.config.seed;
  j["config_hash"] = rec.config_hash;
  j["config"] = to_json(rec.config);
  j["columns"] = {"t_s", "phi_sig_deg", "phi_ref_deg", "d1_W", "d2_W", "d3_W", "d4_W", "v_act_V", "phi_comp_deg"};
  j["samples"] = rec.slow.size();
  j["sample_rate_hz"] = rec.slow.sample_rate_hz;
  j["log_samples"] = rec.fast.size();
  j["controller"] = {{"v1", rec.controller.v1},
                     {"v2", rec.controller.v2},
                     {"setpoint_fraction", rec.controller.setpoint_fraction},
                     {"constant_setpoint_w", rec.controller.constant_setpoint_w},
                     {"offsets_w", {rec.controller.offsets_w.first, rec.controller.offsets_w.second}},
                     {"efficiencies", {rec.controller.efficiencies.first, rec.controller.efficiencies.second}}};
  if (rec.calibration) {
    j["calibration"] = {{"reference", calibration_json(rec.calibration->reference)},
                        {"signal", calibration_json(rec.calibration->signal)}};
  } else {
    j["calibration"] = nullptr;
  }
  j["saturation"] = {{"pid_ticks", rec.saturation.pid_ticks},
                     {"stretcher_ticks", rec.saturation.stretcher_ticks},
                     {"events", rec.saturation.events},
                     {"first_event_s", rec.saturation.first_event_s}};
  if (!rec.staircase.empty()) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : rec.staircase) {
      steps.push_back({{"offset_deg", s.offset_deg},
                       {"expected_ratio", s.expected_ratio},
                       {"ratio", s.ratio},
                       {"standard_error", s.standard_error},
                       {"bins", s.bins},
                       {"counts", s.counts}});
    }
    j["staircase"] = steps;
  }
  return j.dump(2) + "\n";
}

}  // namespace phaselock
