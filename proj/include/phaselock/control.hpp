#pragma once

// Adaptive-setpoint error generation, PID law and fiber-stretcher actuator.

#include <utility>

namespace phaselock {

/// Gains are signed: the sign selects which fringe slope the loop locks to.
struct PidGains {
  double kp = 0.0;  // V/W
  double ki = 0.0;  // V/(W s)
  double kd = 0.0;  // V s/W
  double output_min = -28.8;
  double output_max = 28.8;
};

struct ControllerState {
  double integrator = 0.0;
  double prev_error = 0.0;
  bool engaged = true;
  bool has_prev = false;
  bool saturated = false;  // last output hit a limit
};

struct StretcherModel {
  double half_wave_voltage = 0.11;  // V
  double ref_wavelength = 840e-9;   // m
  double path_range = 110e-6;       // +-m
  double bandwidth_hz = 1e3;
  double capacitance_f = 7.2e-6;    // recorded only
  double filtered_path = 0.0;       // state, m
  bool clamped = false;             // last step hit the range limit

  /// Path per volt, ref_wavelength / (2 * half_wave_voltage).
  double gain() const { return ref_wavelength / (2.0 * half_wave_voltage); }
};

void validate(const PidGains& gains);
void validate(const StretcherModel& model);

/// Fraction of (I1 + I2) at which I1 sits for `target_phase_rad`.
double setpoint_fraction(double target_phase_rad, double v1, double v2);

/// e = i1' - f (i1' + i2') with i'_k = (i_k - offset_k) / efficiency_k.
double error_signal_adaptive(double i1, double i2, double f, std::pair<double, double> det_offsets = {0.0, 0.0},
                             std::pair<double, double> efficiencies = {1.0, 1.0});

double error_signal_constant(double i1, double setpoint);

/// One update of the PID law; integrator is clamped to the output limits.
double pid_step(double error, ControllerState& state, const PidGains& gains, double dt);

/// One update of the actuator; returns the filtered path contribution.
double stretcher_step(double voltage, StretcherModel& model, double dt);

}  // namespace phaselock
