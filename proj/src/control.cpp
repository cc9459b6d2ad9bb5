#include "phaselock/control.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace phaselock {

void validate(const PidGains& g) {
  if (!(g.output_min < g.output_max)) throw std::invalid_argument("pid output_min must be below output_max");
  if (!std::isfinite(g.kp) || !std::isfinite(g.ki) || !std::isfinite(g.kd)) {
    throw std::invalid_argument("pid gains must be finite");
  }
}

void validate(const StretcherModel& m) {
  if (!(m.half_wave_voltage > 0.0)) throw std::invalid_argument("stretcher half-wave voltage must be positive");
  if (!(m.ref_wavelength > 0.0)) throw std::invalid_argument("stretcher reference wavelength must be positive");
  if (!(m.path_range > 0.0)) throw std::invalid_argument("stretcher path range must be positive");
  if (!(m.bandwidth_hz > 0.0)) throw std::invalid_argument("stretcher bandwidth must be positive");
  if (std::abs(m.filtered_path) > m.path_range) throw std::invalid_argument("stretcher path outside its range");
}

double setpoint_fraction(double target_phase_rad, double v1, double v2) {
  if (!(v1 >= 0.0 && v1 <= 1.0) || !(v2 >= 0.0 && v2 <= 1.0)) {
    throw std::invalid_argument("setpoint_fraction: visibilities must lie in [0, 1]");
  }
  const double c = std::cos(target_phase_rad);
  return (1.0 + v1 * c) / (2.0 + (v1 - v2) * c);
}

double error_signal_adaptive(double i1, double i2, double f, std::pair<double, double> off,
                             std::pair<double, double> eff) {
  if (!(eff.first > 0.0) || !(eff.second > 0.0)) {
    throw std::invalid_argument("error_signal_adaptive: efficiencies must be positive");
  }
  const double c1 = (i1 - off.first) / eff.first;
  const double c2 = (i2 - off.second) / eff.second;
  return c1 - f * (c1 + c2);
}

double error_signal_constant(double i1, double setpoint) { return i1 - setpoint; }

double pid_step(double error, ControllerState& s, const PidGains& g, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("pid_step: dt must be positive");
  if (!s.engaged) {
    s.saturated = false;
    return std::clamp(s.integrator, g.output_min, g.output_max);
  }
  s.integrator = std::clamp(s.integrator + g.ki * error * dt, g.output_min, g.output_max);
  const double derivative = s.has_prev ? (error - s.prev_error) / dt : 0.0;
  s.prev_error = error;
  s.has_prev = true;
  const double raw = g.kp * error + s.integrator + g.kd * derivative;
  const double out = std::clamp(raw, g.output_min, g.output_max);
  s.saturated = out != raw;
  return out;
}

double stretcher_step(double voltage, StretcherModel& m, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("stretcher_step: dt must be positive");
  const double target = m.gain() * voltage;
  const double alpha = std::exp(-2.0 * std::numbers::pi * m.bandwidth_hz * dt);
  const double next = alpha * m.filtered_path + (1.0 - alpha) * target;
  m.filtered_path = std::clamp(next, -m.path_range, m.path_range);
  m.clamped = m.filtered_path != next;
  return m.filtered_path;
}

}  // namespace phaselock
