#include "phaselock/mzi_model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "phaselock/errors.hpp"

namespace phaselock {

namespace {

void require_fraction_open(double v, const char* name) {
  if (!(v > 0.0 && v < 1.0)) {
    throw std::invalid_argument(std::string(name) + " must lie in (0, 1), got " + std::to_string(v));
  }
}

}  // namespace

void validate(const WavelengthChannel& c) {
  if (!(c.wavelength_m > 0.0)) throw std::invalid_argument("wavelength must be positive");
  if (!(c.input_power_w >= 0.0)) throw std::invalid_argument("input power must be non-negative");
  if (!(c.visibility_out1 >= 0.0 && c.visibility_out1 <= 1.0) ||
      !(c.visibility_out2 >= 0.0 && c.visibility_out2 <= 1.0)) {
    throw std::invalid_argument("visibilities must lie in [0, 1]");
  }
  require_fraction_open(c.coupler_t1, "coupler T1");
  require_fraction_open(c.coupler_t2, "coupler T2");
}

void validate(const LsdParams& lsd) {
  if (!(lsd.mu_out >= 0.0 && lsd.mu_out < 1.0)) throw std::invalid_argument("mu_out must lie in [0, 1)");
  if (!(lsd.mu_arm >= 0.0 && lsd.mu_arm < 1.0)) throw std::invalid_argument("mu_arm must lie in [0, 1)");
}

double path_to_phase(double path_difference_m, double wavelength_m) {
  if (!(wavelength_m > 0.0)) {
    throw std::invalid_argument("path_to_phase: wavelength must be positive");
  }
  return 2.0 * kPi * path_difference_m / wavelength_m;
}

OutputIntensities fringe_intensities(double phase_rad, const WavelengthChannel& channel,
                                     const LsdParams& lsd, double power_scale) {
  const double half = 0.5 * channel.input_power_w * power_scale;
  const double c = std::cos(phase_rad + channel.phase_offset_rad);
  return {half * (1.0 + channel.visibility_out1 * c),
          (1.0 - lsd.mu_out) * half * (1.0 - channel.visibility_out2 * c)};
}

OutputIntensities coupler_model(double phase_rad, double t1, double t2, double mu_arm) {
  require_fraction_open(t1, "coupler_model: T1");
  require_fraction_open(t2, "coupler_model: T2");
  if (!(mu_arm >= 0.0 && mu_arm < 1.0)) {
    throw std::invalid_argument("coupler_model: mu_arm must lie in [0, 1)");
  }
  const double keep = 1.0 - mu_arm;
  const double cross = 2.0 * std::sqrt(t1 * t2 * (1.0 - t1) * (1.0 - t2) * keep) * std::cos(phase_rad);
  return {t1 * t2 * keep + (1.0 - t1) * (1.0 - t2) - cross,
          t1 * (1.0 - t2) * keep + (1.0 - t1) * t2 + cross};
}

std::pair<double, double> splitting_ratio(double phase_rad, const WavelengthChannel& channel) {
  const auto out = fringe_intensities(phase_rad, channel, LsdParams{});
  const double total = out.i1 + out.i2;
  if (!(total > 0.0)) throw UndefinedRatioError("splitting_ratio: zero total intensity");
  return {out.i1 / total, out.i2 / total};
}

double photon_energy(double wavelength_m) {
  if (!(wavelength_m > 0.0)) throw std::invalid_argument("photon_energy: wavelength must be positive");
  return kPlanck * kSpeedOfLight / wavelength_m;
}

}  // namespace phaselock
