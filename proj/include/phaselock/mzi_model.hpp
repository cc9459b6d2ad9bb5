#pragma once

// Forward optical model of the dual-wavelength Mach-Zehnder interferometer.
// Phases are unwrapped radians throughout; degrees only appear at I/O.

#include <numbers>
#include <utility>

namespace phaselock {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kPlanck = 6.62607015e-34;       // J s
inline constexpr double kSpeedOfLight = 299792458.0;    // m/s

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// One wavelength travelling through the interferometer.
///
/// `phase_offset_rad` is the relative phase set by the dispersion compensator
/// for this wavelength; it is what lets the signal sit at an arbitrary phase
/// while the reference is held at quadrature. `static_opd_m` is the absolute
/// path imbalance this wavelength sees and only matters for wavelength drift.
struct WavelengthChannel {
  double wavelength_m = 840e-9;
  double input_power_w = 1.5e-9;
  double visibility_out1 = 1.0;
  double visibility_out2 = 1.0;
  double coupler_t1 = 0.5;
  double coupler_t2 = 0.5;
  double phase_offset_rad = 0.0;
  double static_opd_m = 0.0;
};

/// Local setup detuning: loss at output port 2 and loss in the arm behind T1.
struct LsdParams {
  double mu_out = 0.0;
  double mu_arm = 0.0;
};

struct OutputIntensities {
  double i1 = 0.0;
  double i2 = 0.0;
};

/// Throws std::invalid_argument naming the first violated channel invariant.
void validate(const WavelengthChannel& channel);
void validate(const LsdParams& lsd);

double path_to_phase(double path_difference_m, double wavelength_m);

/// Visibility-parameterized fringe. `power_scale` multiplies the channel's
/// input power (environmental intensity drift).
OutputIntensities fringe_intensities(double phase_rad, const WavelengthChannel& channel,
                                     const LsdParams& lsd, double power_scale = 1.0);

/// Field-level model for unit input power, perfect coherence and no output
/// loss. The arm behind the first coupler's transmitted port carries the
/// loss `mu_arm`. Output 1 is the dark port at zero phase.
OutputIntensities coupler_model(double phase_rad, double t1, double t2, double mu_arm);

/// Fractions (T, R) = (i1, i2) / (i1 + i2) of the loss-free fringe.
std::pair<double, double> splitting_ratio(double phase_rad, const WavelengthChannel& channel);

/// Energy of one photon at `wavelength_m`.
double photon_energy(double wavelength_m);

}  // namespace phaselock
