#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "phaselock/mzi_model.hpp"

namespace phaselock {

/// How an arccos argument outside [-1, 1] is treated. The running lock
/// saturates; offline analysis can ask to be told about model violations.
enum class ArccosMode { kSaturate, kStrict };

inline constexpr double kStrictArccosSlack = 1e-6;

/// Phase from the two output intensities of one wavelength, in [0, pi].
///
/// Evaluates arccos[(i1/v2 - (1-mu_out) i2/v1) / (i1 + (1-mu_out) i2)]. With
/// `mu_out` equal to the real output-2 loss this is the phase an observer
/// reports from loss-free intensities; to invert measured intensities that
/// already carry a loss mu, pass compensating_mu_out(mu). `mu_out` may be
/// negative for that reason but must stay below 1.
double estimate_phase_eq1(double i1, double i2, double v1, double v2, double mu_out,
                          ArccosMode mode = ArccosMode::kSaturate);

/// The mu_out that undoes a real output-2 power loss `loss` when inverting with
/// estimate_phase_eq1: (1 - result) = 1 / (1 - loss).
double compensating_mu_out(double loss);

/// Phase that an arm-loss-unaware estimator reports for true phase `phase_rad`
/// when the arm behind coupler T1 has loss `mu_arm`.
double predicted_phase_eq2(double phase_rad, double t1, double t2, double mu_arm,
                           ArccosMode mode = ArccosMode::kSaturate);

/// Relative signal-reference phase drift for small wavelength excursions.
double relative_drift_eq3(double lambda_s_m, double lambda_r_m, double opd_s_m, double opd_r_m,
                          double dlambda_s_m, double dlambda_r_m);

struct FringeSample {
  double i1 = 0.0;
  double i2 = 0.0;
};

struct CalibrationOptions {
  /// Degree of the polynomial phase-versus-sample model. 1 assumes a strictly
  /// linear scan; higher degrees absorb slow drift during the scan.
  int phase_poly_degree = 1;
  /// Degree of a slow multiplicative envelope common to both outputs
  /// (1 + d1 t + d2 t^2 ...), absorbing source power drift. 0 disables it.
  int envelope_poly_degree = 0;
  /// The scan is split into this many equal segments, each with its own
  /// phase polynomial, so the model follows random phase wander.
  int phase_segments = 1;
  /// Readings recorded with the beams blocked; subtracted before fitting.
  std::pair<double, double> dark_offsets{0.0, 0.0};
  /// Nominal detector efficiencies, used to split the fitted output-2/output-1
  /// gain into detector and interferometer contributions.
  std::pair<double, double> nominal_efficiencies{1.0, 1.0};
  /// Amplitude response of the acquisition chain at a fringe frequency given
  /// in radians per sample. Fitted amplitudes are divided by it.
  std::function<double(double)> amplitude_response;
  int max_iterations = 100;
  double step_tolerance = 1e-10;
};

struct CalibrationResult {
  double v1 = 0.0;
  double v2 = 0.0;
  std::pair<double, double> detector_offsets{0.0, 0.0};
  /// Fitted mean of output 2 over output 1 (offsets removed).
  double efficiency_ratio = 1.0;
  /// Estimate of (1 - mu_out): efficiency_ratio with nominal efficiencies divided out.
  double output_loss_ratio = 1.0;
  double fit_residual = 0.0;

  double mean_out1 = 0.0;
  double mean_out2 = 0.0;
  double radians_per_sample = 0.0;
  int iterations = 0;
};

/// Least-squares fit of a fringe scan: i1 = a1 + b1 cos p(n), i2 = a2 - b2 cos p(n).
/// Throws InsufficientDataError if the scan covers less than one fringe.
CalibrationResult calibrate_from_scan(std::span<const FringeSample> scan,
                                      const CalibrationOptions& options = {});

}  // namespace phaselock
