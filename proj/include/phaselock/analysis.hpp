#pragma once

// Stability metrics over uniformly sampled phase series.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace phaselock {

struct TimeSeries {
  double sample_rate_hz = 1.0;
  std::vector<double> values;
  std::string unit = "deg";

  double duration_s() const { return static_cast<double>(values.size()) / sample_rate_hz; }
};

struct AllanCurve {
  std::vector<double> tau_s;
  std::vector<std::optional<double>> deviation;  // empty where tau is too long
  std::vector<std::size_t> terms;                // number of squared differences averaged
  std::string estimator = "overlapping two-sample deviation of window means";
  std::string unit = "deg";
};

struct PsdCurve {
  std::vector<double> frequency_hz;
  std::vector<double> density;  // one-sided, unit^2/Hz
  std::size_t segment_length = 0;
  double overlap = 0.0;
  std::size_t segments = 0;
  std::string window = "hann";
  std::string unit = "deg";
};

/// Overlapping Allan deviation. Every tau must be a whole number of sample
/// periods (std::invalid_argument otherwise); a tau longer than half the
/// series yields an empty entry.
AllanCurve allan_deviation(const TimeSeries& series, const std::vector<double>& taus_s);

/// 10 points per decade from 2 sample periods to a fifth of the duration,
/// snapped to whole sample periods.
std::vector<double> default_taus(const TimeSeries& series);

/// Welch estimate: Hann-windowed segments, each with its mean removed,
/// averaged periodograms scaled so the integral over frequency is the variance.
PsdCurve power_spectral_density(const TimeSeries& series, std::size_t segment_length, double overlap = 0.5);

/// Longest segment giving at least 8 half-overlapping segments.
std::size_t default_segment_length(std::size_t length);

/// Density of the bin whose centre lies nearest to `frequency_hz`.
double density_at(const PsdCurve& curve, double frequency_hz);

/// Non-overlapping means of `factor` samples; the remainder is dropped.
TimeSeries block_average(const TimeSeries& series, std::size_t factor);

/// Sample standard deviation of the series averaged to 1 Hz, optionally after
/// removing a least-squares line.
double windowed_std(const TimeSeries& series, bool detrend = false);

void write_allan_csv(const AllanCurve& curve, std::ostream& out, const std::string& comment = {});
void write_psd_csv(const PsdCurve& curve, std::ostream& out, const std::string& comment = {});

}  // namespace phaselock
