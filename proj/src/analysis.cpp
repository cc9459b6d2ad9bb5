#include "phaselock/analysis.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <numbers>
#include <ostream>
#include <stdexcept>

#include "phaselock/errors.hpp"

namespace phaselock {

namespace {

void require_metric_input(const TimeSeries& s, const char* who) {
  if (!(s.sample_rate_hz > 0.0)) throw std::invalid_argument(std::string(who) + ": sample rate must be positive");
  if (s.values.size() < 2) throw InsufficientDataError(std::string(who) + ": need at least two samples");
}

// fftw's planner is not re-entrant
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

AllanCurve allan_deviation(const TimeSeries& series, const std::vector<double>& taus) {
  require_metric_input(series, "allan_deviation");
  const std::size_t n = series.values.size();

  // prefix sums relative to the first sample
  std::vector<long double> prefix(n + 1, 0.0L);
  const double x0 = series.values.front();
  for (std::size_t i = 0; i < n; ++i) {
    prefix[i + 1] = prefix[i] + static_cast<long double>(series.values[i] - x0);
  }

  AllanCurve curve;
  curve.unit = series.unit;
  for (double tau : taus) {
    const double m_real = tau * series.sample_rate_hz;
    const double m_round = std::round(m_real);
    if (!(m_round >= 1.0) || std::abs(m_real - m_round) > 1e-9 * std::max(1.0, m_round)) {
      throw std::invalid_argument("allan_deviation: tau " + std::to_string(tau) +
                                  " s is not a whole number of sample periods");
    }
    const auto m = static_cast<std::size_t>(m_round);
    curve.tau_s.push_back(tau);
    if (2 * m > n) {
      curve.deviation.push_back(std::nullopt);
      curve.terms.push_back(0);
      continue;
    }
    const std::size_t terms = n - 2 * m + 1;
    long double acc = 0.0L;
    const long double inv_m = 1.0L / static_cast<long double>(m);
    for (std::size_t k = 0; k < terms; ++k) {
      const long double a = (prefix[k + m] - prefix[k]) * inv_m;
      const long double b = (prefix[k + 2 * m] - prefix[k + m]) * inv_m;
      acc += (b - a) * (b - a);
    }
    curve.deviation.push_back(static_cast<double>(std::sqrt(acc / (2.0L * static_cast<long double>(terms)))));
    curve.terms.push_back(terms);
  }
  return curve;
}

std::vector<double> default_taus(const TimeSeries& series) {
  require_metric_input(series, "default_taus");
  const double period = 1.0 / series.sample_rate_hz;
  const double lo = 2.0 * period;
  const double hi = series.duration_s() / 5.0;
  std::vector<double> taus;
  if (hi < lo) return taus;
  const int steps = static_cast<int>(std::floor(10.0 * std::log10(hi / lo) + 1e-9));
  long long last = 0;
  for (int k = 0; k <= steps; ++k) {
    const auto m = std::llround(std::pow(10.0, std::log10(lo) + k / 10.0) / period);
    if (m > last) {
      taus.push_back(static_cast<double>(m) * period);
      last = m;
    }
  }
  return taus;
}

PsdCurve power_spectral_density(const TimeSeries& series, std::size_t len, double overlap) {
  require_metric_input(series, "power_spectral_density");
  const std::size_t n = series.values.size();
  if (len < 2) throw std::invalid_argument("power_spectral_density: segment length must be at least 2");
  if (len > n) throw std::invalid_argument("power_spectral_density: segment longer than the series");
  if (!(overlap >= 0.0 && overlap <= 0.9)) {
    throw std::invalid_argument("power_spectral_density: overlap must lie in [0, 0.9]");
  }
  const auto step = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(len * (1.0 - overlap))));
  const std::size_t nseg = (n - len) / step + 1;

  std::vector<double> window(len);
  double wpow = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    window[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len)));
    wpow += window[i] * window[i];
  }

  const std::size_t nbins = len / 2 + 1;
  std::vector<double> acc(nbins, 0.0);
  double* in = fftw_alloc_real(len);
  fftw_complex* out = fftw_alloc_complex(nbins);
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(len), in, out, FFTW_ESTIMATE);
  }
  for (std::size_t s = 0; s < nseg; ++s) {
    const double* x = series.values.data() + s * step;
    double mean = 0.0;
    for (std::size_t i = 0; i < len; ++i) mean += x[i];
    mean /= static_cast<double>(len);
    for (std::size_t i = 0; i < len; ++i) in[i] = (x[i] - mean) * window[i];
    fftw_execute(plan);
    for (std::size_t k = 0; k < nbins; ++k) acc[k] += out[k][0] * out[k][0] + out[k][1] * out[k][1];
  }
  {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);

  PsdCurve curve;
  curve.segment_length = len;
  curve.overlap = overlap;
  curve.segments = nseg;
  curve.unit = series.unit;
  const double fs = series.sample_rate_hz;
  const double scale = 1.0 / (fs * wpow * static_cast<double>(nseg));
  curve.frequency_hz.resize(nbins);
  curve.density.resize(nbins);
  for (std::size_t k = 0; k < nbins; ++k) {
    const bool edge = k == 0 || (len % 2 == 0 && k == nbins - 1);
    curve.frequency_hz[k] = static_cast<double>(k) * fs / static_cast<double>(len);
    curve.density[k] = acc[k] * scale * (edge ? 1.0 : 2.0);
  }
  return curve;
}

std::size_t default_segment_length(std::size_t length) {
  // 8 segments at 50 % overlap span 4.5 segment lengths
  return std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(static_cast<double>(length) / 4.5)));
}

double density_at(const PsdCurve& c, double f) {
  if (c.frequency_hz.size() < 2) throw InsufficientDataError("density_at: empty curve");
  const double df = c.frequency_hz[1] - c.frequency_hz[0];
  if (!(f >= 0.0) || f > c.frequency_hz.back() + 0.5 * df) {
    throw std::out_of_range("density_at: frequency outside the curve");
  }
  const auto k = std::min<std::size_t>(c.frequency_hz.size() - 1, static_cast<std::size_t>(std::llround(f / df)));
  return c.density[k];
}

TimeSeries block_average(const TimeSeries& s, std::size_t factor) {
  if (factor < 1) throw std::invalid_argument("block_average: factor must be at least 1");
  if (factor > s.values.size()) throw EmptySeriesError("block_average: factor exceeds series length");
  TimeSeries out;
  out.unit = s.unit;
  out.sample_rate_hz = s.sample_rate_hz / static_cast<double>(factor);
  out.values.resize(s.values.size() / factor);
  for (std::size_t j = 0; j < out.values.size(); ++j) {
    double acc = 0.0;
    for (std::size_t k = 0; k < factor; ++k) acc += s.values[j * factor + k];
    out.values[j] = acc / static_cast<double>(factor);
  }
  return out;
}

double windowed_std(const TimeSeries& s, bool detrend) {
  require_metric_input(s, "windowed_std");
  TimeSeries one_hz = s;
  if (s.sample_rate_hz > 1.0) {
    const double f = s.sample_rate_hz;
    if (std::abs(f - std::round(f)) > 1e-9 * f) {
      throw std::invalid_argument("windowed_std: sample rate must be a whole number of hertz");
    }
    one_hz = block_average(s, static_cast<std::size_t>(std::llround(f)));
  }
  const std::vector<double>& y = one_hz.values;
  const std::size_t n = y.size();
  if (n < 2) throw InsufficientDataError("windowed_std: fewer than two 1 Hz samples");
  std::vector<double> r(y);
  if (detrend) {
    if (n < 3) throw InsufficientDataError("windowed_std: detrending needs three samples");
    const double tm = 0.5 * static_cast<double>(n - 1);
    double ym = 0.0;
    for (double v : y) ym += v;
    ym /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dt = static_cast<double>(i) - tm;
      sxy += dt * (y[i] - ym);
      sxx += dt * dt;
    }
    const double slope = sxy / sxx;
    for (std::size_t i = 0; i < n; ++i) r[i] = y[i] - ym - slope * (static_cast<double>(i) - tm);
  }
  double mean = 0.0;
  for (double v : r) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : r) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

namespace {

void write_row(std::ostream& out, double a, double b) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", a, b);
  out << buf;
}

}  // namespace

void write_allan_csv(const AllanCurve& c, std::ostream& out, const std::string& comment) {
  out << "# allan: " << c.estimator << "; unit " << c.unit;
  if (!comment.empty()) out << "; " << comment;
  out << "\n";
  out << "tau_s,adev_" << c.unit << "\n";
  for (std::size_t i = 0; i < c.tau_s.size(); ++i) {
    if (!c.deviation[i]) continue;
    write_row(out, c.tau_s[i], *c.deviation[i]);
  }
}

void write_psd_csv(const PsdCurve& c, std::ostream& out, const std::string& comment) {
  out << "# psd: welch, " << c.window << " window, one-sided, segment_length " << c.segment_length << ", overlap "
      << c.overlap << ", segments " << c.segments << "; unit " << c.unit << "^2/Hz";
  if (!comment.empty()) out << "; " << comment;
  out << "\n";
  out << "frequency_hz,psd_" << c.unit << "2_per_hz\n";
  for (std::size_t i = 0; i < c.frequency_hz.size(); ++i) write_row(out, c.frequency_hz[i], c.density[i]);
}

}  // namespace phaselock
