#include "phaselock/estimator.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include "phaselock/errors.hpp"

namespace phaselock {

namespace {

double checked_arccos(double arg, ArccosMode mode, const char* who) {
  if (!std::isfinite(arg)) throw UndefinedPhaseError(std::string(who) + ": non-finite arccos argument");
  if (mode == ArccosMode::kStrict && std::abs(arg) > 1.0 + kStrictArccosSlack) {
    throw UndefinedPhaseError(std::string(who) + ": arccos argument " + std::to_string(arg) +
                              " outside [-1, 1]");
  }
  return std::acos(std::clamp(arg, -1.0, 1.0));
}

}  // namespace

double estimate_phase_eq1(double i1, double i2, double v1, double v2, double mu_out, ArccosMode mode) {
  if (!(v1 > 0.0 && v1 <= 1.0) || !(v2 > 0.0 && v2 <= 1.0)) {
    throw std::invalid_argument("estimate_phase_eq1: visibilities must lie in (0, 1]");
  }
  if (!(mu_out < 1.0)) throw std::invalid_argument("estimate_phase_eq1: mu_out must be below 1");
  if (i1 == 0.0 && i2 == 0.0) throw UndefinedPhaseError("estimate_phase_eq1: both intensities are zero");
  const double keep = 1.0 - mu_out;
  const double denom = i1 + i2 * keep;
  if (!(denom > 0.0)) throw UndefinedPhaseError("estimate_phase_eq1: non-positive total intensity");
  return checked_arccos((i1 / v2 - i2 * keep / v1) / denom, mode, "estimate_phase_eq1");
}

double compensating_mu_out(double loss) {
  if (!(loss >= 0.0 && loss < 1.0)) throw std::invalid_argument("compensating_mu_out: loss must lie in [0, 1)");
  return 1.0 - 1.0 / (1.0 - loss);
}

double predicted_phase_eq2(double phase_rad, double t1, double t2, double mu_arm, ArccosMode mode) {
  if (!(t1 > 0.0 && t1 < 1.0) || !(t2 > 0.0 && t2 < 1.0)) {
    throw std::invalid_argument("predicted_phase_eq2: degenerate coupler");
  }
  if (!(mu_arm >= 0.0 && mu_arm < 1.0)) throw std::invalid_argument("predicted_phase_eq2: mu_arm must lie in [0, 1)");
  const double root = std::sqrt(t1 * t2 * (1.0 - t1) * (1.0 - t2));
  const double num = t2 * (1.0 - t2) * (1.0 - 2.0 * t1) * mu_arm +
                     2.0 * std::sqrt(t1 * t2 * (1.0 - t1) * (1.0 - t2) * (1.0 - mu_arm)) * std::cos(phase_rad);
  const double den = 2.0 * root * (1.0 - t1 * mu_arm);
  return checked_arccos(num / den, mode, "predicted_phase_eq2");
}

double relative_drift_eq3(double lambda_s_m, double lambda_r_m, double opd_s_m, double opd_r_m,
                          double dlambda_s_m, double dlambda_r_m) {
  if (!(lambda_s_m > 0.0) || !(lambda_r_m > 0.0)) {
    throw std::invalid_argument("relative_drift_eq3: wavelengths must be positive");
  }
  return 2.0 * kPi *
         (opd_s_m * dlambda_s_m / (lambda_s_m * lambda_s_m) - opd_r_m * dlambda_r_m / (lambda_r_m * lambda_r_m));
}

// ---------------------------------------------------------------------------
// Fringe-scan calibration
// ---------------------------------------------------------------------------

namespace {

// Sign changes of a zero-mean series with hysteresis at +-threshold.
struct Crossings {
  int count = 0;
  std::size_t first = 0;
  std::size_t last = 0;
};

Crossings count_crossings(std::span<const double> x, double threshold) {
  Crossings c;
  int state = 0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    int s = 0;
    if (x[n] > threshold) s = 1;
    else if (x[n] < -threshold) s = -1;
    if (s == 0) continue;
    if (state != 0 && s != state) {
      if (c.count == 0) c.first = n;
      c.last = n;
      ++c.count;
    }
    state = s;
  }
  return c;
}

double projection_magnitude(std::span<const double> x, double omega) {
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t n = 0; n < x.size(); ++n) {
    acc += x[n] * std::polar(1.0, -omega * static_cast<double>(n));
  }
  return std::abs(acc);
}

double refine_frequency(std::span<const double> x, double omega0) {
  constexpr int kGrid = 401;
  const double lo = 0.8 * omega0;
  const double hi = std::min(1.2 * omega0, kPi);
  const double step = (hi - lo) / (kGrid - 1);
  double best = lo;
  double best_mag = -1.0;
  for (int k = 0; k < kGrid; ++k) {
    const double w = lo + step * k;
    const double m = projection_magnitude(x, w);
    if (m > best_mag) {
      best_mag = m;
      best = w;
    }
  }
  // golden-section on the bracketing grid cells
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = std::max(best - step, 1e-12);
  double b = best + step;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = projection_magnitude(x, c);
  double fd = projection_magnitude(x, d);
  for (int it = 0; it < 80 && (b - a) > 1e-15 * omega0; ++it) {
    if (fc > fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = projection_magnitude(x, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = projection_magnitude(x, d);
    }
  }
  return 0.5 * (a + b);
}

// Scan model: i1 = E(t) (a1 + b1 cos p(n)), i2 = E(t) (a2 - b2 cos p(n)).
// The phase is a polynomial per segment in segment-local normalized time, the
// envelope E = 1 + d1 t + d2 t^2 ... uses scan-global normalized time.
// Parameter order: a1, b1, a2, b2, segment phase coefficients, envelope.
struct FringeModel {
  Eigen::VectorXd p;
  int degree = 1;
  int env_degree = 0;
  int segments = 1;

  int phase_index(int seg, int k) const { return 4 + seg * (degree + 1) + k; }
  int env_index(int j) const { return 4 + segments * (degree + 1) + j - 1; }
  int size() const { return 4 + segments * (degree + 1) + env_degree; }

  double phase(int seg, double tl) const {
    double acc = 0.0;
    double pw = 1.0;
    for (int k = 0; k <= degree; ++k) {
      acc += p[phase_index(seg, k)] * pw;
      pw *= tl;
    }
    return acc;
  }

  double envelope(double tg) const {
    double acc = 1.0;
    double pw = tg;
    for (int j = 1; j <= env_degree; ++j) {
      acc += p[env_index(j)] * pw;
      pw *= tg;
    }
    return acc;
  }
};

/// Sample layout: segment id, local and global normalized times.
struct SampleGrid {
  std::vector<int> seg;
  std::vector<double> local;
  std::vector<double> global;
  std::vector<std::size_t> seg_begin;  // segments + 1 entries
};

double normalized(std::size_t n, std::size_t begin, std::size_t len) {
  if (len < 2) return 0.0;
  return (2.0 * static_cast<double>(n - begin) - static_cast<double>(len - 1)) / static_cast<double>(len - 1);
}

SampleGrid make_grid(std::size_t count, int segments) {
  SampleGrid g;
  g.seg.resize(count);
  g.local.resize(count);
  g.global.resize(count);
  for (int s = 0; s <= segments; ++s) g.seg_begin.push_back(count * static_cast<std::size_t>(s) / segments);
  for (int s = 0; s < segments; ++s) {
    const std::size_t b = g.seg_begin[s];
    const std::size_t e = g.seg_begin[s + 1];
    for (std::size_t n = b; n < e; ++n) {
      g.seg[n] = s;
      g.local[n] = normalized(n, b, e - b);
    }
  }
  for (std::size_t n = 0; n < count; ++n) g.global[n] = normalized(n, 0, count);
  return g;
}

double sum_squares(const FringeModel& m, const SampleGrid& g, std::span<const double> y1,
                   std::span<const double> y2) {
  double acc = 0.0;
  for (std::size_t n = 0; n < y1.size(); ++n) {
    const double c = std::cos(m.phase(g.seg[n], g.local[n]));
    const double e = m.envelope(g.global[n]);
    const double r1 = e * (m.p[0] + m.p[1] * c) - y1[n];
    const double r2 = e * (m.p[2] - m.p[3] * c) - y2[n];
    acc += r1 * r1 + r2 * r2;
  }
  return acc;
}

}  // namespace

CalibrationResult calibrate_from_scan(std::span<const FringeSample> scan, const CalibrationOptions& opt) {
  if (opt.phase_poly_degree < 1 || opt.phase_poly_degree > 8) {
    throw std::invalid_argument("calibrate_from_scan: phase_poly_degree must lie in [1, 8]");
  }
  if (opt.envelope_poly_degree < 0 || opt.envelope_poly_degree > 8) {
    throw std::invalid_argument("calibrate_from_scan: envelope_poly_degree must lie in [0, 8]");
  }
  if (opt.phase_segments < 1) throw std::invalid_argument("calibrate_from_scan: phase_segments must be positive");
  const std::size_t count = scan.size();

  FringeModel model;
  model.degree = opt.phase_poly_degree;
  model.env_degree = opt.envelope_poly_degree;
  model.segments = opt.phase_segments;
  const int nparams = model.size();
  if (count < static_cast<std::size_t>(4 * nparams) ||
      count / static_cast<std::size_t>(model.segments) < static_cast<std::size_t>(3 * (model.degree + 1))) {
    throw InsufficientDataError("calibrate_from_scan: too few samples");
  }

  std::vector<double> y1(count), y2(count);
  double scale = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    y1[n] = scan[n].i1 - opt.dark_offsets.first;
    y2[n] = scan[n].i2 - opt.dark_offsets.second;
    scale = std::max({scale, std::abs(y1[n]), std::abs(y2[n])});
  }
  if (!(scale > 0.0)) throw InsufficientDataError("calibrate_from_scan: scan carries no signal");
  for (std::size_t n = 0; n < count; ++n) {
    y1[n] /= scale;
    y2[n] /= scale;
  }

  // Coarse stage on the zero-mean difference channel, which carries the
  // fringe twice over and cancels common intensity changes to first order.
  double m1 = 0.0, m2 = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    m1 += y1[n];
    m2 += y2[n];
  }
  m1 /= static_cast<double>(count);
  m2 /= static_cast<double>(count);
  std::vector<double> diff(count);
  double var = 0.0;
  for (std::size_t n = 0; n < count; ++n) {
    diff[n] = (y1[n] - m1) - (y2[n] - m2);
    var += diff[n] * diff[n];
  }
  const double rms = std::sqrt(var / static_cast<double>(count));
  const Crossings zc = count_crossings(diff, 0.25 * rms);
  if (zc.count < 2 || zc.last <= zc.first) {
    throw InsufficientDataError("calibrate_from_scan: scan spans less than one fringe period");
  }
  const double omega0 = kPi * static_cast<double>(zc.count - 1) / static_cast<double>(zc.last - zc.first);
  const double omega = refine_frequency(diff, omega0);

  std::complex<double> proj1{0.0, 0.0}, proj2{0.0, 0.0};
  for (std::size_t n = 0; n < count; ++n) {
    const auto e = std::polar(1.0, -omega * static_cast<double>(n));
    proj1 += (y1[n] - m1) * e;
    proj2 += (y2[n] - m2) * e;
  }
  const double half_n = 0.5 * static_cast<double>(count);

  const SampleGrid grid = make_grid(count, model.segments);
  model.p = Eigen::VectorXd::Zero(nparams);
  model.p[0] = m1;
  model.p[1] = std::abs(proj1) / half_n;
  model.p[2] = m2;
  model.p[3] = std::abs(proj2) / half_n;
  const double phi0 = std::arg(proj1);
  for (int s = 0; s < model.segments; ++s) {
    const auto b = static_cast<double>(grid.seg_begin[s]);
    const auto e = static_cast<double>(grid.seg_begin[s + 1]);
    model.p[model.phase_index(s, 0)] = phi0 + omega * 0.5 * (b + e - 1.0);
    model.p[model.phase_index(s, 1)] = omega * 0.5 * (e - b - 1.0);
  }

  double cost = sum_squares(model, grid, y1, y2);
  double lambda = 1e-3;
  int iterations = 0;
  Eigen::MatrixXd jtj(nparams, nparams);
  Eigen::VectorXd jtr(nparams);
  Eigen::VectorXd row1(nparams), row2(nparams);
  for (; iterations < opt.max_iterations; ++iterations) {
    jtj.setZero();
    jtr.setZero();
    for (std::size_t n = 0; n < count; ++n) {
      const int seg = grid.seg[n];
      const double tl = grid.local[n];
      const double tg = grid.global[n];
      const double ph = model.phase(seg, tl);
      const double c = std::cos(ph);
      const double s = std::sin(ph);
      const double e = model.envelope(tg);
      const double f1 = model.p[0] + model.p[1] * c;
      const double f2 = model.p[2] - model.p[3] * c;
      const double r1 = e * f1 - y1[n];
      const double r2 = e * f2 - y2[n];
      row1.setZero();
      row2.setZero();
      row1[0] = e;
      row1[1] = e * c;
      row2[2] = e;
      row2[3] = -e * c;
      double pw = 1.0;
      for (int k = 0; k <= model.degree; ++k) {
        row1[model.phase_index(seg, k)] = -e * model.p[1] * s * pw;
        row2[model.phase_index(seg, k)] = e * model.p[3] * s * pw;
        pw *= tl;
      }
      pw = tg;
      for (int j = 1; j <= model.env_degree; ++j) {
        row1[model.env_index(j)] = f1 * pw;
        row2[model.env_index(j)] = f2 * pw;
        pw *= tg;
      }
      jtj.selfadjointView<Eigen::Lower>().rankUpdate(row1);
      jtj.selfadjointView<Eigen::Lower>().rankUpdate(row2);
      jtr += row1 * r1 + row2 * r2;
    }
    jtj = jtj.selfadjointView<Eigen::Lower>();

    bool accepted = false;
    Eigen::VectorXd step;
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-30);
      step = damped.ldlt().solve(-jtr);
      FringeModel trial = model;
      trial.p += step;
      const double trial_cost = sum_squares(trial, grid, y1, y2);
      if (trial_cost <= cost) {
        model = trial;
        cost = trial_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;
    const double pscale = std::max(1.0, model.p.cwiseAbs().maxCoeff());
    if (step.cwiseAbs().maxCoeff() <= opt.step_tolerance * pscale) {
      ++iterations;
      break;
    }
  }

  if (model.p[1] < 0.0) {
    model.p[1] = -model.p[1];
    model.p[3] = -model.p[3];
    for (int s = 0; s < model.segments; ++s) model.p[model.phase_index(s, 0)] += kPi;
  }

  // mean phase advance per sample over the scan
  double advance = 0.0;
  double spans = 0.0;
  for (int s = 0; s < model.segments; ++s) {
    double seg_advance = 0.0;
    for (int k = 1; k <= model.degree; k += 2) seg_advance += 2.0 * model.p[model.phase_index(s, k)];
    advance += std::abs(seg_advance);
    spans += static_cast<double>(grid.seg_begin[s + 1] - grid.seg_begin[s] - 1);
  }
  const double mean_slope = advance / spans;
  const double gain = opt.amplitude_response ? opt.amplitude_response(mean_slope) : 1.0;
  if (!(gain > 0.0)) throw std::invalid_argument("calibrate_from_scan: amplitude response must be positive");

  CalibrationResult res;
  res.mean_out1 = model.p[0] * scale;
  res.mean_out2 = model.p[2] * scale;
  if (!(res.mean_out1 > 0.0) || !(res.mean_out2 > 0.0)) {
    throw InsufficientDataError("calibrate_from_scan: fitted output means are not positive");
  }
  res.v1 = std::clamp(std::abs(model.p[1]) / (model.p[0] * gain), 0.0, 1.0);
  res.v2 = std::clamp(std::abs(model.p[3]) / (model.p[2] * gain), 0.0, 1.0);
  res.detector_offsets = opt.dark_offsets;
  res.efficiency_ratio = res.mean_out2 / res.mean_out1;
  res.output_loss_ratio =
      res.efficiency_ratio * opt.nominal_efficiencies.first / opt.nominal_efficiencies.second;
  res.fit_residual = scale * std::sqrt(cost / static_cast<double>(2 * count));
  res.radians_per_sample = mean_slope;
  res.iterations = iterations;
  return res;
}

}  // namespace phaselock
