#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "phaselock/errors.hpp"
#include "phaselock/estimator.hpp"
#include "support.hpp"

using namespace phaselock;
using testing_support::Gen;
using testing_support::kPropertyCases;

namespace {

constexpr double kDeg = 180.0 / kPi;

WavelengthChannel channel(double v1, double v2) {
  WavelengthChannel c;
  c.input_power_w = 1.0;
  c.visibility_out1 = v1;
  c.visibility_out2 = v2;
  c.phase_offset_rad = 0.0;
  return c;
}

// Coupler outputs in the fringe convention (bright output 1 at zero phase),
// inverted with the lossless visibilities and mean levels of the coupler.
double coupler_oracle_phase(double phi, double t1, double t2, double mu) {
  const double m1 = t1 * t2 + (1 - t1) * (1 - t2);
  const double m2 = t1 * (1 - t2) + (1 - t1) * t2;
  const double s = 2.0 * std::sqrt(t1 * t2 * (1 - t1) * (1 - t2));
  const auto o = coupler_model(phi + kPi, t1, t2, mu);
  return std::acos(std::clamp((o.i1 * m2 - o.i2 * m1) / (s * (o.i1 + o.i2)), -1.0, 1.0));
}

// Same closed form with the arm-loss term's transmittances interchanged.
double swapped_form(double phi, double t1, double t2, double mu) {
  const double root = std::sqrt(t1 * t2 * (1 - t1) * (1 - t2));
  const double num = t1 * (1 - t1) * (1 - 2 * t2) * mu + 2 * std::sqrt(t1 * t2 * (1 - t1) * (1 - t2) * (1 - mu)) * std::cos(phi);
  return std::acos(std::clamp(num / (2 * root * (1 - t1 * mu)), -1.0, 1.0));
}

std::vector<FringeSample> synthetic_scan(std::size_t n, double fringes, double v1, double v2, double amp,
                                         double noise, std::uint64_t seed, double phase0 = 0.4) {
  Gen g(seed);
  std::vector<FringeSample> s(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double p = phase0 + 2.0 * kPi * fringes * static_cast<double>(k) / static_cast<double>(n);
    s[k].i1 = amp * (1.0 + v1 * std::cos(p)) + noise * amp * g.normal();
    s[k].i2 = amp * (1.0 - v2 * std::cos(p)) + noise * amp * g.normal();
  }
  return s;
}

}  // namespace

TEST_CASE("estimate_phase_eq1 reference values") {
  CHECK(estimate_phase_eq1(0.7, 0.7, 1.0, 1.0, 0.0) == doctest::Approx(kPi / 2));
  const double est = estimate_phase_eq1(1.0, 1.0, 1.0, 1.0, 0.01) * kDeg;
  CHECK(est == doctest::Approx(std::acos(0.01 / 1.99) * kDeg).epsilon(1e-14));
  CHECK(est == doctest::Approx(89.712).epsilon(1e-5));
  CHECK(90.0 - est == doctest::Approx(0.288).epsilon(2e-3));
  CHECK(estimate_phase_eq1(2.0, 0.0, 1.0, 1.0, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("estimate_phase_eq1 rejects degenerate inputs") {
  CHECK_THROWS_AS(estimate_phase_eq1(1.0, 1.0, 0.0, 1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(estimate_phase_eq1(1.0, 1.0, 1.0, 0.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(estimate_phase_eq1(0.0, 0.0, 1.0, 1.0, 0.0), UndefinedPhaseError);
}

TEST_CASE("estimate_phase_eq1 inverts the fringe for equal visibilities") {
  Gen g(21);
  for (int k = 0; k < kPropertyCases; ++k) {
    const double v = g.uniform(0.05, 1.0);
    const double mu = g.uniform(0.0, 0.5);
    const double phi = g.uniform(0.0, kPi);
    WavelengthChannel c = channel(v, v);
    c.input_power_w = g.uniform(1e-12, 1.0);
    const auto o = fringe_intensities(phi, c, LsdParams{mu, 0.0});
    const double est = estimate_phase_eq1(o.i1, o.i2, v, v, compensating_mu_out(mu));
    // arccos loses precision next to 0 and pi; compare cosines there
    if (phi > 1e-3 && phi < kPi - 1e-3) {
      CHECK(std::abs(est - phi) < 1e-9);
    } else {
      CHECK(std::abs(std::cos(est) - std::cos(phi)) < 1e-12);
    }
  }
}

TEST_CASE("estimate_phase_eq1 with unequal visibilities has a closed-form bias") {
  Gen g(22);
  for (int k = 0; k < kPropertyCases; ++k) {
    const double v1 = g.uniform(0.5, 1.0), v2 = g.uniform(0.5, 1.0);
    const auto o = fringe_intensities(kPi / 2, channel(v1, v2), LsdParams{});
    const double est = estimate_phase_eq1(o.i1, o.i2, v1, v2, 0.0);
    CHECK(std::cos(est) == doctest::Approx(0.5 * (1.0 / v2 - 1.0 / v1)).epsilon(1e-12));
    if (std::abs(v1 - v2) < 1e-12) CHECK(est == doctest::Approx(kPi / 2));
  }
  // the ends of the half-period are reached only through saturation when v1 > v2
  const auto top = fringe_intensities(0.0, channel(0.9, 0.8), LsdParams{});
  CHECK(estimate_phase_eq1(top.i1, top.i2, 0.9, 0.8, 0.0) == 0.0);
  const auto bottom = fringe_intensities(kPi, channel(0.9, 0.8), LsdParams{});
  const double arg = ((0.1 / 0.8) - (1.8 / 0.9)) / 1.9;
  CHECK(std::cos(estimate_phase_eq1(bottom.i1, bottom.i2, 0.9, 0.8, 0.0)) == doctest::Approx(arg));
}

TEST_CASE("estimate_phase_eq1 is monotone in the output ratio") {
  Gen g(23);
  for (int k = 0; k < 50; ++k) {
    const double v = g.uniform(0.3, 1.0);
    const double mu = g.uniform(0.0, 0.3);
    double prev = -1.0;
    for (double r = 0.0; r < 50.0; r += 0.05) {
      const double est = estimate_phase_eq1(1.0, r, v, v, mu);
      CHECK(est >= prev);
      prev = est;
    }
  }
}

TEST_CASE("arccos argument outside its domain saturates or throws in strict mode") {
  // i2 slightly negative from noise pushes the argument above 1
  CHECK(estimate_phase_eq1(1.0, -1e-3, 1.0, 1.0, 0.0) == 0.0);
  CHECK(estimate_phase_eq1(-1e-3, 1.0, 1.0, 1.0, 0.0) == doctest::Approx(kPi));
  CHECK_THROWS_AS(estimate_phase_eq1(1.0, -1e-3, 1.0, 1.0, 0.0, ArccosMode::kStrict), UndefinedPhaseError);
  CHECK_NOTHROW(estimate_phase_eq1(1.0, -1e-7, 1.0, 1.0, 0.0, ArccosMode::kStrict));
  Gen g(24);
  for (int k = 0; k < kPropertyCases; ++k) {
    const double i1 = g.uniform(-0.01, 1.0), i2 = g.uniform(-0.01, 1.0);
    if (i1 + i2 <= 0.0) continue;
    const double est = estimate_phase_eq1(i1, i2, g.uniform(0.5, 1.0), g.uniform(0.5, 1.0), g.uniform(0.0, 0.2));
    CHECK(est >= 0.0);
    CHECK(est <= kPi);
  }
}

TEST_CASE("compensating_mu_out") {
  CHECK(compensating_mu_out(0.0) == 0.0);
  CHECK(1.0 - compensating_mu_out(0.01) == doctest::Approx(1.0 / 0.99));
  CHECK_THROWS_AS(compensating_mu_out(1.0), std::invalid_argument);
}

TEST_CASE("predicted_phase_eq2 reference values") {
  for (double t1 : {0.2, 0.35, 0.5, 0.7}) {
    for (double t2 : {0.1, 0.35, 0.9}) {
      for (double phi = 0.01; phi < kPi; phi += 0.05) {
        CHECK(predicted_phase_eq2(phi, t1, t2, 0.0) == doctest::Approx(phi).epsilon(1e-9));
      }
    }
  }
  for (double t2 : {0.1, 0.35, 0.5, 0.9}) CHECK(predicted_phase_eq2(kPi / 2, 0.5, t2, 0.1) == kPi / 2);
  const double est = predicted_phase_eq2(kPi / 2, 0.35, 0.35, 0.01) * kDeg;
  CHECK(est == doctest::Approx(89.9138).epsilon(1e-6));
  // numerator and denominator of the closed form, evaluated by hand
  const double num = 0.35 * 0.65 * 0.3 * 0.01;
  const double den = 2.0 * 0.35 * 0.65 * (1.0 - 0.0035);
  CHECK(num == doctest::Approx(6.825e-4));
  CHECK(den == doctest::Approx(0.45341).epsilon(1e-5));
  CHECK(est == doctest::Approx(std::acos(num / den) * kDeg).epsilon(1e-12));
  CHECK_THROWS_AS(predicted_phase_eq2(1.0, 0.0, 0.5, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(predicted_phase_eq2(1.0, 0.5, 1.0, 0.0), std::invalid_argument);
}

TEST_CASE("predicted_phase_eq2 against inversion of the coupler model") {
  // equal splitters: the closed form and the direct inversion coincide
  for (double t = 0.1; t < 0.95; t += 0.05) {
    for (double mu = 0.0; mu <= 0.3; mu += 0.02) {
      for (double phi = 0.05; phi < kPi - 0.05; phi += 0.1) {
        CHECK(std::abs(predicted_phase_eq2(phi, t, t, mu) - coupler_oracle_phase(phi, t, t, mu)) < 1e-9);
      }
    }
  }
  // unequal splitters: the inversion matches the closed form only with the
  // transmittances of the arm-loss term interchanged
  double worst = 0.0;
  for (double t1 = 0.1; t1 < 0.95; t1 += 0.1) {
    for (double t2 = 0.1; t2 < 0.95; t2 += 0.1) {
      for (double mu = 0.0; mu <= 0.3; mu += 0.05) {
        for (double phi = 0.1; phi < kPi - 0.1; phi += 0.2) {
          const double oracle = coupler_oracle_phase(phi, t1, t2, mu);
          CHECK(std::abs(swapped_form(phi, t1, t2, mu) - oracle) < 1e-9);
          worst = std::max(worst, std::abs(predicted_phase_eq2(phi, t1, t2, mu) - oracle));
        }
      }
    }
  }
  MESSAGE("largest closed-form vs coupler-inversion difference for unequal splitters: " << worst * kDeg << " deg");
  CHECK(worst > 1e-6);
}

TEST_CASE("balanced first splitter cancels arm loss at quadrature") {
  for (double mu = 0.0; mu <= 0.1; mu += 0.001) {
    for (double t2 = 0.05; t2 < 1.0; t2 += 0.05) {
      CHECK(std::abs(predicted_phase_eq2(kPi / 2, 0.5, t2, mu) - kPi / 2) * kDeg < 1e-12);
    }
  }
}

TEST_CASE("relative_drift_eq3") {
  CHECK(relative_drift_eq3(810e-9, 840e-9, 1e-3, 1e-3, 0.0, 0.0) == 0.0);
  CHECK(relative_drift_eq3(810e-9, 840e-9, 0.0, 0.0, 1e-12, 3e-12) == 0.0);
  const double r = relative_drift_eq3(810e-9, 840e-9, 0.0, 1e-3, 0.0, 1e-12);
  CHECK(r == doctest::Approx(-2.0 * kPi * 1e-3 * 1e-12 / (840e-9 * 840e-9)));
  CHECK(r == doctest::Approx(-8.905e-3).epsilon(1e-3));
  CHECK(r * kDeg == doctest::Approx(-0.5102).epsilon(1e-3));
  CHECK_THROWS_AS(relative_drift_eq3(0.0, 840e-9, 0.0, 0.0, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("calibration recovers a noiseless fringe exactly") {
  const auto scan = synthetic_scan(2000, 5.0, 0.996, 0.996, 1e-9, 0.0, 1);
  const auto r = calibrate_from_scan(scan);
  CHECK(std::abs(r.v1 - 0.996) < 1e-9);
  CHECK(std::abs(r.v2 - 0.996) < 1e-9);
  CHECK(r.efficiency_ratio == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.fit_residual >= 0.0);
  CHECK(r.fit_residual < 1e-15);
  CHECK(r.radians_per_sample == doctest::Approx(2.0 * kPi * 5.0 / 2000.0).epsilon(1e-9));

  const auto uneven = calibrate_from_scan(synthetic_scan(1500, 3.3, 0.97, 0.91, 2.0, 0.0, 1, 2.0));
  CHECK(std::abs(uneven.v1 - 0.97) < 1e-9);
  CHECK(std::abs(uneven.v2 - 0.91) < 1e-9);
}

TEST_CASE("calibration handles offsets, output gain, envelope and wandering phase") {
  const std::size_t n = 3000;
  std::vector<FringeSample> s(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / n;
    const double p = 1.0 + 2.0 * kPi * 6.0 * t + 2.4 * t * t - 1.3 * t * t * t;  // non-linear sweep
    const double env = 1.0 + 0.05 * (2.0 * t - 1.0);
    s[k].i1 = 0.2 + env * (1.0 + 0.95 * std::cos(p));
    s[k].i2 = 0.1 + 0.9 * env * (1.0 - 0.93 * std::cos(p));
  }
  CalibrationOptions o;
  o.dark_offsets = {0.2, 0.1};
  o.phase_poly_degree = 3;
  o.envelope_poly_degree = 1;
  o.phase_segments = 2;
  const auto r = calibrate_from_scan(s, o);
  CHECK(std::abs(r.v1 - 0.95) < 1e-6);
  CHECK(std::abs(r.v2 - 0.93) < 1e-6);
  CHECK(r.efficiency_ratio == doctest::Approx(0.9).epsilon(1e-6));
}

TEST_CASE("calibration at one percent noise stays within 1e-3 over seeds") {
  double sum1 = 0.0, sum2 = 0.0, ss1 = 0.0, ss2 = 0.0;
  const int seeds = 100;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto r = calibrate_from_scan(synthetic_scan(800, 4.0, 0.996, 0.996, 1.0, 0.01, 1000 + seed));
    sum1 += r.v1 - 0.996;
    sum2 += r.v2 - 0.996;
    ss1 += (r.v1 - 0.996) * (r.v1 - 0.996);
    ss2 += (r.v2 - 0.996) * (r.v2 - 0.996);
  }
  CHECK(std::abs(sum1 / seeds) < 1e-3);
  CHECK(std::abs(sum2 / seeds) < 1e-3);
  CHECK(std::sqrt(ss1 / seeds) < 1e-3);
  CHECK(std::sqrt(ss2 / seeds) < 1e-3);
}

TEST_CASE("calibration refuses scans shorter than a fringe") {
  CHECK_THROWS_AS(calibrate_from_scan(synthetic_scan(400, 0.4, 0.99, 0.99, 1.0, 0.0, 1)), InsufficientDataError);
  CHECK_THROWS_AS(calibrate_from_scan(std::vector<FringeSample>(3)), InsufficientDataError);
}
