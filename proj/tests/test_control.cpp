#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "phaselock/control.hpp"
#include "phaselock/mzi_model.hpp"
#include "support.hpp"

using namespace phaselock;
using testing_support::Gen;
using testing_support::kPropertyCases;

namespace {

// zero crossing of err(phi) on (lo, hi) by bisection
template <class F>
double bisect(F err, double lo, double hi) {
  double flo = err(lo);
  for (int k = 0; k < 200; ++k) {
    const double mid = 0.5 * (lo + hi);
    const double fm = err(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

OutputIntensities fringe(double phi, double p, double v) {
  WavelengthChannel c;
  c.input_power_w = p;
  c.visibility_out1 = c.visibility_out2 = v;
  c.phase_offset_rad = 0.0;
  return fringe_intensities(phi, c, LsdParams{});
}

}  // namespace

TEST_CASE("setpoint fraction") {
  CHECK(setpoint_fraction(kPi / 2, 0.3, 0.9) == doctest::Approx(0.5));
  CHECK(setpoint_fraction(0.0, 1.0, 1.0) == doctest::Approx(1.0));
  CHECK(setpoint_fraction(kPi / 3, 0.996, 0.996) == doctest::Approx(0.749));
  CHECK_THROWS_AS(setpoint_fraction(1.0, 1.1, 0.5), std::invalid_argument);
}

TEST_CASE("setpoint fraction matches the fringe it is meant for") {
  Gen g(41);
  for (int k = 0; k < kPropertyCases; ++k) {
    const double v1 = g.uniform(0.0, 1.0), v2 = g.uniform(0.0, 1.0), phi = g.uniform(0.0, kPi);
    WavelengthChannel c;
    c.input_power_w = 1.0;
    c.visibility_out1 = v1;
    c.visibility_out2 = v2;
    c.phase_offset_rad = 0.0;
    const auto o = fringe_intensities(phi, c, LsdParams{});
    CHECK(setpoint_fraction(phi, v1, v2) == doctest::Approx(o.i1 / (o.i1 + o.i2)).epsilon(1e-12));
  }
}

TEST_CASE("adaptive error signal") {
  CHECK(error_signal_adaptive(0.3, 0.3, 0.5) == 0.0);
  CHECK(error_signal_adaptive(0.6, 0.4, 0.5, {0.1, 0.0}, {1.0, 1.0}) == doctest::Approx(0.05));
  CHECK(error_signal_adaptive(0.6, 0.4, 0.5, {0.0, 0.0}, {2.0, 1.0}) == doctest::Approx(0.3 - 0.5 * 0.7));
  CHECK_THROWS_AS(error_signal_adaptive(1.0, 1.0, 0.5, {0.0, 0.0}, {0.0, 1.0}), std::invalid_argument);
  Gen g(42);
  for (int k = 0; k < kPropertyCases; ++k) {
    const double i1 = g.uniform(0.0, 1.0), i2 = g.uniform(0.0, 1.0), f = g.uniform(0.0, 1.0);
    const double s = g.uniform(1e-3, 1e3);
    CHECK(error_signal_adaptive(s * i1, s * i2, f) == doctest::Approx(s * error_signal_adaptive(i1, i2, f)));
  }
}

TEST_CASE("adaptive lock point does not move with global intensity") {
  Gen g(43);
  for (int k = 0; k < 100; ++k) {
    const double target = g.uniform(0.3, kPi - 0.3);
    const double v = g.uniform(0.5, 1.0);
    const double f = setpoint_fraction(target, v, v);
    const double scale = g.uniform(0.05, 20.0);
    auto err = [&](double s) {
      return [&, s](double phi) {
        const auto o = fringe(phi, s, v);
        return error_signal_adaptive(o.i1, o.i2, f);
      };
    };
    const double a = bisect(err(1.0), target - 0.29, target + 0.29);
    const double b = bisect(err(scale), target - 0.29, target + 0.29);
    CHECK(a == doctest::Approx(target).epsilon(1e-12));
    CHECK(std::abs(a - b) < 1e-12);
  }
}

TEST_CASE("constant setpoint lock moves under a global intensity drop") {
  CHECK(error_signal_constant(0.45, 0.45) == 0.0);
  CHECK(error_signal_constant(0.5, 0.45) == doctest::Approx(0.05));
  const double p = 1.0, v = 0.986;
  const double setpoint = fringe(kPi / 2, p, v).i1;
  const auto dropped = fringe(kPi / 2, 0.9 * p, v);
  CHECK(error_signal_constant(dropped.i1, setpoint) != 0.0);
  for (double k : {0.9, 0.95, 1.05}) {
    auto err = [&](double phi) { return error_signal_constant(fringe(phi, k * p, v).i1, setpoint); };
    const double lock = bisect(err, 0.1, kPi - 0.1);
    CHECK(std::cos(lock) == doctest::Approx((2.0 * setpoint / (k * p) - 1.0) / v).epsilon(1e-10));
    CHECK(std::abs(lock - kPi / 2) > 1e-3);
  }
}

TEST_CASE("two detectors halve the error variance") {
  // equal independent noise on both outputs at quadrature; both errors have
  // the same slope dI1/dphi there, so the variance ratio is the SNR gain
  Gen g(44);
  const double p = 1.0, v = 0.986, sigma = 1e-3;
  const auto o = fringe(kPi / 2, p, v);
  std::vector<double> single, pair;
  for (int k = 0; k < 100000; ++k) {
    const double i1 = o.i1 + sigma * g.normal();
    const double i2 = o.i2 + sigma * g.normal();
    single.push_back(error_signal_constant(i1, o.i1));
    pair.push_back(error_signal_adaptive(i1, i2, 0.5));
  }
  const double ratio = testing_support::variance(single) / testing_support::variance(pair);
  CHECK(ratio == doctest::Approx(2.0).epsilon(0.1));
  CHECK(testing_support::variance(pair) == doctest::Approx(sigma * sigma / 2).epsilon(0.05));
}

TEST_CASE("PID law") {
  PidGains g;
  g.kp = 2.0;
  ControllerState s;
  CHECK(pid_step(0.3, s, g, 1e-4) == doctest::Approx(0.6));

  g = PidGains{};
  ControllerState hold;
  hold.integrator = 1.7;
  g.ki = 5.0;
  for (int k = 0; k < 100; ++k) CHECK(pid_step(0.0, hold, g, 1e-3) == 1.7);

  g = PidGains{};
  g.kp = 0.5;
  g.ki = 3.0;
  ControllerState ramp;
  const double dt = 1e-3, e = 0.2;
  double u = 0.0;
  for (int k = 0; k < 1000; ++k) u = pid_step(e, ramp, g, dt);
  CHECK(u == doctest::Approx(g.kp * e + g.ki * e * 1.0).epsilon(1e-12));

  g = PidGains{};
  g.kd = 0.01;
  ControllerState d;
  pid_step(0.0, d, g, 1e-3);
  CHECK(pid_step(1e-3, d, g, 1e-3) == doctest::Approx(0.01));
  CHECK_THROWS_AS(pid_step(0.0, d, g, 0.0), std::invalid_argument);
}

TEST_CASE("integrator never leaves the output range") {
  Gen g(45);
  for (int k = 0; k < 50; ++k) {
    PidGains gains;
    gains.kp = g.uniform(-10, 10);
    gains.ki = g.uniform(-1e4, 1e4);
    gains.kd = g.uniform(-1e-3, 1e-3);
    gains.output_max = g.uniform(0.1, 30.0);
    gains.output_min = -g.uniform(0.1, 30.0);
    ControllerState s;
    for (int n = 0; n < 2000; ++n) {
      const double u = pid_step(g.uniform(-1.0, 1.0) * (g.coin() ? 1e3 : 1.0), s, gains, 1e-4);
      CHECK(s.integrator >= gains.output_min);
      CHECK(s.integrator <= gains.output_max);
      CHECK(u >= gains.output_min);
      CHECK(u <= gains.output_max);
    }
  }
}

TEST_CASE("fiber stretcher") {
  StretcherModel m;
  CHECK(stretcher_step(0.0, m, 1e-4) == 0.0);
  CHECK(m.gain() == doctest::Approx(3.818e-6).epsilon(1e-3));
  CHECK(m.path_range / m.gain() == doctest::Approx(28.8).epsilon(1e-3));

  StretcherModel dc;
  double path = 0.0;
  for (int k = 0; k < 20000; ++k) path = stretcher_step(0.11, dc, 1e-5);
  CHECK(path == doctest::Approx(420e-9).epsilon(1e-12));
  CHECK(path_to_phase(path, 840e-9) == doctest::Approx(kPi).epsilon(1e-12));

  const double tau = 1.0 / (2.0 * kPi * 1e3);
  CHECK(tau == doctest::Approx(159.2e-6).epsilon(1e-3));
  for (int steps : {1, 7, 100}) {
    StretcherModel s;
    double y = 0.0;
    for (int k = 0; k < steps; ++k) y = stretcher_step(1.0, s, tau / steps);
    CHECK(y / s.gain() == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));
  }

  StretcherModel clamp;
  for (int k = 0; k < 1000; ++k) stretcher_step(100.0, clamp, 1e-3);
  CHECK(clamp.filtered_path == clamp.path_range);
  CHECK(clamp.clamped);
}
