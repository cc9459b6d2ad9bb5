#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <sstream>
#include <thread>
#include <vector>

#include "phaselock/analysis.hpp"
#include "phaselock/errors.hpp"
#include "phaselock/mzi_model.hpp"
#include "support.hpp"

using namespace phaselock;
using testing_support::Gen;

namespace {

TimeSeries series(std::vector<double> v, double rate = 1.0) { return TimeSeries{rate, std::move(v), "deg"}; }

std::vector<double> ramp(std::size_t n, double rate_per_s, double fs) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = 3.0 + rate_per_s * static_cast<double>(i) / fs;
  return v;
}

}  // namespace

TEST_CASE("Allan deviation of a constant is zero") {
  const auto c = allan_deviation(series(std::vector<double>(500, 0.1)), {1.0, 2.0, 10.0, 100.0, 250.0});
  for (const auto& d : c.deviation) {
    REQUIRE(d.has_value());
    CHECK(*d == 0.0);
  }
}

TEST_CASE("Allan deviation of a linear drift is d tau over root two") {
  for (double fs : {1.0, 16.0}) {
    const double d = 0.0741;
    const auto s = series(ramp(20000, d, fs), fs);
    const auto c = allan_deviation(s, default_taus(s));
    for (std::size_t k = 0; k < c.tau_s.size(); ++k) {
      REQUIRE(c.deviation[k].has_value());
      const double want = d * c.tau_s[k] / std::sqrt(2.0);
      CHECK(std::abs(*c.deviation[k] - want) <= 1e-9 * want);
    }
  }
}

TEST_CASE("Allan deviation of white noise falls as one over root tau") {
  const double sigma = 0.3, fs = 4.0;
  const std::vector<double> taus{0.25, 1.0, 5.0, 25.0, 100.0};
  std::vector<double> acc(taus.size(), 0.0);
  const std::size_t n = 8000;
  const int seeds = 50;
  std::vector<std::size_t> terms;
  for (int seed = 0; seed < seeds; ++seed) {
    Gen g(500 + seed);
    const auto c = allan_deviation(series(g.white(n, sigma), fs), taus);
    for (std::size_t k = 0; k < taus.size(); ++k) acc[k] += (*c.deviation[k]) * (*c.deviation[k]);
    terms = c.terms;
  }
  for (std::size_t k = 0; k < taus.size(); ++k) {
    if (terms[k] < 100) continue;
    const double want = sigma / std::sqrt(fs * taus[k]);
    CHECK(std::sqrt(acc[k] / seeds) == doctest::Approx(want).epsilon(0.05));
  }
}

TEST_CASE("Allan deviation grid rules") {
  const auto s = series(std::vector<double>(100, 1.0), 16.0);
  CHECK_THROWS_AS(allan_deviation(s, {0.1}), std::invalid_argument);
  CHECK_NOTHROW(allan_deviation(s, {0.125, 3.0}));
  const auto c = allan_deviation(s, {3.125, 3.1875});  // 50 and 51 samples
  CHECK(c.deviation[0].has_value());
  CHECK(c.terms[0] == 1);
  CHECK_FALSE(c.deviation[1].has_value());
  CHECK_THROWS_AS(allan_deviation(series({1.0}), {1.0}), InsufficientDataError);
  CHECK_THROWS_AS(allan_deviation(TimeSeries{0.0, {1.0, 2.0}, "deg"}, {1.0}), std::invalid_argument);
}

TEST_CASE("default tau grid") {
  const auto taus = default_taus(series(std::vector<double>(3600, 0.0)));
  REQUIRE(!taus.empty());
  CHECK(taus.front() == 2.0);
  CHECK(taus.back() <= 720.0);
  CHECK(taus.back() >= 600.0);
  for (std::size_t k = 1; k < taus.size(); ++k) CHECK(taus[k] > taus[k - 1]);
  // about ten per decade over 2..720 s, fewer at the short end where
  // neighbouring points snap to the same sample count
  CHECK(taus.size() >= 22);
  CHECK(taus.size() <= 27);
}

TEST_CASE("Allan deviation ignores offsets and time direction") {
  Gen g(51);
  for (int k = 0; k < 20; ++k) {
    std::vector<double> x = g.white(1000, 1.0);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.01 * static_cast<double>(i);
    std::vector<double> shifted = x, reversed(x.rbegin(), x.rend());
    const double c = g.uniform(-1e3, 1e3);
    for (double& v : shifted) v += c;
    const std::vector<double> taus{1.0, 3.0, 17.0, 200.0};
    const auto a = allan_deviation(series(x), taus);
    const auto b = allan_deviation(series(shifted), taus);
    const auto r = allan_deviation(series(reversed), taus);
    for (std::size_t i = 0; i < taus.size(); ++i) {
      CHECK(*b.deviation[i] == doctest::Approx(*a.deviation[i]).epsilon(1e-9));
      CHECK(*r.deviation[i] == doctest::Approx(*a.deviation[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("PSD of a pure tone integrates to half the squared amplitude") {
  const double fs = 16.0, a = 0.7;
  const std::size_t n = 16384, len = 2048;
  const double f0 = 100.0 * fs / len;  // on a bin
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = a * std::sin(2.0 * kPi * f0 * static_cast<double>(i) / fs + 0.3);
  const auto p = power_spectral_density(series(x, fs), len, 0.5);
  const double df = p.frequency_hz[1];
  double peak = 0.0;
  for (std::size_t k = 95; k <= 105; ++k) peak += p.density[k] * df;
  CHECK(peak == doctest::Approx(a * a / 2).epsilon(0.01));
  CHECK(p.window == "hann");
  CHECK(p.segments == (n - len) / (len / 2) + 1);
}

TEST_CASE("PSD of white noise integrates to its variance") {
  for (int seed = 0; seed < 10; ++seed) {
    Gen g(600 + seed);
    const double sigma = 1.3, fs = 2.0;
    const auto x = g.white(32768, sigma);
    const auto p = power_spectral_density(series(x, fs), 1024, 0.5);
    double integral = 0.0;
    for (double d : p.density) integral += d * p.frequency_hz[1];
    CHECK(integral == doctest::Approx(sigma * sigma).epsilon(0.05));
    for (std::size_t k = 1; k < p.frequency_hz.size(); ++k) CHECK(p.frequency_hz[k] > p.frequency_hz[k - 1]);
    for (double d : p.density) CHECK(d >= 0.0);
  }
}

TEST_CASE("PSD of zeros is zero and bad arguments are rejected") {
  const auto p = power_spectral_density(series(std::vector<double>(256, 0.0)), 64, 0.5);
  for (double d : p.density) CHECK(d == 0.0);
  CHECK_THROWS_AS(power_spectral_density(series(std::vector<double>(10, 0.0)), 11, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(power_spectral_density(series(std::vector<double>(10, 0.0)), 4, 0.95), std::invalid_argument);
  CHECK_THROWS_AS(power_spectral_density(series(std::vector<double>(10, 0.0)), 4, -0.1), std::invalid_argument);
}

TEST_CASE("block-averaged white noise has a flat spectrum") {
  const std::size_t factor = 16, len = 256;
  const double fs = 16.0, sigma = 1.0;
  std::vector<double> mean_density;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    Gen g(700 + seed);
    const auto slow = block_average(series(g.white(factor * 32768, sigma), fs), factor);
    const auto p = power_spectral_density(slow, len, 0.5);
    if (mean_density.empty()) mean_density.assign(p.density.size(), 0.0);
    for (std::size_t k = 0; k < p.density.size(); ++k) mean_density[k] += p.density[k] / seeds;
  }
  // block means of independent samples are independent: flat at 2 var / fs_out
  const double level = 2.0 * sigma * sigma / factor / (fs / factor);
  const std::size_t nyquist_bin = len / 2;
  for (std::size_t k = 1; k < nyquist_bin / 10; ++k) CHECK(mean_density[k] == doctest::Approx(level).epsilon(0.1));
}

TEST_CASE("density lookup picks the nearest bin") {
  const auto p = power_spectral_density(series(Gen(1).white(4096, 1.0), 1.0), 800, 0.5);
  CHECK(density_at(p, 1.0e-3) == p.density[1]);  // bins at 1.25e-3 Hz spacing
  CHECK(density_at(p, 2.4e-3) == p.density[2]);
  CHECK_THROWS_AS(density_at(p, 0.7), std::out_of_range);
  CHECK(default_segment_length(3600) == 800);
  CHECK(default_segment_length(54000) == 12000);
}

TEST_CASE("block averaging") {
  const auto s = series({1, 2, 3, 4, 5, 6, 7}, 16.0);
  const auto same = block_average(s, 1);
  CHECK(same.values == s.values);
  CHECK(same.sample_rate_hz == 16.0);
  const auto two = block_average(s, 2);
  CHECK(two.values == std::vector<double>{1.5, 3.5, 5.5});
  CHECK(two.sample_rate_hz == 8.0);
  const auto one_hz = block_average(series(std::vector<double>(16 * 100, 2.0), 16.0), 16);
  CHECK(one_hz.values.size() == 100);
  CHECK(one_hz.sample_rate_hz == 1.0);
  CHECK_THROWS_AS(block_average(s, 8), EmptySeriesError);
  CHECK_THROWS_AS(block_average(s, 0), std::invalid_argument);
  const auto noise = block_average(series(Gen(5).white(16 * 20000, 2.0), 16.0), 16);
  CHECK(std::sqrt(testing_support::variance(noise.values)) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("windowed standard deviation") {
  CHECK(windowed_std(series(std::vector<double>(50, 4.2))) < 1e-12);
  for (std::size_t n : {2u, 3u, 10u, 1000u}) {
    std::vector<double> alt(n);
    for (std::size_t i = 0; i < n; ++i) alt[i] = (i % 2 ? -0.5 : 0.5);
    const double m = n % 2 ? 0.5 / static_cast<double>(n) : 0.0;
    double ss = 0.0;
    for (double v : alt) ss += (v - m) * (v - m);
    CHECK(windowed_std(series(alt)) == doctest::Approx(std::sqrt(ss / static_cast<double>(n - 1))));
    if (n % 2 == 0) CHECK(windowed_std(series(alt)) == doctest::Approx(0.5 * std::sqrt(n / (n - 1.0))));
  }
  // 16 Hz input is averaged to 1 Hz first
  std::vector<double> fast(16 * 10);
  for (std::size_t i = 0; i < fast.size(); ++i) fast[i] = static_cast<double>(i / 16) + (i % 2 ? 1.0 : -1.0);
  CHECK(windowed_std(series(fast, 16.0)) == doctest::Approx(windowed_std(series({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}))));
  // detrending removes a line
  CHECK(windowed_std(series(ramp(100, 0.5, 1.0)), true) < 1e-12);
  CHECK(windowed_std(series(ramp(100, 0.5, 1.0)), false) > 10.0);
}

TEST_CASE("metrics are pure and safe to call concurrently") {
  const auto s = series(Gen(9).white(20000, 1.0), 16.0);
  const auto p0 = power_spectral_density(s, 1024, 0.5);
  const auto a0 = allan_deviation(s, default_taus(s));
  std::vector<PsdCurve> ps(8);
  std::vector<AllanCurve> as(8);
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&, t] {
        ps[t] = power_spectral_density(s, 1024, 0.5);
        as[t] = allan_deviation(s, default_taus(s));
      });
    }
  }
  for (int t = 0; t < 8; ++t) {
    CHECK(ps[t].density == p0.density);
    CHECK(as[t].deviation == a0.deviation);
  }
}

TEST_CASE("curve CSV output") {
  const auto s = series(ramp(64, 1.0, 1.0));
  std::ostringstream a, p;
  write_allan_csv(allan_deviation(s, {1.0, 2.0, 40.0}), a, "test");
  write_psd_csv(power_spectral_density(s, 16, 0.5), p);
  std::istringstream ain(a.str());
  std::string line;
  std::getline(ain, line);
  CHECK(line.rfind("# ", 0) == 0);
  std::getline(ain, line);
  CHECK(line == "tau_s,adev_deg");
  int rows = 0;
  while (std::getline(ain, line)) ++rows;
  CHECK(rows == 2);  // 40 s is too long for 64 samples
  CHECK(p.str().find("frequency_hz,psd_deg2_per_hz\n") != std::string::npos);
}
