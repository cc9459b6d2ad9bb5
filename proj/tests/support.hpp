#pragma once

// Shared helpers for the unit tests: a seeded case generator for property
// checks and a few statistics.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace testing_support {

inline constexpr int kPropertyCases = 400;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  bool coin() { return integer(0, 1) == 1; }
  // fraction strictly inside (lo, hi), never the endpoints
  double open_fraction(double lo = 0.0, double hi = 1.0) {
    double x = uniform(lo, hi);
    while (x <= lo || x >= hi) x = uniform(lo, hi);
    return x;
  }
  std::vector<double> white(std::size_t n, double sigma) {
    std::vector<double> v(n);
    for (auto& x : v) x = sigma * normal();
    return v;
  }

 private:
  std::mt19937_64 engine_;
};

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace testing_support
