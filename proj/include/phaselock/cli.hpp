#pragma once

// Command-line front end: presets, run, analyze, sweep.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "phaselock/config.hpp"
#include "phaselock/simloop.hpp"

namespace phaselock::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // simulation could not complete
inline constexpr int kExitConfig = 2;   // usage, config or schema error
inline constexpr int kExitIo = 3;

inline constexpr double kFullDurationS = 15.0 * 3600.0;

struct Preset {
  std::string name;
  std::string description;
  ScenarioConfig config;
};

std::vector<std::string> preset_names();
/// Throws std::out_of_range for unknown names.
Preset preset(const std::string& name, bool full_duration = false);

/// Headline numbers of one run.
struct RunSummary {
  double duration_s = 0.0;
  std::size_t samples = 0;
  double sample_rate_hz = 0.0;
  double ref_std_deg = 0.0;        // true reference phase, 1 Hz
  double ref_mean_error_deg = 0.0;  // mean reference phase minus target, second half
  double sig_std_deg = 0.0;         // true signal phase, 1 Hz
  double sig_est_std_deg = 0.0;     // reconstructed signal phase, 1 Hz; NaN if unavailable
  std::uint64_t saturation_events = 0;
  std::optional<double> lock_shift_deg;  // across the intensity events
};

RunSummary summarize(const RunRecord& rec);

/// Mean of the fast-logged reference phase over the second half, minus target.
double lock_error_deg(const RunRecord& rec);

/// Entry point; returns the process exit code.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace phaselock::cli
