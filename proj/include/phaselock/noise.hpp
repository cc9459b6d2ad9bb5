#pragma once

// Stochastic environment and the detection chain.

#include <cstdint>
#include <random>

namespace phaselock {

/// One pseudo-random stream. Every noise source owns its own stream, derived
/// from the master seed and a fixed source id, so the draws a source sees do
/// not depend on what other sources consumed.
class RandomStream {
 public:
  RandomStream(std::uint64_t master_seed, std::uint64_t stream_id);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  std::int64_t poisson(double mean);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Stable ids; changing one changes every stored reference run.
enum class StreamId : std::uint64_t {
  kOpdDrift = 1,
  kIntensityDrift = 2,
  kWavelengthSignalDrift = 3,
  kWavelengthReferenceDrift = 4,
  kDetectorRef1 = 11,
  kDetectorRef2 = 12,
  kDetectorSig1 = 13,
  kDetectorSig2 = 14,
  kCalibrationScan = 101,
};

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id);

// ---------------------------------------------------------------------------
// Drift processes
// ---------------------------------------------------------------------------

struct DriftProcess {
  double linear_rate = 0.0;  // unit/s
  double ou_sigma = 0.0;     // stationary std, unit
  double ou_tau = 1.0;       // s
};

struct DriftConfig {
  DriftProcess opd;                   // m
  DriftProcess intensity;             // dimensionless, around 1
  DriftProcess wavelength_signal;     // m
  DriftProcess wavelength_reference;  // m
};

/// A drifting quantity kept as its parts so the OU relaxation never pulls the
/// deterministic ramp back toward zero.
struct DriftComponent {
  double base = 0.0;
  double ramp = 0.0;
  double fluctuation = 0.0;

  double value() const { return base + ramp + fluctuation; }
};

struct EnvironmentState {
  DriftComponent opd;                  // path difference, m
  DriftComponent intensity{1.0, 0.0, 0.0};
  DriftComponent wavelength_offset_s;  // m
  DriftComponent wavelength_offset_r;  // m

  double opd_m() const { return opd.value(); }
  double intensity_scale() const { return intensity.value() > 0.0 ? intensity.value() : 0.0; }
};

/// Exact one-step transition of an Ornstein-Uhlenbeck process:
/// x <- decay * x + noise_std * N(0, 1).
struct OuTransition {
  double decay = 1.0;
  double noise_std = 0.0;
};

OuTransition ou_transition(double dt, double tau, double sigma);

/// Composition of two transitions applied in sequence (first a, then b).
OuTransition compose(const OuTransition& a, const OuTransition& b);

struct DriftStreams {
  explicit DriftStreams(std::uint64_t master_seed);

  RandomStream opd;
  RandomStream intensity;
  RandomStream wavelength_s;
  RandomStream wavelength_r;
};

/// Advances the environment with precomputed per-process transitions for a
/// fixed time step. Processes with zero sigma draw nothing.
class DriftIntegrator {
 public:
  DriftIntegrator(const DriftConfig& cfg, double dt);

  void advance(EnvironmentState& state, DriftStreams& streams) const;

 private:
  struct Step {
    double ramp_increment = 0.0;
    OuTransition ou;
    bool stochastic = false;
  };
  static Step make(const DriftProcess& p, double dt);

  Step opd_, intensity_, wavelength_s_, wavelength_r_;
};

/// One environment update of length dt.
EnvironmentState drift_step(EnvironmentState state, const DriftConfig& cfg, double dt, DriftStreams& streams);

void validate(const DriftConfig& cfg);

// ---------------------------------------------------------------------------
// Detectors
// ---------------------------------------------------------------------------

enum class DetectorMode { kAnalog, kPhotonCounting };

struct DetectorModel {
  DetectorMode mode = DetectorMode::kAnalog;
  double nep = 0.0;              // W/sqrt(Hz)
  double bandwidth_hz = 1e3;
  double offset_w = 0.0;
  double efficiency = 1.0;
  double dark_rate = 0.0;        // counts/s
  double background_rate = 0.0;  // counts/s, reference crosstalk
  double photon_energy_j = 0.0;
  double adc_volts_per_watt = 1.0;

  /// Per-sample noise std of an analog reading, nep * sqrt(bandwidth).
  double noise_std() const;
};

void validate(const DetectorModel& det);

/// Single analog reading: efficiency * power + offset + N(0, noise_std^2).
/// Bandwidth filtering is the caller's concern; dt only documents the
/// integration window the reading stands for.
double detector_sample(double power_w, const DetectorModel& det, double dt, RandomStream& rng);

/// Poisson count over dt with mean (efficiency * power / E + dark + background) * dt.
std::int64_t photon_counts(double power_w, const DetectorModel& det, double dt, RandomStream& rng);

/// First-order low-pass realized as an exponential integrator:
/// y <- alpha * y + (1 - alpha) * x with alpha = exp(-dt / tau).
class FirstOrderFilter {
 public:
  FirstOrderFilter() = default;
  FirstOrderFilter(double cutoff_hz, double dt);

  double step(double x);
  void reset(double y) {
    y_ = y;
    primed_ = true;
  }
  double value() const { return y_; }
  double alpha() const { return alpha_; }

 private:
  double alpha_ = 0.0;
  double y_ = 0.0;
  bool primed_ = false;
};

/// Analog detector inside the control loop. The noiseless photocurrent is
/// low-passed at the detector bandwidth; additive noise is an OU process with
/// stationary std nep*sqrt(B) whose equivalent noise bandwidth equals B, so the
/// low-frequency density is the NEP itself.
class AnalogDetector {
 public:
  AnalogDetector(const DetectorModel& model, double dt, std::uint64_t master_seed, StreamId stream);

  double step(double power_w);
  const DetectorModel& model() const { return model_; }
  const FirstOrderFilter& filter() const { return signal_; }

 private:
  DetectorModel model_;
  FirstOrderFilter signal_;
  OuTransition noise_step_;
  double noise_ = 0.0;
  bool noisy_ = false;
  RandomStream rng_;
};

// ---------------------------------------------------------------------------
// ADC
// ---------------------------------------------------------------------------

/// Mid-tread uniform quantizer with 2^bits levels spanning [-full_scale, full_scale).
double adc_quantize(double value_v, int bits, double full_scale_v);
double adc_step(int bits, double full_scale_v);

}  // namespace phaselock
