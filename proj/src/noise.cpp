#include "phaselock/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace phaselock {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t stream_id) {
  std::uint64_t s = master_seed;
  const std::uint64_t a = splitmix64(s);
  s = a ^ (stream_id * 0xd1b54a32d192ed03ULL);
  return splitmix64(s);
}

RandomStream::RandomStream(std::uint64_t master_seed, std::uint64_t stream_id) {
  std::uint64_t s = derive_seed(master_seed, stream_id);
  std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s)),
                    static_cast<std::uint32_t>(splitmix64(s)), static_cast<std::uint32_t>(splitmix64(s))};
  engine_.seed(seq);
}

std::int64_t RandomStream::poisson(double mean) {
  if (!(mean > 0.0)) return 0;
  std::poisson_distribution<std::int64_t> dist(mean);
  return dist(engine_);
}

// ---------------------------------------------------------------------------

OuTransition ou_transition(double dt, double tau, double sigma) {
  if (!(dt > 0.0)) throw std::invalid_argument("ou_transition: dt must be positive");
  if (sigma == 0.0) return {1.0, 0.0};
  if (!(tau > 0.0)) throw std::invalid_argument("ou_transition: tau must be positive");
  const double decay = std::exp(-dt / tau);
  return {decay, sigma * std::sqrt(-std::expm1(-2.0 * dt / tau))};
}

OuTransition compose(const OuTransition& a, const OuTransition& b) {
  return {a.decay * b.decay, std::sqrt(b.decay * b.decay * a.noise_std * a.noise_std + b.noise_std * b.noise_std)};
}

DriftStreams::DriftStreams(std::uint64_t master_seed)
    : opd(master_seed, static_cast<std::uint64_t>(StreamId::kOpdDrift)),
      intensity(master_seed, static_cast<std::uint64_t>(StreamId::kIntensityDrift)),
      wavelength_s(master_seed, static_cast<std::uint64_t>(StreamId::kWavelengthSignalDrift)),
      wavelength_r(master_seed, static_cast<std::uint64_t>(StreamId::kWavelengthReferenceDrift)) {}

DriftIntegrator::Step DriftIntegrator::make(const DriftProcess& p, double dt) {
  Step s;
  s.ramp_increment = p.linear_rate * dt;
  s.ou = ou_transition(dt, p.ou_tau, p.ou_sigma);
  s.stochastic = p.ou_sigma != 0.0;
  return s;
}

DriftIntegrator::DriftIntegrator(const DriftConfig& cfg, double dt)
    : opd_(make(cfg.opd, dt)),
      intensity_(make(cfg.intensity, dt)),
      wavelength_s_(make(cfg.wavelength_signal, dt)),
      wavelength_r_(make(cfg.wavelength_reference, dt)) {}

void DriftIntegrator::advance(EnvironmentState& state, DriftStreams& streams) const {
  auto apply = [](DriftComponent& c, const Step& s, RandomStream& rng) {
    c.ramp += s.ramp_increment;
    if (s.stochastic) c.fluctuation = s.ou.decay * c.fluctuation + s.ou.noise_std * rng.normal();
  };
  apply(state.opd, opd_, streams.opd);
  apply(state.intensity, intensity_, streams.intensity);
  apply(state.wavelength_offset_s, wavelength_s_, streams.wavelength_s);
  apply(state.wavelength_offset_r, wavelength_r_, streams.wavelength_r);
}

EnvironmentState drift_step(EnvironmentState state, const DriftConfig& cfg, double dt, DriftStreams& streams) {
  DriftIntegrator(cfg, dt).advance(state, streams);
  return state;
}

void validate(const DriftConfig& cfg) {
  for (const DriftProcess* p : {&cfg.opd, &cfg.intensity, &cfg.wavelength_signal, &cfg.wavelength_reference}) {
    if (p->ou_sigma < 0.0) throw std::invalid_argument("drift ou_sigma must be non-negative");
    if (p->ou_sigma > 0.0 && !(p->ou_tau > 0.0)) {
      throw std::invalid_argument("drift ou_tau must be positive where ou_sigma > 0");
    }
  }
}

// ---------------------------------------------------------------------------

double DetectorModel::noise_std() const { return nep * std::sqrt(bandwidth_hz); }

void validate(const DetectorModel& d) {
  if (d.nep < 0.0 || d.bandwidth_hz < 0.0 || d.dark_rate < 0.0 || d.background_rate < 0.0) {
    throw std::invalid_argument("detector nep, bandwidth and count rates must be non-negative");
  }
  if (!(d.efficiency > 0.0 && d.efficiency <= 1.0)) {
    throw std::invalid_argument("detector efficiency must lie in (0, 1]");
  }
  if (d.mode == DetectorMode::kAnalog && !(d.bandwidth_hz > 0.0)) {
    throw std::invalid_argument("analog detector bandwidth must be positive");
  }
  if (d.mode == DetectorMode::kPhotonCounting && !(d.photon_energy_j > 0.0)) {
    throw std::invalid_argument("photon-counting detector needs a positive photon energy");
  }
}

double detector_sample(double power_w, const DetectorModel& det, double dt, RandomStream& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("detector_sample: dt must be positive");
  const double clean = det.efficiency * power_w + det.offset_w;
  const double sigma = det.noise_std();
  return sigma > 0.0 ? clean + sigma * rng.normal() : clean;
}

std::int64_t photon_counts(double power_w, const DetectorModel& det, double dt, RandomStream& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("photon_counts: dt must be positive");
  const double photons = det.photon_energy_j > 0.0 ? det.efficiency * power_w / det.photon_energy_j : 0.0;
  return rng.poisson((photons + det.dark_rate + det.background_rate) * dt);
}

FirstOrderFilter::FirstOrderFilter(double cutoff_hz, double dt) {
  if (!(cutoff_hz > 0.0) || !(dt > 0.0)) throw std::invalid_argument("FirstOrderFilter: cutoff and dt must be positive");
  alpha_ = std::exp(-2.0 * std::numbers::pi * cutoff_hz * dt);
}

double FirstOrderFilter::step(double x) {
  if (!primed_) {
    y_ = x;
    primed_ = true;
    return y_;
  }
  y_ = alpha_ * y_ + (1.0 - alpha_) * x;
  return y_;
}

AnalogDetector::AnalogDetector(const DetectorModel& model, double dt, std::uint64_t master_seed, StreamId stream)
    : model_(model),
      signal_(model.bandwidth_hz, dt),
      rng_(master_seed, static_cast<std::uint64_t>(stream)) {
  const double sigma = model.noise_std();
  noisy_ = sigma > 0.0;
  if (noisy_) {
    // ENBW of a first-order pole at fc is (pi/2) fc; tau = 1/(4B) makes it B.
    noise_step_ = ou_transition(dt, 1.0 / (4.0 * model.bandwidth_hz), sigma);
    noise_ = sigma * rng_.normal();
  }
}

double AnalogDetector::step(double power_w) {
  const double clean = signal_.step(model_.efficiency * power_w);
  if (noisy_) noise_ = noise_step_.decay * noise_ + noise_step_.noise_std * rng_.normal();
  return clean + model_.offset_w + noise_;
}

// ---------------------------------------------------------------------------

double adc_step(int bits, double full_scale_v) {
  if (bits < 1 || bits > 52) throw std::invalid_argument("adc: bits must lie in [1, 52]");
  if (!(full_scale_v > 0.0)) throw std::invalid_argument("adc: full scale must be positive");
  return 2.0 * full_scale_v / std::ldexp(1.0, bits);
}

double adc_quantize(double value_v, int bits, double full_scale_v) {
  const double step = adc_step(bits, full_scale_v);
  const double top = std::ldexp(1.0, bits - 1);
  const double clamped = std::clamp(value_v, -full_scale_v, full_scale_v);
  const double code = std::clamp(std::nearbyint(clamped / step), -top, top - 1.0);
  return code * step;
}

}  // namespace phaselock
