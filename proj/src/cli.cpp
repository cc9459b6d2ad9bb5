#include "phaselock/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "phaselock/analysis.hpp"
#include "phaselock/config_json.hpp"
#include "phaselock/errors.hpp"

namespace phaselock::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// usage problems that are not config validation issues
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string num(double v, int precision = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

ScenarioConfig fig1_base(RunMode mode) {
  ScenarioConfig c = default_config();
  c.mode = mode;
  c.drift = DriftConfig{};
  c.duration_s = 120.0;
  c.intensity_events = {{60.0, 0.9}};
  return c;
}

ScenarioConfig fig5_base(RunMode mode, bool full) {
  ScenarioConfig c = default_config();
  c.mode = mode;
  // linear drift only: the slow random OPD component is left out so the
  // residual is set by the detectors
  c.drift.opd.ou_sigma = 0.0;
  c.duration_s = full ? kFullDurationS : 3600.0;
  return c;
}

ScenarioConfig fig4_config() {
  ScenarioConfig c = default_config();
  c.mode = RunMode::kStaircase;
  constexpr double kCountRate = 5e5;
  constexpr double kEfficiency = 0.6;
  for (DetectorModel* d : {&c.sig_out1, &c.sig_out2}) {
    d->mode = DetectorMode::kPhotonCounting;
    d->efficiency = kEfficiency;
  }
  c.signal.input_power_w = kCountRate * photon_energy(c.signal.wavelength_m) / kEfficiency;
  c.staircase.offsets_deg = {0.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0};
  c.staircase.settle_s = 1.0;
  c.staircase.dwell_s = 1.0;
  c.staircase.bin_s = 1.0;
  return c;
}

ScenarioConfig calib_config() {
  ScenarioConfig c = default_config();
  c.mode = RunMode::kFringeScan;
  return c;
}

const std::vector<std::string>& names() {
  static const std::vector<std::string> n{"fig1-constant",  "fig1-adaptive",   "fig4-staircase",
                                          "fig5-openloop", "fig5-closedloop", "calib-scan"};
  return n;
}

}  // namespace

std::vector<std::string> preset_names() { return names(); }

Preset preset(const std::string& name_in, bool full) {
  const std::string name = name_in == "fig5" ? "fig5-closedloop" : name_in;
  if (name == "fig1-constant") {
    return {name, "constant setpoint lock through a 10 % intensity drop at 60 s", fig1_base(RunMode::kClosedLoopConstant)};
  }
  if (name == "fig1-adaptive") {
    return {name, "adaptive setpoint lock through a 10 % intensity drop at 60 s", fig1_base(RunMode::kClosedLoopAdaptive)};
  }
  if (name == "fig4-staircase") {
    return {name, "signal splitting ratio staircase, photon counting at 5e5 counts/s, 1 s per step", fig4_config()};
  }
  if (name == "fig5-openloop") {
    return {name, "free-running interferometer under linear drift", fig5_base(RunMode::kOpenLoop, full)};
  }
  if (name == "fig5-closedloop") {
    return {name, "adaptive lock under linear drift", fig5_base(RunMode::kClosedLoopAdaptive, full)};
  }
  if (name == "calib-scan") {
    return {name, "fringe scan and visibility calibration", calib_config()};
  }
  throw std::out_of_range("unknown preset '" + name_in + "'");
}

namespace {

double safe_std(const std::vector<double>& values, double rate) {
  TimeSeries s;
  s.sample_rate_hz = rate;
  for (double v : values) {
    if (std::isfinite(v)) s.values.push_back(v);
  }
  try {
    return windowed_std(s);
  } catch (const std::exception&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

double mean_where(const RunSeries& s, const std::vector<double>& y, double t0, double t1) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.t_s[i] >= t0 && s.t_s[i] < t1) {
      acc += y[i];
      ++n;
    }
  }
  return n ? acc / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

double lock_error_deg(const RunRecord& rec) {
  const auto& y = rec.fast.phi_ref_deg;
  if (y.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  const std::size_t first = y.size() / 2;
  for (std::size_t i = first; i < y.size(); ++i) acc += y[i];
  return acc / static_cast<double>(y.size() - first) - rec.config.target_phase_deg;
}

RunSummary summarize(const RunRecord& rec) {
  RunSummary s;
  s.duration_s = rec.config.duration_s;
  s.samples = rec.slow.size();
  s.sample_rate_hz = rec.slow.sample_rate_hz;
  s.ref_std_deg = safe_std(rec.slow.phi_ref_deg, rec.slow.sample_rate_hz);
  s.sig_std_deg = safe_std(rec.slow.phi_sig_deg, rec.slow.sample_rate_hz);
  s.sig_est_std_deg = safe_std(rec.phi_sig_est_deg, rec.slow.sample_rate_hz);
  s.ref_mean_error_deg = lock_error_deg(rec);
  s.saturation_events = rec.saturation.events;
  if (!rec.config.intensity_events.empty() && rec.fast.size() > 0) {
    double first = std::numeric_limits<double>::infinity(), last = -first;
    for (const auto& e : rec.config.intensity_events) {
      first = std::min(first, e.t_s);
      last = std::max(last, e.t_s);
    }
    const double end = rec.fast.t_s.back() + 1.0 / rec.fast.sample_rate_hz;
    if (first > 0.0 && last < end) {
      const double before = mean_where(rec.fast, rec.fast.phi_ref_deg, 0.5 * first, first);
      const double after = mean_where(rec.fast, rec.fast.phi_ref_deg, last + 0.5 * (end - last), end);
      if (std::isfinite(before) && std::isfinite(after)) s.lock_shift_deg = after - before;
    }
  }
  return s;
}

namespace {

// Files are written next to their final names and renamed together once all
// of them exist, so a failed command leaves nothing behind.
class OutputDir {
 public:
  explicit OutputDir(fs::path dir) : dir_(std::move(dir)) {}
  OutputDir(const OutputDir&) = delete;
  OutputDir& operator=(const OutputDir&) = delete;

  ~OutputDir() {
    std::error_code ec;
    for (const auto& [tmp, final_name] : staged_) fs::remove(tmp, ec);
    if (!committed_ && created_) fs::remove(dir_, ec);  // only succeeds when empty
  }

  void add(const std::string& name, const std::string& content) { pending_.emplace_back(name, content); }

  std::vector<fs::path> commit() {
    std::error_code ec;
    if (!fs::exists(dir_, ec)) {
      if (!fs::create_directories(dir_, ec) || ec) {
        throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
      }
      created_ = true;
    } else if (!fs::is_directory(dir_, ec)) {
      throw IoError("output path '" + dir_.string() + "' is not a directory");
    }
    for (const auto& [name, content] : pending_) {
      const fs::path final_path = dir_ / name;
      const fs::path tmp = dir_ / ("." + name + ".partial");
      staged_.emplace_back(tmp, final_path);
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      f << content;
      f.close();
      if (!f) throw IoError("cannot write '" + final_path.string() + "'");
    }
    std::vector<fs::path> written;
    for (const auto& [tmp, final_path] : staged_) {
      fs::rename(tmp, final_path, ec);
      if (ec) throw IoError("cannot write '" + final_path.string() + "': " + ec.message());
      written.push_back(final_path);
    }
    staged_.clear();
    committed_ = true;
    return written;
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> pending_;
  std::vector<std::pair<fs::path, fs::path>> staged_;
  bool created_ = false;
  bool committed_ = false;
};

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) throw IoError("cannot read '" + path + "'");
  return ss.str();
}

// Options shared by run and sweep.
struct ScenarioOptions {
  std::string preset;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> duration_s;
  bool full_duration = false;
  bool noiseless = false;
  std::vector<std::string> sets;
  std::string out_dir = "phaselock-out";

  void attach(CLI::App* app) {
    auto* p = app->add_option("--preset", preset, "Built-in scenario");
    auto* c = app->add_option("--config", config_path, "Scenario JSON (a run's metadata file also works)");
    p->excludes(c);
    app->add_option("--seed", seed, "Master seed (falls back to PHASELOCK_SEED, then the config)");
    auto* d = app->add_option("--duration", duration_s, "Run length in seconds");
    auto* f = app->add_flag("--full-duration", full_duration, "15 h run length");
    d->excludes(f);
    app->add_flag("--noiseless", noiseless, "Switch off drift, detector noise and ADC");
    app->add_option("--set", sets, "Override one value, path=json (repeatable)");
    app->add_option("--out", out_dir, "Output directory");
  }
};

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);  // bare words are strings
  }
}

std::pair<std::string, std::string> split_assignment(const std::string& s, const char* what) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw UsageError(std::string(what) + " expects path=value, got '" + s + "'");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("PHASELOCK_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  std::uint64_t seed = 0;
  const char* end = v + std::char_traits<char>::length(v);
  const auto [ptr, ec] = std::from_chars(v, end, seed);
  if (ec != std::errc() || ptr != end) throw UsageError(std::string("PHASELOCK_SEED is not an unsigned integer: ") + v);
  return seed;
}

ScenarioConfig load_scenario(const ScenarioOptions& o) {
  ScenarioConfig cfg;
  if (!o.config_path.empty()) {
    const std::string text = read_file(o.config_path);
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error&) {
      cfg = config_from_text(text);  // rethrows with line and column
    }
    if (j.is_object() && j.contains("software") && j.contains("config")) j = j["config"];
    if (!j.is_null()) cfg = config_from_json(j);
  } else if (!o.preset.empty()) {
    try {
      cfg = preset(o.preset, o.full_duration).config;
    } catch (const std::out_of_range& e) {
      throw UsageError(std::string(e.what()) + "; available presets: fig1-constant, fig1-adaptive, "
                                              "fig4-staircase, fig5-openloop, fig5-closedloop, calib-scan");
    }
  } else {
    throw UsageError("one of --preset or --config is required");
  }
  if (o.noiseless) cfg = noiseless(cfg);
  for (const auto& s : o.sets) {
    const auto [path, value] = split_assignment(s, "--set");
    set_config_value(cfg, path, parse_value(value));
  }
  if (o.duration_s) cfg.duration_s = *o.duration_s;
  if (o.full_duration) cfg.duration_s = kFullDurationS;
  if (o.seed) {
    cfg.seed = *o.seed;
  } else if (auto s = env_seed()) {
    cfg.seed = *s;
  }
  validate(cfg);
  return cfg;
}

std::string staircase_csv(const RunRecord& rec) {
  std::ostringstream out;
  out << "offset_deg,expected_ratio,ratio,standard_error,bins,counts\n";
  char buf[256];
  for (const auto& s : rec.staircase) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%d,%.17g\n", s.offset_deg, s.expected_ratio, s.ratio,
                  s.standard_error, s.bins, s.counts);
    out << buf;
  }
  return out.str();
}

void print_summary(const RunRecord& rec, std::ostream& out) {
  const RunSummary s = summarize(rec);
  out << "mode: " << to_string(rec.config.mode) << "\n";
  out << "duration_s: " << num(s.duration_s) << "\n";
  out << "samples: " << s.samples << " at " << num(s.sample_rate_hz) << " Hz\n";
  const RunMode m = rec.config.mode;
  if (m != RunMode::kFringeScan) {
    out << "reference_std_deg: " << num(s.ref_std_deg) << "\n";
    if (m != RunMode::kOpenLoop) out << "reference_lock_error_deg: " << num(s.ref_mean_error_deg) << "\n";
    out << "signal_std_deg: " << num(s.sig_std_deg) << "\n";
    out << "signal_reconstructed_std_deg: " << num(s.sig_est_std_deg) << "\n";
  }
  out << "saturation_events: " << s.saturation_events << "\n";
  if (s.lock_shift_deg) out << "lock_shift_deg: " << num(*s.lock_shift_deg, 9) << "\n";
  if (rec.calibration) {
    const auto& r = rec.calibration->reference;
    const auto& g = rec.calibration->signal;
    out << "calibration_reference_v1_v2: " << num(r.v1) << " " << num(r.v2) << "\n";
    out << "calibration_signal_v1_v2: " << num(g.v1) << " " << num(g.v2) << "\n";
    out << "calibration_reference_efficiency_ratio: " << num(r.efficiency_ratio) << "\n";
    out << "calibration_signal_efficiency_ratio: " << num(g.efficiency_ratio) << "\n";
  }
  for (const auto& st : rec.staircase) {
    out << "staircase " << num(st.offset_deg) << " deg: ratio " << num(st.ratio) << " expected "
        << num(st.expected_ratio) << " se " << num(st.standard_error, 3) << "\n";
  }
}

int cmd_run(const ScenarioOptions& o, std::ostream& out) {
  const ScenarioConfig cfg = load_scenario(o);
  const RunRecord rec = run_scenario(cfg);

  OutputDir dir(o.out_dir);
  std::ostringstream csv;
  write_csv(rec.slow, csv);
  dir.add("run.csv", csv.str());
  dir.add("run.json", metadata_json(rec));
  if (!rec.staircase.empty()) dir.add("staircase.csv", staircase_csv(rec));
  const auto written = dir.commit();

  print_summary(rec, out);
  for (const auto& p : written) out << "wrote " << p.string() << "\n";
  return kExitOk;
}

// ---- analyze ----

const std::vector<std::string>& run_columns() {
  static const std::vector<std::string> c{"t_s",  "phi_sig_deg", "phi_ref_deg", "d1_W",        "d2_W",
                                          "d3_W", "d4_W",        "v_act_V",     "phi_comp_deg"};
  return c;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.emplace_back();
  return parts;
}

struct Table {
  std::map<std::string, std::vector<double>> columns;
  std::size_t rows = 0;
};

Table read_run_csv(const std::string& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    header = split(line, ',');
    break;
  }
  const auto& want = run_columns();
  if (header.empty()) throw UsageError("schema mismatch: missing header row, expected column 't_s'");
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (i >= header.size()) throw UsageError("schema mismatch: missing column '" + want[i] + "'");
    if (header[i] != want[i]) {
      throw UsageError("schema mismatch: column " + std::to_string(i + 1) + " is '" + header[i] + "', expected '" +
                       want[i] + "'");
    }
  }
  if (header.size() > want.size()) throw UsageError("schema mismatch: unexpected column '" + header[want.size()] + "'");

  Table t;
  for (const auto& c : want) t.columns[c];
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split(line, ',');
    if (cells.size() != want.size()) {
      throw UsageError("schema mismatch: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                       " fields, expected " + std::to_string(want.size()));
    }
    for (std::size_t i = 0; i < want.size(); ++i) {
      double v = 0.0;
      const char* b = cells[i].data();
      const char* e = b + cells[i].size();
      const auto [ptr, ec] = std::from_chars(b, e, v);
      if (ec != std::errc() || ptr != e) {
        throw UsageError("schema mismatch: column '" + want[i] + "' line " + std::to_string(line_no) +
                         " is not a number: '" + cells[i] + "'");
      }
      t.columns[want[i]].push_back(v);
    }
    ++t.rows;
  }
  if (t.rows < 2) throw UsageError("schema mismatch: column 't_s' needs at least two rows");
  return t;
}

double sample_rate_of(const std::vector<double>& t) {
  const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(dt > 0.0)) throw UsageError("schema mismatch: column 't_s' is not increasing");
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (std::abs(t[i] - t[i - 1] - dt) > 1e-6 * dt) {
      throw UsageError("schema mismatch: column 't_s' is not uniformly sampled at line " + std::to_string(i + 2));
    }
  }
  double rate = 1.0 / dt;
  if (std::abs(rate - std::round(rate)) < 1e-6 * rate) rate = std::round(rate);
  return rate;
}

struct AnalyzeOptions {
  std::string input;
  std::string out_dir = "phaselock-out";
  std::string channels = "phi_ref_deg,phi_sig_deg,phi_comp_deg";
  std::string metrics = "std,allan,psd";
};

std::string unit_of(const std::string& column) {
  const auto us = column.rfind('_');
  return us == std::string::npos ? "" : column.substr(us + 1);
}

void write_cell(std::ostream& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

int cmd_analyze(const AnalyzeOptions& o, std::ostream& out) {
  std::vector<std::string> channels = split(o.channels, ',');
  std::vector<std::string> metrics = split(o.metrics, ',');
  if (channels.empty()) throw UsageError("--channels is empty");
  if (metrics.empty()) throw UsageError("--metrics is empty");
  for (const auto& c : channels) {
    const auto& cols = run_columns();
    if (c == "t_s" || std::find(cols.begin(), cols.end(), c) == cols.end()) {
      throw UsageError("unknown channel '" + c + "'");
    }
  }
  bool want_std = false, want_allan = false, want_psd = false;
  for (const auto& m : metrics) {
    if (m == "std") want_std = true;
    else if (m == "allan") want_allan = true;
    else if (m == "psd") want_psd = true;
    else throw UsageError("unknown metric '" + m + "' (std, allan, psd)");
  }

  const Table table = read_run_csv(o.input);
  const double rate = sample_rate_of(table.columns.at("t_s"));
  std::vector<TimeSeries> series;
  for (const auto& c : channels) series.push_back(TimeSeries{rate, table.columns.at(c), unit_of(c)});

  json summary;
  summary["input"] = fs::path(o.input).filename().string();
  summary["samples"] = table.rows;
  summary["sample_rate_hz"] = rate;
  json per = json::object();
  OutputDir dir(o.out_dir);

  if (want_std) {
    for (std::size_t i = 0; i < channels.size(); ++i) {
      per[channels[i]]["std_1hz"] = windowed_std(series[i]);
      per[channels[i]]["std_1hz_detrended"] = series[i].values.size() >= 3 * std::max(1.0, rate)
                                                  ? json(windowed_std(series[i], true))
                                                  : json(nullptr);
      per[channels[i]]["unit"] = series[i].unit;
    }
    if (per.contains("phi_ref_deg")) summary["reference_std_deg"] = per["phi_ref_deg"]["std_1hz"];
    if (per.contains("phi_sig_deg")) summary["signal_std_deg"] = per["phi_sig_deg"]["std_1hz"];
  }

  if (want_allan) {
    const std::vector<double> taus = default_taus(series.front());
    if (taus.empty()) throw UsageError("series too short for an Allan deviation");
    std::vector<AllanCurve> curves;
    for (const auto& s : series) curves.push_back(allan_deviation(s, taus));
    std::ostringstream csv;
    csv << "# allan: " << curves.front().estimator << "; sample_rate_hz " << num(rate) << "; input "
        << summary["input"].get<std::string>() << "\n";
    csv << "tau_s";
    for (const auto& c : channels) csv << "," << c;
    csv << "\n";
    for (std::size_t k = 0; k < taus.size(); ++k) {
      write_cell(csv, taus[k]);
      for (const auto& c : curves) {
        csv << ",";
        if (c.deviation[k]) write_cell(csv, *c.deviation[k]);
      }
      csv << "\n";
    }
    dir.add("allan.csv", csv.str());
    for (std::size_t i = 0; i < channels.size(); ++i) {
      std::optional<std::size_t> best;
      for (std::size_t k = 0; k < taus.size(); ++k) {
        const auto& d = curves[i].deviation[k];
        if (d && (!best || *d < *curves[i].deviation[*best])) best = k;
      }
      if (best) {
        per[channels[i]]["allan_min"] = *curves[i].deviation[*best];
        per[channels[i]]["allan_min_tau_s"] = taus[*best];
      }
    }
  }

  if (want_psd) {
    const std::size_t len = default_segment_length(table.rows);
    std::vector<PsdCurve> curves;
    for (const auto& s : series) curves.push_back(power_spectral_density(s, len, 0.5));
    const PsdCurve& c0 = curves.front();
    std::ostringstream csv;
    csv << "# psd: welch, " << c0.window << " window, one-sided, segment_length " << c0.segment_length
        << ", overlap 0.5, segments " << c0.segments << ", unit^2/Hz; input " << summary["input"].get<std::string>()
        << "\n";
    csv << "frequency_hz";
    for (const auto& c : channels) csv << "," << c;
    csv << "\n";
    for (std::size_t k = 0; k < c0.frequency_hz.size(); ++k) {
      write_cell(csv, c0.frequency_hz[k]);
      for (const auto& c : curves) {
        csv << ",";
        write_cell(csv, c.density[k]);
      }
      csv << "\n";
    }
    dir.add("psd.csv", csv.str());
    for (std::size_t i = 0; i < channels.size(); ++i) {
      json probes = json::object();
      for (double f : {1e-4, 1e-3, 1e-2, 1e-1}) {
        const double df = c0.frequency_hz[1];
        if (f >= 0.5 * df && f <= c0.frequency_hz.back()) probes[num(f)] = density_at(curves[i], f);
      }
      per[channels[i]]["psd_at_hz"] = probes;
      per[channels[i]]["psd_segments"] = curves[i].segments;
    }
  }
  summary["channels"] = per;
  dir.add("summary.json", summary.dump(2) + "\n");
  const auto written = dir.commit();
  if (summary.contains("reference_std_deg")) out << "reference_std_deg: " << num(summary["reference_std_deg"]) << "\n";
  if (summary.contains("signal_std_deg")) out << "signal_std_deg: " << num(summary["signal_std_deg"]) << "\n";
  for (const auto& p : written) out << "wrote " << p.string() << "\n";
  return kExitOk;
}

// ---- sweep ----

struct SweepOptions {
  ScenarioOptions scenario;
  std::string param;
  unsigned jobs = 0;
};

struct SweepRow {
  double lock_error = 0.0;
  RunSummary summary;
};

int cmd_sweep(const SweepOptions& o, std::ostream& out) {
  const ScenarioConfig base = load_scenario(o.scenario);
  const auto [path, list] = split_assignment(o.param, "--param");
  std::vector<json> values;
  for (const auto& v : split(list, ',')) {
    if (!v.empty()) values.push_back(parse_value(v));
  }
  if (values.empty()) throw UsageError("--param " + path + " has an empty value list");

  // reject bad paths and values before any work starts
  std::vector<ScenarioConfig> points;
  for (const auto& v : values) {
    ScenarioConfig c = base;
    set_config_value(c, path, v);
    points.push_back(c);
  }

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned jobs = std::min<unsigned>(o.jobs ? o.jobs : hw, static_cast<unsigned>(points.size()));
  std::vector<SweepRow> rows(points.size());
  std::vector<std::string> failures(points.size());
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> workers;
    for (unsigned w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < points.size(); i = next++) {
          try {
            const RunRecord rec = run_scenario(points[i]);
            rows[i].lock_error = lock_error_deg(rec);
            rows[i].summary = summarize(rec);
          } catch (const std::exception& e) {
            failures[i] = e.what();
          }
        }
      });
    }
  }
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!failures[i].empty()) {
      throw std::runtime_error("sweep point " + path + "=" + values[i].dump() + " failed: " + failures[i]);
    }
  }

  std::ostringstream csv;
  csv << "# sweep " << path << "; seed " << base.seed << "; base config " << config_hash(base) << "; version "
      << software_version() << "\n";
  csv << "value,lock_error_deg,reference_std_deg,signal_reconstructed_std_deg,saturation_events\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    csv << values[i].dump() << ",";
    write_cell(csv, rows[i].lock_error);
    csv << ",";
    write_cell(csv, rows[i].summary.ref_std_deg);
    csv << ",";
    write_cell(csv, rows[i].summary.sig_est_std_deg);
    csv << "," << rows[i].summary.saturation_events << "\n";
  }
  json meta;
  meta["software"] = "phaselock";
  meta["version"] = software_version();
  meta["parameter"] = path;
  meta["values"] = values;
  meta["seed"] = base.seed;
  meta["config"] = to_json(base);

  OutputDir dir(o.scenario.out_dir);
  dir.add("sweep.csv", csv.str());
  dir.add("sweep.json", meta.dump(2) + "\n");
  const auto written = dir.commit();
  for (std::size_t i = 0; i < points.size(); ++i) {
    out << path << "=" << values[i].dump() << ": lock_error_deg " << num(rows[i].lock_error) << "\n";
  }
  for (const auto& p : written) out << "wrote " << p.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-wavelength interferometer phase-lock simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", software_version());

  ScenarioOptions run_opts;
  auto* run = app.add_subcommand("run", "Simulate one scenario, write run.csv and run.json");
  run_opts.attach(run);

  AnalyzeOptions an_opts;
  auto* analyze = app.add_subcommand("analyze", "Stability metrics of a run.csv");
  analyze->add_option("input", an_opts.input, "Time series CSV")->required();
  analyze->add_option("--out", an_opts.out_dir, "Output directory");
  analyze->add_option("--channels", an_opts.channels, "Comma-separated columns");
  analyze->add_option("--metrics", an_opts.metrics, "Comma-separated subset of std,allan,psd");

  SweepOptions sw_opts;
  auto* sweep = app.add_subcommand("sweep", "Run one scenario per parameter value, write sweep.csv");
  sw_opts.scenario.attach(sweep);
  sweep->add_option("--param", sw_opts.param, "path=v1,v2,...")->required();
  sweep->add_option("--jobs", sw_opts.jobs, "Worker threads (default: all cores)");

  std::string preset_name;
  bool preset_full = false;
  bool preset_list = false;
  auto* pre = app.add_subcommand("preset", "Print a preset's config JSON");
  pre->add_option("name", preset_name, "Preset name");
  pre->add_flag("--full-duration", preset_full, "15 h run length");
  pre->add_flag("--list", preset_list, "List presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_opts, out);
    if (*analyze) return cmd_analyze(an_opts, out);
    if (*sweep) return cmd_sweep(sw_opts, out);
    if (*pre) {
      if (preset_list || preset_name.empty()) {
        for (const auto& n : preset_names()) out << n << "  " << preset(n).description << "\n";
        return kExitOk;
      }
      ScenarioConfig cfg;
      try {
        cfg = preset(preset_name, preset_full).config;
      } catch (const std::out_of_range& e) {
        throw UsageError(e.what());
      }
      out << to_json(cfg).dump(2) << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace phaselock::cli
