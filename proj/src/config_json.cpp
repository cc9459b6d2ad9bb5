#include "phaselock/config_json.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include "phaselock/errors.hpp"

namespace phaselock {

using nlohmann::json;

namespace {

json channel_json(const WavelengthChannel& c) {
  return {{"wavelength_m", c.wavelength_m},         {"input_power_w", c.input_power_w},
          {"visibility_out1", c.visibility_out1},   {"visibility_out2", c.visibility_out2},
          {"coupler_t1", c.coupler_t1},             {"coupler_t2", c.coupler_t2},
          {"phase_offset_deg", rad_to_deg(c.phase_offset_rad)}, {"static_opd_m", c.static_opd_m}};
}

json lsd_json(const LsdParams& l) { return {{"mu_out", l.mu_out}, {"mu_arm", l.mu_arm}}; }

json process_json(const DriftProcess& p) {
  return {{"linear_rate", p.linear_rate}, {"ou_sigma", p.ou_sigma}, {"ou_tau", p.ou_tau}};
}

json detector_json(const DetectorModel& d) {
  return {{"mode", d.mode == DetectorMode::kAnalog ? "analog" : "photon-counting"},
          {"nep", d.nep},
          {"bandwidth_hz", d.bandwidth_hz},
          {"offset_w", d.offset_w},
          {"efficiency", d.efficiency},
          {"dark_rate", d.dark_rate},
          {"background_rate", d.background_rate},
          {"photon_energy_j", d.photon_energy_j},
          {"adc_volts_per_watt", d.adc_volts_per_watt}};
}

json pair_json(const std::pair<double, double>& p) { return json::array({p.first, p.second}); }

// Reads an object field by field, collecting problems instead of stopping at
// the first one. Fields not present keep their current value.
class Reader {
 public:
  Reader(const json& j, std::string path, std::vector<std::string>& issues)
      : j_(j), path_(std::move(path)), issues_(issues) {
    if (!j_.is_object()) {
      issues_.push_back(where() + ": expected an object");
      ok_ = false;
    }
  }

  ~Reader() {
    if (!ok_) return;
    for (const auto& item : j_.items()) {
      if (!known_.count(item.key())) issues_.push_back(where(item.key()) + ": unknown key");
    }
  }

  Reader(const Reader&) = delete;
  Reader& operator=(const Reader&) = delete;

  bool has(const std::string& key) {
    known_.insert(key);
    return ok_ && j_.contains(key);
  }

  const json& at(const std::string& key) const { return j_.at(key); }
  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? std::string("<root>") : path_;
    return path_.empty() ? key : path_ + "." + key;
  }
  std::vector<std::string>& issues() { return issues_; }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) {
      issues_.push_back(where(key) + ": expected a number");
      return;
    }
    out = v.get<double>();
  }

  void degrees_as_radians(const std::string& key, double& out) {
    double deg = rad_to_deg(out);
    if (!has(key)) return;
    number(key, deg);
    out = deg_to_rad(deg);
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) {
      issues_.push_back(where(key) + ": expected an integer");
      return;
    }
    out = v.get<Int>();
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) {
      issues_.push_back(where(key) + ": expected true or false");
      return;
    }
    out = v.get<bool>();
  }

  void pair(const std::string& key, std::pair<double, double>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      issues_.push_back(where(key) + ": expected an array of two numbers");
      return;
    }
    out = {v[0].get<double>(), v[1].get<double>()};
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) {
      issues_.push_back(where(key) + ": expected an array of numbers");
      return;
    }
    std::vector<double> tmp;
    for (const auto& e : v) {
      if (!e.is_number()) {
        issues_.push_back(where(key) + ": expected an array of numbers");
        return;
      }
      tmp.push_back(e.get<double>());
    }
    out = std::move(tmp);
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string>& issues_;
  std::set<std::string> known_;
  bool ok_ = true;
};

void read_channel(Reader& parent, const std::string& key, WavelengthChannel& c) {
  if (!parent.has(key)) return;
  Reader r(parent.at(key), parent.where(key), parent.issues());
  r.number("wavelength_m", c.wavelength_m);
  r.number("input_power_w", c.input_power_w);
  r.number("visibility_out1", c.visibility_out1);
  r.number("visibility_out2", c.visibility_out2);
  r.number("coupler_t1", c.coupler_t1);
  r.number("coupler_t2", c.coupler_t2);
  r.degrees_as_radians("phase_offset_deg", c.phase_offset_rad);
  r.number("static_opd_m", c.static_opd_m);
}

void read_lsd(Reader& parent, const std::string& key, LsdParams& l) {
  if (!parent.has(key)) return;
  Reader r(parent.at(key), parent.where(key), parent.issues());
  r.number("mu_out", l.mu_out);
  r.number("mu_arm", l.mu_arm);
}

void read_process(Reader& parent, const std::string& key, DriftProcess& p) {
  if (!parent.has(key)) return;
  Reader r(parent.at(key), parent.where(key), parent.issues());
  r.number("linear_rate", p.linear_rate);
  r.number("ou_sigma", p.ou_sigma);
  r.number("ou_tau", p.ou_tau);
}

void read_detector(Reader& parent, const std::string& key, DetectorModel& d) {
  if (!parent.has(key)) return;
  Reader r(parent.at(key), parent.where(key), parent.issues());
  if (r.has("mode")) {
    const json& m = r.at("mode");
    if (m == "analog") d.mode = DetectorMode::kAnalog;
    else if (m == "photon-counting") d.mode = DetectorMode::kPhotonCounting;
    else r.issues().push_back(r.where("mode") + ": expected \"analog\" or \"photon-counting\"");
  }
  r.number("nep", d.nep);
  r.number("bandwidth_hz", d.bandwidth_hz);
  r.number("offset_w", d.offset_w);
  r.number("efficiency", d.efficiency);
  r.number("dark_rate", d.dark_rate);
  r.number("background_rate", d.background_rate);
  r.number("photon_energy_j", d.photon_energy_j);
  r.number("adc_volts_per_watt", d.adc_volts_per_watt);
}

}  // namespace

json to_json(const ScenarioConfig& cfg) {
  json events = json::array();
  for (const auto& e : cfg.intensity_events) events.push_back({{"t_s", e.t_s}, {"scale", e.scale}});
  return {
      {"schema_version", cfg.schema_version},
      {"mode", to_string(cfg.mode)},
      {"duration_s", cfg.duration_s},
      {"control_dt_s", cfg.control_dt_s},
      {"log_rate_hz", cfg.log_rate_hz},
      {"post_average_factor", cfg.post_average_factor},
      {"seed", cfg.seed},
      {"target_phase_deg", cfg.target_phase_deg},
      {"plant", to_string(cfg.plant)},
      {"signal", channel_json(cfg.signal)},
      {"reference", channel_json(cfg.reference)},
      {"signal_lsd", lsd_json(cfg.signal_lsd)},
      {"reference_lsd", lsd_json(cfg.reference_lsd)},
      {"drift",
       {{"opd", process_json(cfg.drift.opd)},
        {"intensity", process_json(cfg.drift.intensity)},
        {"wavelength_signal", process_json(cfg.drift.wavelength_signal)},
        {"wavelength_reference", process_json(cfg.drift.wavelength_reference)}}},
      {"detectors",
       {{"ref_out1", detector_json(cfg.ref_out1)},
        {"ref_out2", detector_json(cfg.ref_out2)},
        {"sig_out1", detector_json(cfg.sig_out1)},
        {"sig_out2", detector_json(cfg.sig_out2)}}},
      {"adc",
       {{"enabled", cfg.adc.enabled},
        {"bits", cfg.adc.bits},
        {"full_scale_v", cfg.adc.full_scale_v},
        {"actuator_monitor_gain", cfg.adc.actuator_monitor_gain}}},
      {"pid",
       {{"kp", cfg.pid.kp},
        {"ki", cfg.pid.ki},
        {"kd", cfg.pid.kd},
        {"output_min_v", cfg.pid.output_min},
        {"output_max_v", cfg.pid.output_max}}},
      {"stretcher",
       {{"half_wave_voltage_v", cfg.stretcher.half_wave_voltage},
        {"ref_wavelength_m", cfg.stretcher.ref_wavelength},
        {"path_range_m", cfg.stretcher.path_range},
        {"bandwidth_hz", cfg.stretcher.bandwidth_hz},
        {"capacitance_f", cfg.stretcher.capacitance_f}}},
      {"trim",
       {{"from_detectors", cfg.trim.from_detectors},
        {"offsets_w", pair_json(cfg.trim.offsets_w)},
        {"efficiencies", pair_json(cfg.trim.efficiencies)}}},
      {"intensity_events", events},
      {"scan",
       {{"fringes", cfg.scan.fringes},
        {"fringe_rate_hz", cfg.scan.fringe_rate_hz},
        {"settle_s", cfg.scan.settle_s},
        {"transient_s", cfg.scan.transient_s},
        {"phase_poly_degree", cfg.scan.phase_poly_degree},
        {"envelope_poly_degree", cfg.scan.envelope_poly_degree},
        {"fringes_per_segment", cfg.scan.fringes_per_segment}}},
      {"staircase",
       {{"offsets_deg", cfg.staircase.offsets_deg},
        {"settle_s", cfg.staircase.settle_s},
        {"dwell_s", cfg.staircase.dwell_s},
        {"bin_s", cfg.staircase.bin_s}}},
      {"calibrate_before_lock", cfg.calibrate_before_lock},
  };
}

ScenarioConfig config_from_json(const json& j, const ScenarioConfig& base) {
  ScenarioConfig cfg = base;
  std::vector<std::string> issues;
  {
    Reader r(j, "", issues);
    if (!r.has("schema_version")) {
      issues.push_back("schema_version: required");
    } else {
      r.integer("schema_version", cfg.schema_version);
      if (cfg.schema_version != kSchemaVersion) {
        issues.push_back("schema_version: unsupported version " + std::to_string(cfg.schema_version));
      }
    }
    if (r.has("mode")) {
      const json& m = r.at("mode");
      try {
        cfg.mode = run_mode_from_string(m.is_string() ? m.get<std::string>() : m.dump());
      } catch (const std::exception& e) {
        issues.push_back(std::string("mode: ") + e.what());
      }
    }
    r.number("duration_s", cfg.duration_s);
    r.number("control_dt_s", cfg.control_dt_s);
    r.number("log_rate_hz", cfg.log_rate_hz);
    r.integer("post_average_factor", cfg.post_average_factor);
    r.integer("seed", cfg.seed);
    r.number("target_phase_deg", cfg.target_phase_deg);
    if (r.has("plant")) {
      const json& m = r.at("plant");
      try {
        cfg.plant = plant_model_from_string(m.is_string() ? m.get<std::string>() : m.dump());
      } catch (const std::exception& e) {
        issues.push_back(std::string("plant: ") + e.what());
      }
    }
    read_channel(r, "signal", cfg.signal);
    read_channel(r, "reference", cfg.reference);
    read_lsd(r, "signal_lsd", cfg.signal_lsd);
    read_lsd(r, "reference_lsd", cfg.reference_lsd);
    if (r.has("drift")) {
      Reader d(r.at("drift"), "drift", issues);
      read_process(d, "opd", cfg.drift.opd);
      read_process(d, "intensity", cfg.drift.intensity);
      read_process(d, "wavelength_signal", cfg.drift.wavelength_signal);
      read_process(d, "wavelength_reference", cfg.drift.wavelength_reference);
    }
    if (r.has("detectors")) {
      Reader d(r.at("detectors"), "detectors", issues);
      read_detector(d, "ref_out1", cfg.ref_out1);
      read_detector(d, "ref_out2", cfg.ref_out2);
      read_detector(d, "sig_out1", cfg.sig_out1);
      read_detector(d, "sig_out2", cfg.sig_out2);
    }
    if (r.has("adc")) {
      Reader a(r.at("adc"), "adc", issues);
      a.boolean("enabled", cfg.adc.enabled);
      a.integer("bits", cfg.adc.bits);
      a.number("full_scale_v", cfg.adc.full_scale_v);
      a.number("actuator_monitor_gain", cfg.adc.actuator_monitor_gain);
    }
    if (r.has("pid")) {
      Reader p(r.at("pid"), "pid", issues);
      p.number("kp", cfg.pid.kp);
      p.number("ki", cfg.pid.ki);
      p.number("kd", cfg.pid.kd);
      p.number("output_min_v", cfg.pid.output_min);
      p.number("output_max_v", cfg.pid.output_max);
    }
    if (r.has("stretcher")) {
      Reader s(r.at("stretcher"), "stretcher", issues);
      s.number("half_wave_voltage_v", cfg.stretcher.half_wave_voltage);
      s.number("ref_wavelength_m", cfg.stretcher.ref_wavelength);
      s.number("path_range_m", cfg.stretcher.path_range);
      s.number("bandwidth_hz", cfg.stretcher.bandwidth_hz);
      s.number("capacitance_f", cfg.stretcher.capacitance_f);
    }
    if (r.has("trim")) {
      Reader t(r.at("trim"), "trim", issues);
      t.boolean("from_detectors", cfg.trim.from_detectors);
      t.pair("offsets_w", cfg.trim.offsets_w);
      t.pair("efficiencies", cfg.trim.efficiencies);
    }
    if (r.has("intensity_events")) {
      const json& ev = r.at("intensity_events");
      if (!ev.is_array()) {
        issues.push_back("intensity_events: expected an array");
      } else {
        cfg.intensity_events.clear();
        for (std::size_t i = 0; i < ev.size(); ++i) {
          IntensityEvent e;
          Reader er(ev[i], "intensity_events[" + std::to_string(i) + "]", issues);
          er.number("t_s", e.t_s);
          er.number("scale", e.scale);
          cfg.intensity_events.push_back(e);
        }
      }
    }
    if (r.has("scan")) {
      Reader s(r.at("scan"), "scan", issues);
      s.number("fringes", cfg.scan.fringes);
      s.number("fringe_rate_hz", cfg.scan.fringe_rate_hz);
      s.number("settle_s", cfg.scan.settle_s);
      s.number("transient_s", cfg.scan.transient_s);
      s.integer("phase_poly_degree", cfg.scan.phase_poly_degree);
      s.integer("envelope_poly_degree", cfg.scan.envelope_poly_degree);
      s.number("fringes_per_segment", cfg.scan.fringes_per_segment);
    }
    if (r.has("staircase")) {
      Reader s(r.at("staircase"), "staircase", issues);
      s.numbers("offsets_deg", cfg.staircase.offsets_deg);
      s.number("settle_s", cfg.staircase.settle_s);
      s.number("dwell_s", cfg.staircase.dwell_s);
      s.number("bin_s", cfg.staircase.bin_s);
    }
    r.boolean("calibrate_before_lock", cfg.calibrate_before_lock);
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  validate(cfg);
  return cfg;
}

ScenarioConfig config_from_text(const std::string& text, const ScenarioConfig& base) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    // byte offset -> line:column
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError({"syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " +
                       e.what()});
  }
  return config_from_json(j, base);
}

void set_config_value(ScenarioConfig& cfg, const std::string& path, const json& value) {
  json j = to_json(cfg);
  std::string pointer = "/" + path;
  for (char& ch : pointer) {
    if (ch == '.') ch = '/';
  }
  const json::json_pointer ptr(pointer);
  if (path.empty() || !j.contains(ptr) || j.at(ptr).is_object()) {
    throw ConfigError({path + ": no such configuration value"});
  }
  j[ptr] = value;
  cfg = config_from_json(j, cfg);
}

std::string config_hash(const ScenarioConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace phaselock
