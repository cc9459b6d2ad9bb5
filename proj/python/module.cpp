#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "phaselock/analysis.hpp"
#include "phaselock/cli.hpp"
#include "phaselock/config_json.hpp"
#include "phaselock/control.hpp"
#include "phaselock/errors.hpp"
#include "phaselock/estimator.hpp"
#include "phaselock/mzi_model.hpp"
#include "phaselock/simloop.hpp"

namespace py = pybind11;
using namespace phaselock;

namespace {

py::array_t<double> to_array(const std::vector<double>& v) {
  py::array_t<double> a(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

ArccosMode arccos_mode(bool strict) { return strict ? ArccosMode::kStrict : ArccosMode::kSaturate; }

py::dict series_dict(const RunSeries& s) {
  py::dict d;
  d["sample_rate_hz"] = s.sample_rate_hz;
  d["t_s"] = to_array(s.t_s);
  d["phi_sig_deg"] = to_array(s.phi_sig_deg);
  d["phi_ref_deg"] = to_array(s.phi_ref_deg);
  d["d1_W"] = to_array(s.d1_w);
  d["d2_W"] = to_array(s.d2_w);
  d["d3_W"] = to_array(s.d3_w);
  d["d4_W"] = to_array(s.d4_w);
  d["v_act_V"] = to_array(s.v_act_v);
  d["phi_comp_deg"] = to_array(s.phi_comp_deg);
  return d;
}

TimeSeries series_of(const std::vector<double>& values, double rate) { return TimeSeries{rate, values, "deg"}; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Phase-locked dual-wavelength interferometer simulator";
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<UndefinedPhaseError>(m, "UndefinedPhaseError", PyExc_ValueError);
  py::register_exception<InsufficientDataError>(m, "InsufficientDataError", PyExc_RuntimeError);

  m.attr("__version__") = software_version();

  m.def("estimate_phase_eq1", [](double i1, double i2, double v1, double v2, double mu_out, bool strict) {
        return estimate_phase_eq1(i1, i2, v1, v2, mu_out, arccos_mode(strict));
      },
      py::arg("i1"), py::arg("i2"), py::arg("v1"), py::arg("v2"), py::arg("mu_out"), py::arg("strict") = false,
      "Phase in radians from the two output intensities.");
  m.def("compensating_mu_out", &compensating_mu_out, py::arg("loss"));
  m.def("predicted_phase_eq2", [](double phase, double t1, double t2, double mu_arm, bool strict) {
        return predicted_phase_eq2(phase, t1, t2, mu_arm, arccos_mode(strict));
      },
      py::arg("phase_rad"), py::arg("t1"), py::arg("t2"), py::arg("mu_arm"), py::arg("strict") = false);
  m.def("relative_drift_eq3", &relative_drift_eq3, py::arg("lambda_s_m"), py::arg("lambda_r_m"), py::arg("opd_s_m"),
        py::arg("opd_r_m"), py::arg("dlambda_s_m"), py::arg("dlambda_r_m"));
  m.def("coupler_model", [](double phase, double t1, double t2, double mu_arm) {
        const auto o = coupler_model(phase, t1, t2, mu_arm);
        return py::make_tuple(o.i1, o.i2);
      },
      py::arg("phase_rad"), py::arg("t1"), py::arg("t2"), py::arg("mu_arm") = 0.0);
  m.def("setpoint_fraction", &setpoint_fraction, py::arg("target_phase_rad"), py::arg("v1"), py::arg("v2"));

  m.def("preset_names", &cli::preset_names);
  m.def("preset_config", [](const std::string& name, bool full_duration) {
        return to_json(cli::preset(name, full_duration).config).dump();
      },
      py::arg("name"), py::arg("full_duration") = false, "Preset configuration as JSON text.");
  m.def("default_config", [] { return to_json(default_config()).dump(); });
  m.def("validate_config", [](const std::string& text) { validate(config_from_text(text)); }, py::arg("config_json"));

  m.def("run", [](const std::string& text) {
        const ScenarioConfig cfg = config_from_text(text);
        RunRecord rec;
        {
          py::gil_scoped_release release;
          rec = run_scenario(cfg);
        }
        py::dict out;
        out["metadata"] = metadata_json(rec);
        out["series"] = series_dict(rec.slow);
        out["fast"] = series_dict(rec.fast);
        out["phi_sig_est_deg"] = to_array(rec.phi_sig_est_deg);
        std::ostringstream csv;
        write_csv(rec.slow, csv);
        out["csv"] = csv.str();
        return out;
      },
      py::arg("config_json"), "Runs one scenario given its JSON configuration.");

  m.def("allan_deviation", [](const std::vector<double>& values, double rate, std::optional<std::vector<double>> taus) {
        const TimeSeries s = series_of(values, rate);
        const AllanCurve c = allan_deviation(s, taus ? *taus : default_taus(s));
        return py::make_tuple(to_array(c.tau_s), c.deviation, c.terms);
      },
      py::arg("values"), py::arg("sample_rate_hz") = 1.0, py::arg("taus_s") = py::none(),
      "Returns (tau_s, deviation with None where undefined, terms).");
  m.def("power_spectral_density", [](const std::vector<double>& values, double rate, std::optional<std::size_t> len,
                                     double overlap) {
        const TimeSeries s = series_of(values, rate);
        const PsdCurve c = power_spectral_density(s, len ? *len : default_segment_length(values.size()), overlap);
        return py::make_tuple(to_array(c.frequency_hz), to_array(c.density));
      },
      py::arg("values"), py::arg("sample_rate_hz") = 1.0, py::arg("segment_length") = py::none(),
      py::arg("overlap") = 0.5);
  m.def("windowed_std", [](const std::vector<double>& values, double rate, bool detrend) {
        return windowed_std(series_of(values, rate), detrend);
      },
      py::arg("values"), py::arg("sample_rate_hz") = 1.0, py::arg("detrend") = false);

  m.def("cli", [](std::vector<std::string> args) {
        args.insert(args.begin(), "phaselock");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        argv.push_back(nullptr);
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = cli::main(static_cast<int>(args.size()), argv.data(), out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line front end; returns (exit code, stdout, stderr).");
}
