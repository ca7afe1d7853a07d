#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rfmatch/bench.hpp"
#include "rfmatch/error.hpp"
#include "rfmatch/hash.hpp"

namespace py = pybind11;
using namespace rfmatch;

namespace {

using SMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic>;

SMatrix to_matrix(const SParameters& s) {
    SMatrix m(2, 2);
    m << s.s11, s.s12, s.s21, s.s22;
    return m;
}

SParameters from_matrix(const SMatrix& m, double z0) {
    if (m.rows() != 2 || m.cols() != 2) throw InvalidArgument("S-matrix must be 2x2");
    SParameters s;
    s.s11 = m(0, 0);
    s.s12 = m(0, 1);
    s.s21 = m(1, 0);
    s.s22 = m(1, 1);
    s.reference = ReferenceImpedance(z0);
    return s;
}

RunConfig parse_config(const std::string& json_text) {
    if (json_text.empty()) return RunConfig::preset(Profile::desk);
    return RunConfig::from_json(nlohmann::json::parse(json_text));
}

py::dict scenario_dict(const Scenario& s) {
    py::dict d;
    d["id"] = s.id;
    d["f_hz"] = s.f_hz;
    d["cp_opt"] = s.cp_opt;
    d["cs_opt"] = s.cs_opt;
    d["cp_now"] = s.cp_now;
    d["cs_now"] = s.cs_now;
    d["gin"] = s.gin;
    d["gl"] = s.gl;
    d["noise_sigma"] = s.noise_sigma;
    return d;
}

py::dict summary_dict(const Summary& s) {
    py::dict d;
    d["scenarios"] = s.scenarios;
    d["failed"] = s.failed;
    d["compliant"] = s.compliant;
    d["compliance"] = s.compliance;
    d["mean"] = s.mean;
    d["median"] = s.median;
    d["sd"] = s.sd;
    d["mean_evaluations"] = s.mean_evaluations;
    d["median_evaluations"] = s.median_evaluations;
    d["max_evaluations"] = s.max_evaluations;
    return d;
}

py::list history_list(const std::vector<EpochRecord>& h) {
    py::list out;
    for (const auto& e : h) out.append(py::make_tuple(e.epoch, e.train_mse, e.val_mse));
    return out;
}

Dataset sweep_from_rows(const Matrix& rows) {
    if (rows.cols() != 11) throw InvalidArgument("sweep rows need 11 columns");
    Dataset d;
    d.kind = DatasetKind::sweep;
    d.columns = sweep_columns();
    d.rows = rows;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Surrogate-assisted impedance matching: circuits, datasets, models and matchers";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
    auto singular = py::register_exception<SingularNetwork>(m, "SingularNetwork", base.ptr());
    py::register_exception<UnrecoverableLoad>(m, "UnrecoverableLoad", singular.ptr());
    py::register_exception<NoFeasibleSolution>(m, "NoFeasibleSolution", base.ptr());
    py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

    // ------------------------------------------------------------ network
    m.def("impedance_to_reflection",
          [](Complex z, double r) { return impedance_to_reflection(Impedance{z}, ReferenceImpedance(r)).value; },
          py::arg("z"), py::arg("r") = 50.0);
    m.def("reflection_to_impedance",
          [](Complex g, double r) {
              return reflection_to_impedance(ReflectionCoefficient{g}, ReferenceImpedance(r)).value;
          },
          py::arg("gamma"), py::arg("r") = 50.0);
    m.def("input_reflection",
          [](const SMatrix& s, Complex gl, double z0) {
              return input_reflection(from_matrix(s, z0), ReflectionCoefficient{gl}).value;
          },
          py::arg("s"), py::arg("gl"), py::arg("z0") = 50.0, "Gamma_in seen through a two-port into load gl");
    m.def("load_reflection_from_input",
          [](const SMatrix& s, Complex gin, double z0) {
              return load_reflection_from_input(from_matrix(s, z0), ReflectionCoefficient{gin}).value;
          },
          py::arg("s"), py::arg("gin"), py::arg("z0") = 50.0);

    // ------------------------------------------------------------ circuits
    py::class_<CircuitTopology>(m, "Circuit")
        .def_static("load", &load_circuit_spec, py::arg("path"))
        .def_static("reference", &reference_practical_circuit, "The pinned reference circuit")
        .def_static("ideal",
                    [](double flo, double fhi, double cmax) {
                        return ideal_l_topology({flo, fhi}, {0.0, cmax}, {0.0, cmax});
                    },
                    py::arg("f_lo") = 1.5e9, py::arg("f_hi") = 2.0e9, py::arg("c_max") = 10e-12)
        .def_property_readonly("name", &CircuitTopology::name)
        .def_property_readonly("arm_count", [](const CircuitTopology& t) { return t.arms().size(); })
        .def_property_readonly("band_hz", [](const CircuitTopology& t) {
            return py::make_tuple(t.band_hz().lo, t.band_hz().hi);
        })
        .def_property_readonly("p_range", [](const CircuitTopology& t) {
            return py::make_tuple(t.p_range().lo, t.p_range().hi);
        })
        .def_property_readonly("s_range", [](const CircuitTopology& t) {
            return py::make_tuple(t.s_range().lo, t.s_range().hi);
        })
        .def_property_readonly("fingerprint",
                               [](const CircuitTopology& t) { return hex_fingerprint(t.fingerprint()); })
        .def("to_json", [](const CircuitTopology& t) { return t.to_json().dump(); })
        .def("save", [](const CircuitTopology& t, const std::filesystem::path& p) { save_circuit_spec(t, p); })
        .def("__repr__", [](const CircuitTopology& t) {
            return "<Circuit " + t.name() + ", " + std::to_string(t.arms().size()) + " arms>";
        });

    m.def("simulate",
          [](const CircuitTopology& t, double f, double cp, double cs) {
              return to_matrix(simulate(t, {f, cp, cs}));
          },
          py::arg("circuit"), py::arg("f_hz"), py::arg("cp"), py::arg("cs"),
          "2x2 complex S-matrix [[s11, s12], [s21, s22]] at one state");
    m.def("analytical_match",
          [](Complex zl, double f, double r) {
              std::vector<std::pair<double, double>> out;
              for (const auto& s : analytical_match(Impedance{zl}, f, ReferenceImpedance(r)))
                  out.emplace_back(s.cp_farads, s.cs_farads);
              return out;
          },
          py::arg("zl"), py::arg("f_hz"), py::arg("r") = 50.0,
          "Closed-form (cp, cs) pairs matching zl through the ideal L-network");

    // ------------------------------------------------------------ datasets
    m.def("sweep_columns", &sweep_columns);
    m.def("generate_sweep",
          [](const CircuitTopology& t, double f_step_ghz, double c_step_pf, int workers) {
              RunConfig c;
              c.sweep = {f_step_ghz, c_step_pf};
              return generate_sweep(t, c.sweep_spec(t), workers).rows;
          },
          py::arg("circuit"), py::arg("f_step_ghz") = 0.05, py::arg("c_step_pf") = 0.2, py::arg("workers") = 1,
          py::call_guard<py::gil_scoped_release>(), "Exact-oracle sweep rows (f, cp, cs, 8 S components)");
    m.def("generate_scenarios",
          [](const CircuitTopology& t, std::size_t n, std::uint64_t seed, double sigma) {
              const auto suite = generate_scenarios(t, n, seed, sigma);
              py::list out;
              for (const auto& s : suite.scenarios) out.append(scenario_dict(s));
              return out;
          },
          py::arg("circuit"), py::arg("n"), py::arg("seed") = 7, py::arg("noise_sigma") = 0.0);

    // ------------------------------------------------------------ models
    py::class_<MlpModel>(m, "Model")
        .def_static("load", &load_model, py::arg("path"))
        .def("save", [](const MlpModel& mm, const std::filesystem::path& p) { save_model(mm, p); })
        .def_property_readonly("role", [](const MlpModel& mm) { return to_string(mm.role()); })
        .def_property_readonly("width_scale", &MlpModel::width_scale)
        .def_property_readonly("widths", &MlpModel::widths)
        .def_property_readonly("parameter_count", &MlpModel::parameter_count)
        .def_property_readonly("label_scale", &MlpModel::label_scale)
        .def_property_readonly("fingerprint", [](const MlpModel& mm) { return hex_fingerprint(mm.fingerprint()); })
        .def_property_readonly("paired_fingerprint",
                               [](const MlpModel& mm) { return hex_fingerprint(mm.paired_fingerprint()); })
        .def(
            "predict",
            [](const MlpModel& mm, const Matrix& x) -> Matrix {
                if (x.cols() != mm.inputs()) throw InvalidArgument("inputs need one column per model input");
                return mm.predict(x.transpose()).transpose();
            },
            py::arg("inputs"), "Predictions in label units, one row per input row");

    m.def("train_recbm",
          [](const std::string& config, const Matrix& rows, const CircuitTopology& t) {
              TrainedModel tm = [&] {
                  py::gil_scoped_release release;
                  return train_recbm_model(parse_config(config), sweep_from_rows(rows), t.fingerprint());
              }();
              return py::make_tuple(std::move(tm.model), history_list(tm.result.history));
          },
          py::arg("config_json"), py::arg("sweep_rows"), py::arg("circuit"),
          "Train a RECBM-Net on sweep rows; returns (model, [(epoch, train_mse, val_mse)])");
    m.def("train_ims",
          [](const std::string& config, const MlpModel& recbm, double f_step_ghz, double c_step_pf) {
              TrainedModel tm = [&] {
                  py::gil_scoped_release release;
                  RunConfig c = parse_config(config);
                  c.sweep = {f_step_ghz, c_step_pf};
                  const CircuitTopology t = load_topology(c);
                  const Dataset inverse = generate_inverse_dataset(recbm, c.sweep_spec(t));
                  return train_ims_model(c, inverse, recbm);
              }();
              return py::make_tuple(std::move(tm.model), history_list(tm.result.history));
          },
          py::arg("config_json"), py::arg("recbm"), py::arg("f_step_ghz") = 0.05, py::arg("c_step_pf") = 0.2,
          "Build the inverse dataset from a RECBM-Net and train a paired IMS-Net");
    m.def("evaluate_surrogate",
          [](const MlpModel& mm, const Matrix& x, const Matrix& y) {
              const auto r = evaluate_surrogate(mm, x, y);
              py::dict d;
              d["mae"] = r.mae;
              d["mre"] = r.mre;
              d["overall_mae"] = r.overall_mae;
              d["overall_mre"] = r.overall_mre;
              d["samples"] = r.samples;
              return d;
          },
          py::arg("model"), py::arg("inputs"), py::arg("labels"));

    // ------------------------------------------------------------ matching
    m.def("run_matching",
          [](const std::string& config, const CircuitTopology& t, const MlpModel* recbm, const MlpModel* ims,
             std::optional<std::filesystem::path> out_dir) {
              RunReport rep;
              {
                  py::gil_scoped_release release;
                  const RunConfig c = parse_config(config);
                  const ScenarioSuite suite =
                      generate_scenarios(t, c.scenarios.count, c.scenarios.seed, c.scenarios.noise_sigma);
                  rep = run_matching(c, suite, {&t, recbm, ims});
                  rep.manifest = make_manifest(c, "python run_matching");
                  rep.manifest["circuit_fingerprint"] = hex_fingerprint(t.fingerprint());
                  if (out_dir) write_run_report(rep, *out_dir);
              }
              py::dict out;
              for (const auto& sr : rep.strategies)
                  out[py::str(to_string(sr.strategy))] = summary_dict(summarize(sr.rows, rep.compliance_threshold));
              return out;
          },
          py::arg("config_json"), py::arg("circuit"), py::arg("recbm") = nullptr, py::arg("ims") = nullptr,
          py::arg("out_dir") = py::none(), "Run the configured strategies; returns per-strategy summaries");
    m.def("consolidate_reports", &consolidate_reports, py::arg("runs"), py::arg("out_dir"),
          py::arg("inference_cost") = py::none());
    m.def("preset_config", [](const std::string& profile) { return RunConfig::preset(parse_profile(profile)).to_json().dump(); },
          py::arg("profile") = "desk", "Preset run config as a JSON string");
}
