#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "kda/coefficients.hpp"
#include "kda/config.hpp"
#include "kda/error.hpp"
#include "kda/harness.hpp"
#include "kda/rng.hpp"

namespace py = pybind11;
using namespace kda;

namespace {

py::array_t<double> to_array(const GridField& f) {
    py::array_t<double> a(static_cast<py::ssize_t>(f.size()));
    auto m = a.mutable_unchecked<1>();
    for (std::size_t i = 0; i < f.size(); ++i) m(static_cast<py::ssize_t>(i)) = f[i];
    return a;
}

py::array_t<double> to_array(const std::vector<std::vector<double>>& rows) {
    const py::ssize_t r = static_cast<py::ssize_t>(rows.size());
    const py::ssize_t c = r ? static_cast<py::ssize_t>(rows[0].size()) : 0;
    py::array_t<double> a({r, c});
    auto m = a.mutable_unchecked<2>();
    for (py::ssize_t i = 0; i < r; ++i)
        for (py::ssize_t j = 0; j < c; ++j) m(i, j) = rows[i][j];
    return a;
}

py::dict stats_dict(const Ensemble& e) {
    py::dict d;
    d["times"] = e.stats.times;
    d["paths"] = e.stats.paths;
    d["mean"] = to_array(e.stats.mean);
    d["var"] = to_array(e.stats.var);
    d["se_mean"] = to_array(e.stats.se_mean);
    d["max_mass_drift"] = e.stats.max_mass_drift;
    d["dt"] = e.dt;
    return d;
}

py::dict py_validate(const std::string& path) {
    const ExperimentConfig c = load_config(path);
    const Experiment e = build_experiment(c);
    py::dict d;
    d["name"] = c.name;
    d["hash"] = config_hash(c);
    d["radius"] = e.chain.radius();
    d["raw_radius"] = e.raw_radius;
    d["spectral_gap"] = e.chain.spectral_gap();
    d["reversible"] = e.chain.is_reversible();
    d["moment_residual"] = e.model.moment_residual();
    return d;
}

py::dict py_coefficients(const std::string& path) {
    const Experiment e = build_experiment(load_config(path));
    const LimitCoefficients c = compute_limit_coefficients(e.chain, e.model);
    py::list K, Psi;
    for (const auto& k : c.K_star) K.append(to_array(k));
    for (int a = 0; a < c.dim; ++a) Psi.append(to_array(c.Psi[a]));
    py::dict d;
    d["K_M"] = std::vector<double>(c.K_M.begin(), c.K_M.begin() + c.dim * c.dim);
    d["K_star"] = K;
    d["Psi"] = Psi;
    d["eigenvalues"] = c.eigenvalues;
    d["rank"] = c.rank;
    d["kernel_asymmetry"] = c.kernel_asymmetry;
    d["min_raw_eigenvalue"] = c.min_raw_eigenvalue;
    return d;
}

py::dict py_simulate_kinetic(const std::string& path, double epsilon, std::size_t paths, std::uint64_t seed) {
    const Experiment e = build_experiment(load_config(path));
    Ensemble ens;
    {
        py::gil_scoped_release release;
        ens = run_kinetic_ensemble(e, epsilon, paths, seed);
    }
    py::dict d = stats_dict(ens);
    d["min_f"] = ens.stats.min_f;
    d["max_entropy_ratio"] = ens.stats.max_entropy_ratio;
    d["local_eq_mean"] = ens.stats.local_eq_mean;
    return d;
}

py::dict py_simulate_spde(const std::string& path, std::size_t paths, std::uint64_t seed) {
    const Experiment e = build_experiment(load_config(path));
    Ensemble ens;
    {
        py::gil_scoped_release release;
        const LimitCoefficients c = compute_limit_coefficients(e.chain, e.model);
        ens = run_spde_ensemble(e, c, paths, seed);
    }
    return stats_dict(ens);
}

}  // namespace

PYBIND11_MODULE(_kda, m) {
    m.doc() = "Kinetic equations with a random pilot field and their stochastic diffusion limit";
    static py::exception<AdmissibilityError> adm(m, "AdmissibilityError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    // Expose the hypothesis name on the Python exception.
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const AdmissibilityError& e) {
            py::object exc = py::reinterpret_borrow<py::object>(adm.ptr())(e.what());
            exc.attr("hypothesis") = hypothesis_name(e.hypothesis());
            PyErr_SetObject(adm.ptr(), exc.ptr());
        }
    });
    m.def("validate", &py_validate, py::arg("config"), "Build a config and run every admissibility check.");
    m.def("coefficients", &py_coefficients, py::arg("config"), "Limit-equation coefficients for a config.");
    m.def("simulate_kinetic", &py_simulate_kinetic, py::arg("config"), py::arg("epsilon"), py::arg("paths"),
          py::arg("seed"), "Kinetic ensemble statistics of <rho_t, xi_k>.");
    m.def("simulate_spde", &py_simulate_spde, py::arg("config"), py::arg("paths"), py::arg("seed"),
          "Limit-equation ensemble statistics of <rho_t, xi_k>.");
    m.def(
        "derive_seed",
        [](std::uint64_t base, std::uint64_t index, std::uint64_t stream) { return derive_seed(base, index, stream); },
        py::arg("base"), py::arg("index"), py::arg("stream") = 0);
}
