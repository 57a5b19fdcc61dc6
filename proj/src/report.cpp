#include "kda/report.hpp"

#include <cmath>
#include <charconv>
#include <fstream>
#include <stdexcept>

namespace kda {

namespace fs = std::filesystem;

std::string fmt(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

namespace {

// JSON has no inf/nan; store those as strings.
Json num(double x) { return std::isfinite(x) ? Json(x) : Json(fmt(x)); }

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

}  // namespace

Json to_json(const EnsembleStats& s) {
    Json j;
    j["paths"] = s.paths;
    j["observables"] = s.observables;
    j["max_mass_drift"] = num(s.max_mass_drift);
    j["min_f"] = num(s.min_f);
    j["max_entropy_ratio"] = num(s.max_entropy_ratio);
    j["local_eq_mean"] = num(s.local_eq_mean);
    j["local_eq_se"] = num(s.local_eq_se);
    return j;
}

Json to_json(const LawComparison& c) {
    Json j;
    j["pass"] = c.pass;
    j["means_pass"] = c.means_pass;
    j["variances_pass"] = c.variances_pass;
    j["max_abs_z"] = num(c.max_abs_z);
    j["min_var_ratio"] = num(c.min_ratio);
    j["max_var_ratio"] = num(c.max_ratio);
    j["z_limit"] = kLawMaxZ;
    j["var_ratio_range"] = {kVarRatioLow, kVarRatioHigh};
    Json cells = Json::array();
    for (const auto& c2 : c.cells)
        cells.push_back({{"t", c2.t},
                         {"observable", c2.observable},
                         {"mean_a", num(c2.mean_a)},
                         {"mean_b", num(c2.mean_b)},
                         {"z", num(c2.z)},
                         {"var_a", num(c2.var_a)},
                         {"var_b", num(c2.var_b)},
                         {"var_ratio", num(c2.var_ratio)},
                         {"mean_ok", c2.mean_ok},
                         {"var_ok", c2.var_ok}});
    j["cells"] = cells;
    return j;
}

Json to_json(const MeanCheck& m) {
    return {{"pass", m.pass}, {"max_abs_z", num(m.max_abs_z)}, {"max_abs_diff", num(m.max_abs_diff)}};
}

Json to_json(const SlopeFit& f) {
    return {{"slope", num(f.slope)}, {"intercept", num(f.intercept)}, {"slope_se", num(f.slope_se)}};
}

Json to_json(const McCheck& c) {
    return {{"name", c.name},       {"estimate", num(c.estimate)}, {"exact", num(c.exact)},
            {"std_error", num(c.std_error)}, {"z", num(c.z)},   {"samples", c.samples},
            {"pass", c.pass}};
}

Json to_json(const PoissonReport& r) {
    return {{"samples", r.samples},
            {"max_residual", num(r.max_residual)},
            {"max_abs_L_flat_phi", num(r.max_scale)},
            {"max_abs_L_sharp_phi", num(r.max_sharp_phi)}};
}

Json coefficient_summary(const LimitCoefficients& c, const PilotChain& chain) {
    Json j;
    j["dim"] = c.dim;
    j["K_M"] = std::vector<double>(c.K_M.begin(), c.K_M.begin() + c.dim * c.dim);
    j["min_K_star_eigenvalue"] = num(c.min_K_star_eigenvalue);
    j["K_star_asymmetry"] = num(c.K_star_asymmetry);
    j["kernel_asymmetry"] = num(c.kernel_asymmetry);
    j["kernel_max_abs"] = num(c.kernel_max_abs);
    j["min_raw_eigenvalue"] = num(c.min_raw_eigenvalue);
    j["rank"] = c.rank;
    j["states"] = chain.size();
    j["dense_eigensolve"] = c.dense_eigensolve;
    Json ev = Json::array();
    for (double m : c.eigenvalues) ev.push_back(num(m));
    j["eigenvalues"] = ev;
    return j;
}

void write_stats_csv(const fs::path& p, const EnsembleStats& s) {
    auto out = open_out(p);
    out << "t,observable,mean,var,se_mean,se_var,paths\n";
    for (std::size_t t = 0; t < s.times.size(); ++t)
        for (std::size_t k = 0; k < s.observables; ++k)
            out << fmt(s.times[t]) << ',' << k << ',' << fmt(s.mean[t][k]) << ',' << fmt(s.var[t][k]) << ','
                << fmt(s.se_mean[t][k]) << ',' << fmt(s.se_var[t][k]) << ',' << s.paths << '\n';
}

void write_paths_csv(const fs::path& p, const std::vector<PathRecord>& paths) {
    auto out = open_out(p);
    out << "path,seed,max_mass_drift,min_f,max_entropy_ratio,local_eq_integral,max_h1,steps,jumps\n";
    for (std::size_t i = 0; i < paths.size(); ++i) {
        const auto& r = paths[i];
        out << i << ',' << r.seed << ',' << fmt(r.max_mass_drift) << ',' << fmt(r.min_f) << ','
            << fmt(r.max_entropy_ratio) << ',' << fmt(r.local_eq_integral) << ',' << fmt(r.max_h1) << ',' << r.steps
            << ',' << r.jumps << '\n';
    }
}

void write_coefficients_csv(const fs::path& p, const LimitCoefficients& c, const EnhancedDiffusionReport& enhanced) {
    auto out = open_out(p);
    const int d = c.dim;
    const char* ax = "xy";
    out << "x";
    if (d == 2) out << ",y";
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) out << ",K_" << ax[a] << ax[b];
    for (int a = 0; a < d; ++a) out << ",Psi_" << ax[a];
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) out << ",Kstrato_" << ax[a] << ax[b];
    for (int a = 0; a < d; ++a) out << ",PsiStrato_" << ax[a];
    out << ",min_eig_Kstar_minus_KM\n";
    const Grid& g = *c.grid;
    for (std::size_t x = 0; x < g.size(); ++x) {
        out << fmt(g.coordinate(x, 0));
        if (d == 2) out << ',' << fmt(g.coordinate(x, 1));
        for (int i = 0; i < d * d; ++i) out << ',' << fmt(c.K_star[i][x]);
        for (int a = 0; a < d; ++a) out << ',' << fmt(c.Psi[a][x]);
        for (int i = 0; i < d * d; ++i) out << ',' << fmt(c.K_strato[i][x]);
        for (int a = 0; a < d; ++a) out << ',' << fmt(c.Psi_strato[a][x]);
        out << ',' << fmt(enhanced.eigenvalue_field[x]) << '\n';
    }
}

void write_eigenvalues_csv(const fs::path& p, const LimitCoefficients& c) {
    auto out = open_out(p);
    out << "k,eigenvalue\n";
    for (std::size_t k = 0; k < c.eigenvalues.size(); ++k) out << k << ',' << fmt(c.eigenvalues[k]) << '\n';
}

void write_scaling_csv(const fs::path& p, const ConvergenceReport& r) {
    auto out = open_out(p);
    out << "epsilon,local_eq_mean,local_eq_se,paths\n";
    for (std::size_t i = 0; i < r.epsilons.size(); ++i)
        out << fmt(r.epsilons[i]) << ',' << fmt(r.local_eq_mean[i]) << ',' << fmt(r.local_eq_se[i]) << ','
            << r.kinetic[i].stats.paths << '\n';
}

void write_json(const fs::path& p, const Json& j) {
    auto out = open_out(p);
    out << j.dump(2) << '\n';
}

Json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return Json::parse(in);
}

Json make_manifest(const std::string& command, const ExperimentConfig& c, double wall_seconds, const Json& extra) {
    Json m;
    m["manifest_schema"] = kManifestSchema;
    m["version"] = kVersion;
    m["command"] = command;
    m["config_hash"] = config_hash(c);
    m["config_name"] = c.name;
    m["base_seed"] = c.seed;
    m["seed_streams"] = {{"kinetic", static_cast<std::uint64_t>(kKineticStream)},
                         {"spde", static_cast<std::uint64_t>(kSpdeStream)},
                         {"mc", static_cast<std::uint64_t>(kMcStream)}};
    m["grid"] = {{"dim", c.dim}, {"resolution", c.resolution}};
    m["epsilons"] = c.epsilons;
    m["kinetic_dt_factor"] = c.time.dt_factor;
    m["spde_dt"] = c.time.spde_dt;
    m["paths"] = {{"kinetic", c.paths.kinetic}, {"scaling", c.paths.scaling}, {"spde", c.paths.spde}, {"mc", c.paths.mc}};
    m["wall_seconds"] = wall_seconds;
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    return m;
}

}  // namespace kda
