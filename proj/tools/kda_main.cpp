// kda: command-line front end for the kinetic diffusion-approximation toolkit.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kda/coefficients.hpp"
#include "kda/config.hpp"
#include "kda/error.hpp"
#include "kda/generator.hpp"
#include "kda/harness.hpp"
#include "kda/parallel.hpp"
#include "kda/report.hpp"
#include "kda/rng.hpp"

namespace fs = std::filesystem;
using namespace kda;

namespace {

enum Exit { kOk = 0, kChecksFailed = 1, kInadmissible = 2, kUsage = 3, kNumerical = 4 };

struct CommonOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> paths;
    std::vector<double> epsilons;
};

void add_common(CLI::App* sub, CommonOptions& o, bool config_required = true) {
    auto* c = sub->add_option("--config,-c", o.config, "experiment config (JSON)");
    if (config_required) c->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "override the base seed");
    sub->add_option("--out,-o", o.out, "override the output directory");
    sub->add_option("--paths", o.paths, "override path / sample counts (see --help of each command)")
        ->check(CLI::Range(std::size_t{2}, std::size_t{100000000}));
    sub->add_option("--epsilon", o.epsilons, "override epsilon (repeat or comma separated)")->delimiter(',');
}

ExperimentConfig load(const CommonOptions& o) {
    ExperimentConfig c = load_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.out) c.output_dir = *o.out;
    if (!o.epsilons.empty()) {
        c.epsilons = o.epsilons;
        // Re-run validation on the overridden values.
        c = parse_config(serialize_config(c));
    }
    return c;
}

std::string eps_tag(double e) {
    std::string s = fmt(e);
    for (char& ch : s)
        if (ch == '.') ch = 'p';
    return s;
}

struct Run {
    std::string command;
    ExperimentConfig config;
    fs::path out;
    std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

    Run(std::string cmd, ExperimentConfig c) : command(std::move(cmd)), config(std::move(c)), out(config.output_dir) {
        fs::create_directories(out);
    }

    int finish(Json report, bool pass, const Json& extra = Json::object()) {
        report["command"] = command;
        report["config_hash"] = config_hash(config);
        report["pass"] = pass;
        write_json(out / (command + ".json"), report);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_json(out / ("manifest_" + command + ".json"), make_manifest(command, config, wall, extra));
        std::printf("%s: %s (report %s)\n", command.c_str(), pass ? "PASS" : "FAIL",
                    (out / (command + ".json")).string().c_str());
        return pass ? kOk : kChecksFailed;
    }
};

void line(const char* name, bool ok, const std::string& detail) {
    std::printf("  %-28s %s  %s\n", name, ok ? "ok  " : "FAIL", detail.c_str());
}

int cmd_validate(const CommonOptions& o) {
    Run run("validate", load(o));
    Json r;
    try {
        const Experiment e = build_experiment(run.config);
        const PilotChain& ch = e.chain;
        const double alpha = e.model.alpha();
        r["admissible"] = true;
        r["states"] = ch.size();
        r["R"] = ch.radius();
        r["R_before_scaling"] = e.raw_radius;
        r["applied_scale"] = ch.applied_scale();
        r["alpha"] = alpha;
        r["alpha_over_4_margin"] = alpha / 4.0 - ch.radius();
        r["spectral_gap"] = std::isfinite(ch.spectral_gap()) ? Json(ch.spectral_gap()) : Json("inf");
        r["reversible"] = ch.is_reversible();
        r["moment_residual"] = e.model.moment_residual();
        r["hypm_margin"] = e.model.hypm_margin();
        r["min_perturbed_equilibrium"] = min_perturbed_equilibrium(ch, e.model);
        std::printf("admissible: R = %s, alpha = %s, alpha/4 - R = %s, spectral gap = %s, reversible = %s\n",
                    fmt(ch.radius()).c_str(), fmt(alpha).c_str(), fmt(alpha / 4.0 - ch.radius()).c_str(),
                    fmt(ch.spectral_gap()).c_str(), ch.is_reversible() ? "yes" : "no");
        return run.finish(r, true);
    } catch (const AdmissibilityError& ex) {
        r["admissible"] = false;
        r["hypothesis"] = hypothesis_name(ex.hypothesis());
        r["detail"] = ex.what();
        std::printf("inadmissible: %s\n", ex.what());
        run.finish(r, false);
        return kInadmissible;
    }
}

int cmd_simulate_kinetic(const CommonOptions& o) {
    ExperimentConfig cfg = load(o);
    if (o.epsilons.empty()) cfg.epsilons = {cfg.epsilons.back()};
    if (o.paths) cfg.paths.kinetic = *o.paths;
    Run run("simulate-kinetic", cfg);
    const Experiment e = build_experiment(cfg);
    Json r;
    r["ensembles"] = Json::array();
    bool pass = true;
    for (std::size_t i = 0; i < cfg.epsilons.size(); ++i) {
        const double eps = cfg.epsilons[i];
        const Ensemble ens = run_kinetic_ensemble(e, eps, cfg.paths.kinetic, derive_seed(cfg.seed, i, kKineticStream));
        const std::string tag = "kinetic_eps" + eps_tag(eps);
        write_stats_csv(run.out / (tag + "_stats.csv"), ens.stats);
        write_paths_csv(run.out / (tag + "_paths.csv"), ens.paths);
        const bool mass_ok = ens.stats.max_mass_drift <= kMassDriftTol;
        const bool pos_ok = ens.stats.min_f >= kMinFTol;
        const bool ent_ok = ens.stats.max_entropy_ratio <= 1.0 + kEntropySlack;
        std::printf("epsilon %s, %zu paths:\n", fmt(eps).c_str(), ens.stats.paths);
        line("mass drift <= 1e-10", mass_ok, fmt(ens.stats.max_mass_drift));
        line("min f >= -1e-12", pos_ok, fmt(ens.stats.min_f));
        line("entropy ratio <= 1 + 1e-3", ent_ok, fmt(ens.stats.max_entropy_ratio));
        Json j = to_json(ens.stats);
        j["epsilon"] = eps;
        j["dt"] = ens.dt;
        j["mass_ok"] = mass_ok;
        j["positivity_ok"] = pos_ok;
        j["entropy_ok"] = ent_ok;
        r["ensembles"].push_back(j);
        pass = pass && mass_ok && pos_ok && ent_ok;
    }
    return run.finish(r, pass);
}

int cmd_coeffs(const CommonOptions& o) {
    Run run("coeffs", load(o));
    const Experiment e = build_experiment(run.config);
    const LimitCoefficients c = compute_limit_coefficients(e.chain, e.model);
    const EnhancedDiffusionReport enh = enhanced_diffusion_check(c, e.chain);
    write_coefficients_csv(run.out / "coefficients.csv", c, enh);
    write_eigenvalues_csv(run.out / "eigenvalues.csv", c);

    Json r = coefficient_summary(c, e.chain);
    const bool rev = e.chain.is_reversible();
    const bool asym_ok = !rev || c.kernel_asymmetry <= 1e-8;
    const bool eig_ok = c.min_raw_eigenvalue >= -1e-10;
    const bool rank_ok = c.rank <= e.chain.size();
    double sqrt_err = 0.0;
    bool sqrt_checked = false;
    if (c.kernel.size()) {
        const Eigen::MatrixXd h = sqrt_operator(c);
        sqrt_err = (h * h - weighted_kernel(c)).cwiseAbs().maxCoeff();
        sqrt_checked = true;
    }
    const bool sqrt_ok = !sqrt_checked || sqrt_err <= 1e-10;
    const double norm = c.eigenvalues.empty() ? 0.0 : c.eigenvalues.front();
    const double bound = std::isfinite(e.chain.spectral_gap())
                             ? e.chain.radius() * e.chain.radius() / e.chain.spectral_gap()
                             : 0.0;
    const bool norm_ok = !rev || norm <= bound * (1.0 + 1e-12) + 1e-300;
    std::printf("limit coefficients (%d states, reversible = %s):\n", e.chain.size(), rev ? "yes" : "no");
    line("kernel asymmetry <= 1e-8", asym_ok, fmt(c.kernel_asymmetry) + (rev ? "" : " (not asserted)"));
    line("eigenvalues >= -1e-10", eig_ok, fmt(c.min_raw_eigenvalue));
    line("rank <= N", rank_ok, std::to_string(c.rank));
    line("(S^1/2)^2 = S to 1e-10", sqrt_ok, sqrt_checked ? fmt(sqrt_err) : "kernel not assembled");
    line("|S| <= R^2 / gap", norm_ok, fmt(norm) + " vs " + fmt(bound) + (rev ? "" : " (not asserted)"));
    line("K* - K(M) >= -1e-10", enh.pass, fmt(enh.min_eigenvalue) + (rev ? "" : " (not asserted)"));
    r["reversible"] = rev;
    r["checks"] = {{"kernel_asymmetry", asym_ok}, {"eigenvalues_nonnegative", eig_ok}, {"rank", rank_ok},
                   {"sqrt", sqrt_ok},            {"norm_bound", norm_ok},        {"enhanced_diffusion", enh.pass}};
    r["sqrt_error"] = sqrt_err;
    r["norm"] = norm;
    r["norm_bound"] = bound;
    r["enhanced_min_eigenvalue"] = enh.min_eigenvalue;
    return run.finish(r, asym_ok && eig_ok && rank_ok && sqrt_ok && norm_ok && enh.pass);
}

int cmd_simulate_spde(const CommonOptions& o) {
    ExperimentConfig cfg = load(o);
    if (o.paths) cfg.paths.spde = *o.paths;
    Run run("simulate-spde", cfg);
    const Experiment e = build_experiment(cfg);
    const LimitCoefficients c = compute_limit_coefficients(e.chain, e.model);
    const Ensemble ens = run_spde_ensemble(e, c, cfg.paths.spde, derive_seed(cfg.seed, 0, kSpdeStream));
    const Ensemble mean = run_deterministic(e, c, DeterministicMode::mean);
    write_stats_csv(run.out / "spde_stats.csv", ens.stats);
    write_paths_csv(run.out / "spde_paths.csv", ens.paths);
    write_stats_csv(run.out / "mean_equation.csv", mean.stats);
    const MeanCheck mc = compare_mean(ens.stats, mean.stats, cfg.time.compare_times);
    const bool mass_ok = ens.stats.max_mass_drift <= kMassDriftTol;
    std::printf("SPDE ensemble, %zu paths, noise rank %d:\n", ens.stats.paths, c.rank);
    line("mass drift <= 1e-10", mass_ok, fmt(ens.stats.max_mass_drift));
    line("mean vs mean equation", mc.pass, "max |z| = " + fmt(mc.max_abs_z));
    Json r;
    r["stats"] = to_json(ens.stats);
    r["noise_rank"] = c.rank;
    r["dt"] = ens.dt;
    r["mass_ok"] = mass_ok;
    r["mean_check"] = to_json(mc);
    return run.finish(r, mass_ok && mc.pass);
}

int cmd_verify(const CommonOptions& o) {
    ExperimentConfig cfg = load(o);
    if (o.paths) cfg.paths.mc = *o.paths;
    Run run("verify", cfg);
    const Experiment e = build_experiment(cfg);
    const LimitCoefficients c = compute_limit_coefficients(e.chain, e.model);
    const GridField& xi = e.test_functions.front();
    const double burn = default_burn_in(e.chain, 20.0);
    bool pass = true;
    Json r;
    r["burn_in"] = burn;

    Json poisson = Json::array();
    Json solv = Json::array();
    for (std::size_t k = 0; k < cfg.psi.size(); ++k) {
        const PsiKind psi = parse_psi(cfg.psi[k]);
        const CorrectorCalculus calc(e.chain, e.model, make_test_function(xi, psi));
        const PoissonReport pr = verify_poisson_phi1(calc, e.model, 100, derive_seed(cfg.seed, k, kMcStream));
        const bool ok = pr.max_residual <= 1e-8 && pr.max_sharp_phi <= 1e-12;
        line(("Poisson residual " + cfg.psi[k]).c_str(), ok, fmt(pr.max_residual));
        Json j = to_json(pr);
        j["psi"] = cfg.psi[k];
        j["pass"] = ok;
        poisson.push_back(j);
        pass = pass && ok;
        const McCheck s = verify_solvability(calc, e.chain, e.model, e.rho_in, cfg.paths.mc, burn,
                                             derive_seed(cfg.seed, 100 + k, kMcStream));
        line(("solvability " + cfg.psi[k]).c_str(), s.pass, "z = " + fmt(s.z));
        Json js = to_json(s);
        js["psi"] = cfg.psi[k];
        solv.push_back(js);
        pass = pass && s.pass;
    }
    r["poisson"] = poisson;
    r["solvability"] = solv;

    // Limit generator against the assembled coefficients and the S quadratic form.
    {
        const CorrectorCalculus id(e.chain, e.model, make_test_function(xi, PsiKind::identity));
        const CorrectorCalculus sq(e.chain, e.model, make_test_function(xi, PsiKind::half_square));
        const double gb = id.limit_generator(e.rho_in).total();
        const double b = b_from_coefficients(e.rho_in, xi, c);
        const double q2 = sq.limit_generator(e.rho_in).second_order;
        const double qs = quadratic_form(c, gradient(xi) * e.rho_in);
        const bool ok = std::abs(gb - b) <= 1e-10 && std::abs(q2 - qs) <= 1e-10;
        line("limit generator cross-check", ok, fmt(std::abs(gb - b)) + ", " + fmt(std::abs(q2 - qs)));
        r["limit_generator"] = {{"L_phi_identity", gb}, {"b", b}, {"second_order_half_square", q2},
                                {"S_quadratic_form", qs}, {"pass", ok}};
        pass = pass && ok;
    }
    const StationarityReport st =
        verify_stationarity_identities(e.chain, e.model, e.rho_in, xi, cfg.paths.mc, burn, derive_seed(cfg.seed, 200, kMcStream));
    const CorrectorCalculus id(e.chain, e.model, make_test_function(xi, PsiKind::identity));
    const McCheck cen = verify_centering(id, e.chain, e.model, e.rho_in, cfg.paths.mc, burn,
                                         derive_seed(cfg.seed, 201, kMcStream));
    line("JD1", st.jd1.pass, "z = " + fmt(st.jd1.z));
    line("JJD2", st.jjd2.pass, "z = " + fmt(st.jjd2.z));
    line("centering", cen.pass, "z = " + fmt(cen.z));
    r["JD1"] = to_json(st.jd1);
    r["JJD2"] = to_json(st.jjd2);
    r["centering"] = to_json(cen);
    pass = pass && st.jd1.pass && st.jjd2.pass && cen.pass;
    return run.finish(r, pass);
}

int cmd_converge(const CommonOptions& o) {
    ExperimentConfig cfg = load(o);
    if (o.paths) cfg.paths.kinetic = cfg.paths.scaling = cfg.paths.spde = *o.paths;
    Run run("converge", cfg);
    const Experiment e = build_experiment(cfg);
    const LimitCoefficients c = compute_limit_coefficients(e.chain, e.model);
    const ConvergenceReport rep = run_convergence_study(e, c);
    write_scaling_csv(run.out / "scaling.csv", rep);
    for (const auto& k : rep.kinetic) {
        const std::string tag = "kinetic_eps" + eps_tag(k.epsilon);
        write_stats_csv(run.out / (tag + "_stats.csv"), k.stats);
        write_paths_csv(run.out / (tag + "_paths.csv"), k.paths);
    }
    write_stats_csv(run.out / "spde_stats.csv", rep.spde.stats);
    write_paths_csv(run.out / "spde_paths.csv", rep.spde.paths);
    write_stats_csv(run.out / "mean_equation.csv", rep.mean_solution.stats);

    const bool slope_needed = cfg.epsilons.size() >= 2;
    if (slope_needed)
        line("local-eq slope in [1.7, 2.3]", rep.slope_pass, fmt(rep.fit.slope) + " +- " + fmt(rep.fit.slope_se));
    line("law comparison", rep.law.pass,
         "max |z| = " + fmt(rep.law.max_abs_z) + ", var ratios [" + fmt(rep.law.min_ratio) + ", " +
             fmt(rep.law.max_ratio) + "]");
    line("SPDE mean vs mean equation", rep.mean_check.pass, "max |z| = " + fmt(rep.mean_check.max_abs_z));
    line("conservation / positivity", rep.conservation_pass, "");
    line("entropy estimate", rep.entropy_pass, "");
    Json r;
    r["epsilons"] = rep.epsilons;
    r["local_eq_mean"] = rep.local_eq_mean;
    r["local_eq_se"] = rep.local_eq_se;
    r["fit"] = to_json(rep.fit);
    r["slope_pass"] = slope_needed ? Json(rep.slope_pass) : Json(nullptr);
    Json kin = Json::array();
    for (const auto& k : rep.kinetic) {
        Json j = to_json(k.stats);
        j["epsilon"] = k.epsilon;
        j["dt"] = k.dt;
        kin.push_back(j);
    }
    r["kinetic"] = kin;
    r["spde"] = to_json(rep.spde.stats);
    r["law"] = to_json(rep.law);
    r["mean_check"] = to_json(rep.mean_check);
    r["conservation_pass"] = rep.conservation_pass;
    r["entropy_pass"] = rep.entropy_pass;
    return run.finish(r, rep.pass);
}

int cmd_report(const CommonOptions& o) {
    fs::path dir;
    ExperimentConfig cfg;
    if (!o.config.empty()) {
        cfg = load(o);
        dir = cfg.output_dir;
    }
    if (o.out) dir = *o.out;
    if (dir.empty()) throw ConfigError("report needs --out or --config");
    if (!fs::is_directory(dir)) throw ConfigError("output directory '" + dir.string() + "' does not exist");
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.path().extension() == ".json" && name.rfind("manifest_", 0) != 0 && name != "report.json")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    Json summary;
    Json items = Json::array();
    bool all = !files.empty();
    std::string md = "| command | result |\n|---|---|\n";
    for (const auto& f : files) {
        const Json j = read_json(f);
        if (!j.contains("pass") || !j.contains("command")) continue;
        const bool p = j["pass"].get<bool>();
        items.push_back({{"command", j["command"]}, {"file", f.filename().string()}, {"pass", p}});
        md += "| " + j["command"].get<std::string>() + " | " + (p ? "PASS" : "FAIL") + " |\n";
        all = all && p;
        std::printf("  %-20s %s\n", j["command"].get<std::string>().c_str(), p ? "PASS" : "FAIL");
    }
    all = all && !items.empty();
    summary["command"] = "report";
    summary["reports"] = items;
    summary["pass"] = all;
    write_json(dir / "report.json", summary);
    std::ofstream(dir / "report.md") << md;
    std::printf("report: %s (%zu reports)\n", all ? "PASS" : "FAIL", items.size());
    return all ? kOk : kChecksFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Kinetic equation driven by a Markov pilot: simulation, limit coefficients and checks.\n"
                 "Worker threads: KDA_WORKERS (default: hardware concurrency)."};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));
    CommonOptions o;
    auto* validate = app.add_subcommand("validate", "check admissibility of the config");
    auto* kin = app.add_subcommand("simulate-kinetic", "kinetic ensembles (--paths: paths per epsilon)");
    auto* coeffs = app.add_subcommand("coeffs", "limit coefficients and covariance operator");
    auto* spde = app.add_subcommand("simulate-spde", "SPDE ensemble (--paths: SPDE paths)");
    auto* verify = app.add_subcommand("verify", "generator calculus checks (--paths: Monte Carlo samples)");
    auto* converge = app.add_subcommand("converge", "full convergence study (--paths: every ensemble)");
    auto* report = app.add_subcommand("report", "summarize the JSON reports in the output directory");
    for (auto* s : {validate, kin, coeffs, spde, verify, converge}) add_common(s, o);
    add_common(report, o, false);
    CLI11_PARSE(app, argc, argv);
    try {
        (void)worker_count();  // reject a malformed KDA_WORKERS up front
        if (*validate) return cmd_validate(o);
        if (*kin) return cmd_simulate_kinetic(o);
        if (*coeffs) return cmd_coeffs(o);
        if (*spde) return cmd_simulate_spde(o);
        if (*verify) return cmd_verify(o);
        if (*converge) return cmd_converge(o);
        if (*report) return cmd_report(o);
    } catch (const ConfigError& ex) {
        std::fprintf(stderr, "config error: %s\n", ex.what());
        return kUsage;
    } catch (const AdmissibilityError& ex) {
        std::fprintf(stderr, "inadmissible: %s\n", ex.what());
        return kInadmissible;
    } catch (const NumericalError& ex) {
        std::fprintf(stderr, "numerical error: %s\n", ex.what());
        return kNumerical;
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return kUsage;
    }
    return kUsage;
}
