#include "kda/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "kda/error.hpp"
#include "kda/parallel.hpp"
#include "kda/rng.hpp"

namespace kda {

std::vector<double> snapshot_times(const TimeSpec& t) {
    std::vector<double> out;
    for (int k = 0; k <= t.mesh_intervals; ++k) out.push_back(t.t_end * k / t.mesh_intervals);
    return out;
}

EnsembleStats compute_stats(const std::vector<PathRecord>& paths, const std::vector<double>& times) {
    EnsembleStats s;
    s.times = times;
    s.paths = paths.size();
    if (paths.empty()) return s;
    const std::size_t nt = times.size();
    s.observables = paths.front().obs.empty() ? 0 : paths.front().obs.front().size();
    const double n = static_cast<double>(paths.size());
    auto grid = [&]() { return std::vector<std::vector<double>>(nt, std::vector<double>(s.observables, 0.0)); };
    s.mean = grid();
    s.var = grid();
    s.se_mean = grid();
    s.se_var = grid();
    for (std::size_t t = 0; t < nt; ++t)
        for (std::size_t k = 0; k < s.observables; ++k) {
            double m = 0.0;
            for (const auto& p : paths) m += p.obs[t][k];
            m /= n;
            double m2 = 0.0, m4 = 0.0;
            for (const auto& p : paths) {
                const double d = p.obs[t][k] - m;
                m2 += d * d;
                m4 += d * d * d * d;
            }
            const double var = paths.size() > 1 ? m2 / (n - 1.0) : 0.0;
            m4 /= n;
            const double pop = m2 / n;
            s.mean[t][k] = m;
            s.var[t][k] = var;
            s.se_mean[t][k] = std::sqrt(var / n);
            s.se_var[t][k] = std::sqrt(std::max(0.0, m4 - pop * pop) / n);
        }
    s.min_f = std::numeric_limits<double>::infinity();
    double le = 0.0, le2 = 0.0;
    for (const auto& p : paths) {
        s.max_mass_drift = std::max(s.max_mass_drift, p.max_mass_drift);
        s.min_f = std::min(s.min_f, p.min_f);
        s.max_entropy_ratio = std::max(s.max_entropy_ratio, p.max_entropy_ratio);
        le += p.local_eq_integral;
    }
    s.local_eq_mean = le / n;
    for (const auto& p : paths) le2 += (p.local_eq_integral - s.local_eq_mean) * (p.local_eq_integral - s.local_eq_mean);
    s.local_eq_se = paths.size() > 1 ? std::sqrt(le2 / (n - 1.0) / n) : 0.0;
    return s;
}

namespace {

std::vector<double> observe(const GridField& rho, const std::vector<GridField>& xi) {
    std::vector<double> o;
    for (const auto& x : xi) o.push_back(l2_inner(rho, x));
    return o;
}

SpdeOptions spde_options(const Experiment& e) {
    SpdeOptions o;
    o.t_end = e.config.time.t_end;
    o.dt = e.config.time.spde_dt;
    o.mesh_intervals = e.config.time.mesh_intervals;
    o.test_functions = e.test_functions;
    return o;
}

PathRecord spde_record(const SpdeTrajectory& tr) {
    PathRecord r;
    r.seed = tr.seed;
    for (const auto& s : tr.snapshots) r.obs.push_back(s.observables);
    r.max_mass_drift = tr.max_mass_drift;
    r.max_h1 = tr.max_h1;
    r.steps = tr.steps;
    return r;
}

}  // namespace

Ensemble run_kinetic_ensemble(const Experiment& e, double epsilon, std::size_t paths, std::uint64_t base_seed) {
    Ensemble ens;
    ens.kind = "kinetic";
    ens.epsilon = epsilon;
    KineticOptions o;
    o.epsilon = epsilon;
    o.t_end = e.config.time.t_end;
    o.dt_target = e.config.time.dt_factor * epsilon * epsilon;
    o.mesh_intervals = e.config.time.mesh_intervals;
    ens.dt = o.dt_target;
    const KineticDensity f_in = KineticDensity::local_equilibrium(e.rho_in, e.model);
    ens.paths.resize(paths);
    parallel_for(paths, [&](std::size_t p) {
        const std::uint64_t seed = derive_seed(base_seed, p, kKineticStream);
        KineticTrajectory tr;
        try {
            tr = simulate_path(f_in, e.chain, e.model, o, seed);
        } catch (const std::exception& ex) {
            throw NumericalError("kinetic path " + std::to_string(p) + " (seed " + std::to_string(seed) +
                                 ", epsilon " + std::to_string(epsilon) + ") failed: " + ex.what());
        }
        PathRecord r;
        r.seed = seed;
        for (const auto& s : tr.snapshots) r.obs.push_back(observe(s.rho, e.test_functions));
        r.max_mass_drift = tr.max_mass_drift;
        r.min_f = tr.min_f;
        r.max_entropy_ratio = tr.max_entropy_ratio;
        r.local_eq_integral = tr.local_eq_integral;
        r.steps = tr.steps;
        r.jumps = tr.jumps;
        ens.paths[p] = std::move(r);
    });
    ens.stats = compute_stats(ens.paths, snapshot_times(e.config.time));
    return ens;
}

Ensemble run_spde_ensemble(const Experiment& e, const LimitCoefficients& c, std::size_t paths,
                           std::uint64_t base_seed) {
    Ensemble ens;
    ens.kind = "spde";
    const SpdeOptions o = spde_options(e);
    ens.dt = o.dt;
    const SpdeStepper stepper(limit_equation(c), o.dt);
    ens.paths.resize(paths);
    parallel_for(paths, [&](std::size_t p) {
        const std::uint64_t seed = derive_seed(base_seed, p, kSpdeStream);
        try {
            ens.paths[p] = spde_record(simulate_spde(stepper, e.rho_in, o, seed));
        } catch (const std::exception& ex) {
            throw NumericalError("SPDE path " + std::to_string(p) + " (seed " + std::to_string(seed) +
                                 ") failed: " + ex.what());
        }
    });
    ens.stats = compute_stats(ens.paths, snapshot_times(e.config.time));
    return ens;
}

Ensemble run_deterministic(const Experiment& e, const LimitCoefficients& c, DeterministicMode mode) {
    Ensemble ens;
    ens.kind = mode == DeterministicMode::mean ? "mean" : "plain";
    const SpdeOptions o = spde_options(e);
    ens.dt = o.dt;
    ens.paths.push_back(spde_record(solve_deterministic(e.rho_in, mode, c, o)));
    ens.stats = compute_stats(ens.paths, snapshot_times(e.config.time));
    return ens;
}

namespace {

std::size_t time_index(const std::vector<double>& times, double t) {
    for (std::size_t i = 0; i < times.size(); ++i)
        if (std::abs(times[i] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return i;
    throw std::invalid_argument("time " + std::to_string(t) + " is not on the snapshot mesh");
}

void check_mesh(const EnsembleStats& a, const EnsembleStats& b) {
    if (a.times.size() != b.times.size() || a.observables != b.observables)
        throw std::invalid_argument("ensembles have different time meshes or observables");
    for (std::size_t i = 0; i < a.times.size(); ++i)
        if (std::abs(a.times[i] - b.times[i]) > 1e-12) throw std::invalid_argument("ensemble time meshes differ");
}

double z_score(double diff, double se) {
    if (se > 0.0) return diff / se;
    return diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
}

}  // namespace

LawComparison compare_laws(const EnsembleStats& a, const EnsembleStats& b, const std::vector<double>& at_times) {
    check_mesh(a, b);
    LawComparison out;
    out.means_pass = out.variances_pass = true;
    out.min_ratio = std::numeric_limits<double>::infinity();
    out.max_ratio = 0.0;
    for (double t : at_times) {
        const std::size_t ti = time_index(a.times, t);
        for (std::size_t k = 0; k < a.observables; ++k) {
            LawCell c;
            c.t = a.times[ti];
            c.observable = k;
            c.mean_a = a.mean[ti][k];
            c.mean_b = b.mean[ti][k];
            c.z = z_score(c.mean_a - c.mean_b, std::hypot(a.se_mean[ti][k], b.se_mean[ti][k]));
            c.var_a = a.var[ti][k];
            c.var_b = b.var[ti][k];
            if (c.var_b > 0.0)
                c.var_ratio = c.var_a / c.var_b;
            else
                c.var_ratio = c.var_a > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
            c.mean_ok = std::abs(c.z) <= kLawMaxZ;
            c.var_ok = c.var_ratio >= kVarRatioLow && c.var_ratio <= kVarRatioHigh;
            out.max_abs_z = std::max(out.max_abs_z, std::abs(c.z));
            out.min_ratio = std::min(out.min_ratio, c.var_ratio);
            out.max_ratio = std::max(out.max_ratio, c.var_ratio);
            out.means_pass = out.means_pass && c.mean_ok;
            out.variances_pass = out.variances_pass && c.var_ok;
            out.cells.push_back(c);
        }
    }
    out.pass = out.means_pass && out.variances_pass && !out.cells.empty();
    return out;
}

MeanCheck compare_mean(const EnsembleStats& ens, const EnsembleStats& det, const std::vector<double>& at_times) {
    check_mesh(ens, det);
    MeanCheck m;
    for (double t : at_times) {
        const std::size_t ti = time_index(ens.times, t);
        for (std::size_t k = 0; k < ens.observables; ++k) {
            const double diff = ens.mean[ti][k] - det.mean[ti][k];
            m.max_abs_diff = std::max(m.max_abs_diff, std::abs(diff));
            m.max_abs_z = std::max(m.max_abs_z, std::abs(z_score(diff, ens.se_mean[ti][k])));
        }
    }
    m.pass = m.max_abs_z <= kLawMaxZ;
    return m;
}

SlopeFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("log-log fit needs at least two points");
    const std::size_t n = x.size();
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw std::invalid_argument("log-log fit needs positive data");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    SlopeFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (n > 2) {
        double rss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = ly[i] - f.intercept - f.slope * lx[i];
            rss += r * r;
        }
        f.slope_se = std::sqrt(rss / (n - 2) / sxx);
    }
    return f;
}

ConvergenceReport run_convergence_study(const Experiment& e, const LimitCoefficients& c) {
    const ExperimentConfig& cfg = e.config;
    ConvergenceReport r;
    r.epsilons = cfg.epsilons;
    for (std::size_t i = 0; i < cfg.epsilons.size(); ++i) {
        const bool last = i + 1 == cfg.epsilons.size();
        const std::size_t n = last ? std::max(cfg.paths.kinetic, cfg.paths.scaling) : cfg.paths.scaling;
        // Each epsilon has its own seed family so ensembles are independent.
        r.kinetic.push_back(run_kinetic_ensemble(e, cfg.epsilons[i], n, derive_seed(cfg.seed, i, kKineticStream)));
        r.local_eq_mean.push_back(r.kinetic.back().stats.local_eq_mean);
        r.local_eq_se.push_back(r.kinetic.back().stats.local_eq_se);
    }
    if (cfg.epsilons.size() >= 2) {
        r.fit = loglog_fit(r.epsilons, r.local_eq_mean);
        r.slope_pass = r.fit.slope >= kSlopeLow && r.fit.slope <= kSlopeHigh;
    }
    r.spde = run_spde_ensemble(e, c, cfg.paths.spde, derive_seed(cfg.seed, 0, kSpdeStream));
    r.mean_solution = run_deterministic(e, c, DeterministicMode::mean);
    r.law = compare_laws(r.kinetic.back().stats, r.spde.stats, cfg.time.compare_times);
    r.mean_check = compare_mean(r.spde.stats, r.mean_solution.stats, cfg.time.compare_times);
    r.conservation_pass = true;
    r.entropy_pass = true;
    for (const auto& k : r.kinetic) {
        r.conservation_pass = r.conservation_pass && k.stats.max_mass_drift <= kMassDriftTol && k.stats.min_f >= kMinFTol;
        r.entropy_pass = r.entropy_pass && k.stats.max_entropy_ratio <= 1.0 + kEntropySlack;
    }
    r.conservation_pass = r.conservation_pass && r.spde.stats.max_mass_drift <= kMassDriftTol;
    r.pass = (cfg.epsilons.size() < 2 || r.slope_pass) && r.law.pass && r.mean_check.pass && r.conservation_pass &&
             r.entropy_pass;
    return r;
}

}  // namespace kda
