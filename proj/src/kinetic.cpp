#include "kda/kinetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "kda/error.hpp"

namespace kda {

namespace {

// In-place kernels shared by the pure operations and the path driver.
struct Workspace {
    const Grid& g;
    const VelocityModel& model;
    std::vector<cplx> scratch;
    std::vector<double> rho;

    Workspace(const Grid& grid, const VelocityModel& m) : g(grid), model(m), rho(grid.size()) {}

    void transport(std::vector<double>& f, double epsilon, double dt) {
        if (dt == 0.0) return;
        const std::size_t G = g.size();
        for (int j = 0; j < model.count(); ++j) {
            const auto& v = model.velocity(j);
            const double s[2] = {v[0] * dt / epsilon, v[1] * dt / epsilon};
            spectral_shift_inplace(g, std::span<double>(f.data() + j * G, G), std::span<const double>(s, g.dim()),
                                   scratch);
        }
    }

    void density(const std::vector<double>& f) {
        const std::size_t G = g.size();
        std::fill(rho.begin(), rho.end(), 0.0);
        for (int j = 0; j < model.count(); ++j) {
            const double w = model.weights()[j];
            for (std::size_t x = 0; x < G; ++x) rho[x] += w * f[j * G + x];
        }
    }

    // grad is the gradient of the active pilot state (nullptr for zero).
    void relax(std::vector<double>& f, const VectorField* grad, double epsilon, double dt) {
        if (dt == 0.0) return;
        const std::size_t G = g.size();
        const double e = std::exp(-dt / (epsilon * epsilon));
        density(f);
        for (int j = 0; j < model.count(); ++j) {
            const auto& v = model.velocity(j);
            const double M = model.equilibrium()[j];
            for (std::size_t x = 0; x < G; ++x) {
                double mc = M;
                if (grad)
                    for (int a = 0; a < g.dim(); ++a) mc += v[a] * (*grad)[a][x];
                const double eq = rho[x] * mc;
                double& fx = f[j * G + x];
                fx = eq + e * (fx - eq);
            }
        }
    }

    // Diagnostics against Mbar = M + v . grad_w (grad_w laid out [axis][x]).
    EntropyRecord entropy(const std::vector<double>& f, const std::vector<std::vector<double>>& grad_w) {
        const std::size_t G = g.size();
        density(f);
        EntropyRecord r;
        for (int j = 0; j < model.count(); ++j) {
            const auto& v = model.velocity(j);
            const double M = model.equilibrium()[j];
            const double w = model.weights()[j];
            double h = 0.0, d = 0.0, l = 0.0;
            for (std::size_t x = 0; x < G; ++x) {
                double mb = M;
                for (int a = 0; a < g.dim(); ++a) mb += v[a] * grad_w[a][x];
                if (!(mb > 0.0)) throw NumericalError("equilibrium profile is not positive; invalid chain/model pairing");
                const double fx = f[j * G + x];
                const double diff = rho[x] * mb - fx;
                h += fx * fx / mb;
                d += diff * diff / mb;
                l += diff * diff;
            }
            r.H += 0.5 * w * h;
            r.D += w * d;
            r.local_eq_err += w * l;
        }
        double rr = 0.0;
        for (double x : rho) rr += x * x;
        const double cv = g.cell_volume();
        r.H *= cv;
        r.D *= cv;
        r.local_eq_err *= cv;
        r.rho_l2sq = rr * cv;
        return r;
    }
};

void check_finite(const std::vector<double>& f, std::size_t step) {
    for (double x : f)
        if (!std::isfinite(x)) throw NumericalError("non-finite kinetic density at step " + std::to_string(step));
}

}  // namespace

KineticDensity transport_exact(const KineticDensity& f, const VelocityModel& model, double epsilon, double dt) {
    if (!(dt >= 0.0)) throw std::invalid_argument("transport step must be >= 0");
    Workspace ws(*f.grid(), model);
    std::vector<double> data = f.data();
    ws.transport(data, epsilon, dt);
    return KineticDensity(f.grid(), f.velocities(), std::move(data));
}

KineticDensity relax_exact(const KineticDensity& f, const GridField& n, double epsilon, double dt,
                           const VelocityModel& model) {
    if (!(dt >= 0.0)) throw std::invalid_argument("relaxation step must be >= 0");
    Workspace ws(*f.grid(), model);
    const VectorField grad = gradient(n);
    std::vector<double> data = f.data();
    ws.relax(data, &grad, epsilon, dt);
    return KineticDensity(f.grid(), f.velocities(), std::move(data));
}

KineticState step_strang(const KineticState& s, const PilotChain& chain, const VelocityModel& model, double dt) {
    if (!(dt >= 0.0)) throw std::invalid_argument("step must be >= 0");
    if (dt == 0.0) return s;
    Workspace ws(*s.f.grid(), model);
    std::vector<double> data = s.f.data();
    ws.transport(data, s.epsilon, 0.5 * dt);
    ws.relax(data, &chain.state_gradients()[s.pilot_index], s.epsilon, dt);
    ws.transport(data, s.epsilon, 0.5 * dt);
    KineticState out = s;
    out.f = KineticDensity(s.f.grid(), s.f.velocities(), std::move(data));
    out.w = ou_filter_step(s.w, chain.state(s.pilot_index), dt / (s.epsilon * s.epsilon));
    out.time = s.time + dt;
    return out;
}

KineticDensity equilibrium_profile(const GridField& w, const VelocityModel& model) {
    const VectorField gw = gradient(w);
    return KineticDensity::local_equilibrium(GridField::constant(w.grid(), 1.0), model, &gw);
}

EntropyRecord entropy_diagnostics(const KineticDensity& f, const KineticDensity& mbar, const VelocityModel& model) {
    const std::size_t G = f.grid()->size();
    if (mbar.data().size() != f.data().size()) throw std::invalid_argument("profile size mismatch");
    const GridField rho = density(f, model);
    EntropyRecord r;
    for (int j = 0; j < model.count(); ++j) {
        const double w = model.weights()[j];
        auto fs = f.slice(j);
        auto ms = mbar.slice(j);
        for (std::size_t x = 0; x < G; ++x) {
            if (!(ms[x] > 0.0)) throw NumericalError("equilibrium profile is not positive");
            const double diff = rho[x] * ms[x] - fs[x];
            r.H += 0.5 * w * fs[x] * fs[x] / ms[x];
            r.D += w * diff * diff / ms[x];
            r.local_eq_err += w * diff * diff;
        }
    }
    const double cv = f.grid()->cell_volume();
    r.H *= cv;
    r.D *= cv;
    r.local_eq_err *= cv;
    r.rho_l2sq = l2_inner(rho, rho);
    return r;
}

double min_perturbed_equilibrium(const PilotChain& chain, const VelocityModel& model) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& gn : chain.state_gradients())
        for (int j = 0; j < model.count(); ++j) {
            const auto& v = model.velocity(j);
            for (std::size_t x = 0; x < gn[0].size(); ++x) {
                double m = model.equilibrium()[j];
                for (int a = 0; a < model.dim(); ++a) m += v[a] * gn[a][x];
                best = std::min(best, m);
            }
        }
    return best;
}

KineticTrajectory simulate_path(const KineticDensity& f_in, const PilotChain& chain, const VelocityModel& model,
                                const KineticOptions& opts, std::uint64_t seed) {
    const double eps = opts.epsilon;
    const double eps2 = eps * eps;
    if (!(eps > 0.0)) throw std::invalid_argument("epsilon must be positive");
    if (!(opts.t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
    if (opts.mesh_intervals < 1) throw std::invalid_argument("mesh_intervals must be >= 1");
    const double dt_target = opts.dt_target > 0.0 ? opts.dt_target : 0.25 * eps2;
    if (dt_target > kMaxDtOverEps2 * eps2)
        throw std::invalid_argument("dt_target must resolve the relaxation scale: dt_target <= 0.5 eps^2");
    if (!f_in.grid()->same_as(*chain.grid()) || f_in.velocities() != model.count())
        throw std::invalid_argument("initial density does not match grid or velocity model");
    for (double x : f_in.data())
        if (x < 0.0) throw std::invalid_argument("initial density must be non-negative");

    const Grid& g = *f_in.grid();
    const int d = g.dim();
    const std::size_t G = g.size();

    // Pilot path on microscopic time [0, burn + T / eps^2]; macroscopic t = (tau - burn) eps^2.
    const double burn = default_burn_in(chain, opts.burn_in_mixing_times);
    const PilotPath path = sample_path(chain, burn + opts.t_end / eps2, seed);

    // Filter state at t = 0.
    Eigen::VectorXd a = Eigen::VectorXd::Zero(chain.size());
    std::size_t k = 0;  // index of next jump
    {
        double tau = 0.0;
        int s = path.states[0];
        while (k < path.jump_times.size() && path.jump_times[k] <= burn) {
            const double e = std::exp(-(path.jump_times[k] - tau));
            a *= e;
            a(s) += 1.0 - e;
            tau = path.jump_times[k];
            s = path.states[++k];
        }
        const double e = std::exp(-(burn - tau));
        a *= e;
        a(s) += 1.0 - e;
    }
    int state = path.states[k];
    std::vector<double> w = combine_states(chain, a).vec();
    std::vector<std::vector<double>> gw(d, std::vector<double>(G, 0.0));
    for (int i = 0; i < chain.size(); ++i)
        for (int ax = 0; ax < d; ++ax)
            for (std::size_t x = 0; x < G; ++x) gw[ax][x] += a(i) * chain.state_gradients()[i][ax][x];

    std::vector<double> jumps_macro;
    for (std::size_t q = k; q < path.jump_times.size(); ++q) jumps_macro.push_back((path.jump_times[q] - burn) * eps2);

    Workspace ws(g, model);
    std::vector<double> f = f_in.data();

    KineticTrajectory traj;
    traj.seed = seed;
    traj.epsilon = eps;
    traj.dt_target = dt_target;

    auto snapshot = [&](double t, const EntropyRecord& rec, double mass, double minf) {
        KineticSnapshot s;
        s.t = t;
        s.rho = GridField(f_in.grid(), ws.rho);
        s.entropy = rec;
        s.entropy.t = t;
        s.mass = mass;
        s.min_f = minf;
        traj.snapshots.push_back(std::move(s));
    };
    auto mass_of = [&]() {
        double m = 0.0;
        for (double x : ws.rho) m += x;
        return m * g.cell_volume();
    };

    EntropyRecord rec = ws.entropy(f, gw);  // also fills ws.rho
    const double H0 = rec.H;
    traj.mass0 = mass_of();
    double minf = *std::min_element(f.begin(), f.end());
    traj.min_f = minf;
    snapshot(0.0, rec, traj.mass0, minf);

    double t = 0.0;
    std::size_t next_jump = 0;
    int next_mesh = 1;
    double prev_D = rec.D, prev_L = rec.local_eq_err;
    double intD = 0.0, intL = 0.0;
    traj.max_entropy_ratio = 0.0;

    while (next_mesh <= opts.mesh_intervals) {
        const double t_mesh = opts.t_end * next_mesh / opts.mesh_intervals;
        const double t_jump = next_jump < jumps_macro.size() ? jumps_macro[next_jump] : INFINITY;
        double t_new = std::min({t + dt_target, t_mesh, t_jump});
        const double h = t_new - t;

        const VectorField& gn = chain.state_gradients()[state];
        ws.transport(f, eps, 0.5 * h);
        ws.relax(f, &gn, eps, h);
        ws.transport(f, eps, 0.5 * h);
        const double e = std::exp(-h / eps2);
        const auto& n = chain.state(state);
        for (std::size_t x = 0; x < G; ++x) w[x] = n[x] + e * (w[x] - n[x]);
        for (int ax = 0; ax < d; ++ax)
            for (std::size_t x = 0; x < G; ++x) gw[ax][x] = gn[ax][x] + e * (gw[ax][x] - gn[ax][x]);
        t = t_new;
        ++traj.steps;
        if (traj.steps % 256 == 0) check_finite(f, traj.steps);

        rec = ws.entropy(f, gw);
        const double mass = mass_of();
        minf = *std::min_element(f.begin(), f.end());
        if (!std::isfinite(rec.H) || !std::isfinite(mass))
            throw NumericalError("non-finite diagnostics at step " + std::to_string(traj.steps));
        traj.min_f = std::min(traj.min_f, minf);
        traj.max_mass_drift = std::max(traj.max_mass_drift, std::abs(mass - traj.mass0) / std::abs(traj.mass0));
        intD += 0.5 * (prev_D + rec.D) * h;
        intL += 0.5 * (prev_L + rec.local_eq_err) * h;
        prev_D = rec.D;
        prev_L = rec.local_eq_err;
        if (H0 > 0.0)
            traj.max_entropy_ratio =
                std::max(traj.max_entropy_ratio, (rec.H + intD / (2.0 * eps2)) / (std::exp(t) * H0));

        if (t == t_jump) {
            state = path.states[k + next_jump + 1];
            ++next_jump;
            ++traj.jumps;
        }
        if (t == t_mesh) {
            snapshot(t, rec, mass, minf);
            ++next_mesh;
        }
    }
    check_finite(f, traj.steps);
    traj.local_eq_integral = intL;
    traj.dissipation_integral = intD;
    return traj;
}

}  // namespace kda
