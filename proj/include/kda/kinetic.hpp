#pragma once

#include <cstdint>
#include <vector>

#include "kda/chain.hpp"
#include "kda/grid.hpp"
#include "kda/velocity.hpp"

namespace kda {

struct EntropyRecord {
    double t = 0.0;
    double H = 0.0;             // 1/2 iint f^2 / Mbar
    double D = 0.0;             // iint |rho Mbar - f|^2 / Mbar
    double local_eq_err = 0.0;  // iint |f - rho Mbar|^2
    double rho_l2sq = 0.0;      // int rho^2
};

struct KineticState {
    KineticDensity f;
    GridField w;  // filtered pilot at microscopic time t / eps^2
    int pilot_index = 0;
    double time = 0.0;
    double epsilon = 0.1;
};

struct KineticOptions {
    double epsilon = 0.1;
    double t_end = 1.0;
    double dt_target = 0.0;  // 0 selects epsilon^2 / 4
    int mesh_intervals = 20;  // snapshots at t_end * k / mesh_intervals, k = 0..mesh_intervals
    double burn_in_mixing_times = 10.0;
};

inline constexpr double kMaxDtOverEps2 = 0.5;

struct KineticSnapshot {
    double t = 0.0;
    GridField rho;
    EntropyRecord entropy;
    double mass = 0.0;
    double min_f = 0.0;
};

struct KineticTrajectory {
    std::uint64_t seed = 0;
    double epsilon = 0.0;
    double dt_target = 0.0;
    std::vector<KineticSnapshot> snapshots;
    double mass0 = 0.0;
    double max_mass_drift = 0.0;     // relative, over every step
    double min_f = 0.0;              // over every step
    double max_entropy_ratio = 0.0;  // max over steps t > 0 of (H(t) + int_0^t D / (2 eps^2)) / (e^t H(0))
    double local_eq_integral = 0.0;  // int_0^T local_eq_err dt (trapezoid over steps)
    double dissipation_integral = 0.0;
    std::size_t steps = 0;
    std::size_t jumps = 0;
};

KineticDensity transport_exact(const KineticDensity& f, const VelocityModel& model, double epsilon, double dt);
KineticDensity relax_exact(const KineticDensity& f, const GridField& n, double epsilon, double dt,
                           const VelocityModel& model);
// transport(dt/2) o relax(dt) o transport(dt/2) with the filter advanced by dt/eps^2.
KineticState step_strang(const KineticState& s, const PilotChain& chain, const VelocityModel& model, double dt);

// Mbar(x, v_j) = M_j + v_j . grad w(x), as a density over (velocity x grid).
KineticDensity equilibrium_profile(const GridField& w, const VelocityModel& model);
EntropyRecord entropy_diagnostics(const KineticDensity& f, const KineticDensity& mbar, const VelocityModel& model);

// min over states, velocities and x of M_j + v_j . grad n_i.
double min_perturbed_equilibrium(const PilotChain& chain, const VelocityModel& model);

KineticTrajectory simulate_path(const KineticDensity& f_in, const PilotChain& chain, const VelocityModel& model,
                                const KineticOptions& opts, std::uint64_t seed);

}  // namespace kda
