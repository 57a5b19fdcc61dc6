#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kda/coefficients.hpp"
#include "kda/config.hpp"
#include "kda/kinetic.hpp"
#include "kda/spde.hpp"

namespace kda {

// Seed streams, so kinetic, SPDE and MC draws never share a sequence.
enum SeedStream : std::uint64_t { kKineticStream = 11, kSpdeStream = 12, kMcStream = 13 };

// Per-path summary: observables <rho_t, xi_k> on the snapshot mesh plus diagnostics.
struct PathRecord {
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> obs;  // [time][test function]
    double max_mass_drift = 0.0;
    double min_f = 0.0;                 // kinetic only
    double max_entropy_ratio = 0.0;     // kinetic only
    double local_eq_integral = 0.0;     // kinetic only
    double max_h1 = 0.0;                // SPDE only
    std::size_t steps = 0;
    std::size_t jumps = 0;
};

struct EnsembleStats {
    std::vector<double> times;
    std::size_t paths = 0;
    std::size_t observables = 0;
    // [time][test function]
    std::vector<std::vector<double>> mean, var, se_mean, se_var;
    double max_mass_drift = 0.0;
    double min_f = 0.0;
    double max_entropy_ratio = 0.0;
    double local_eq_mean = 0.0;
    double local_eq_se = 0.0;
};

struct Ensemble {
    std::string kind;      // kinetic | spde | mean
    double epsilon = 0.0;  // kinetic only
    double dt = 0.0;
    std::vector<PathRecord> paths;
    EnsembleStats stats;
};

// Standard errors: sample std / sqrt(paths) for means; for variances the
// delta-method estimate sqrt((m4 - s^4) / paths).
EnsembleStats compute_stats(const std::vector<PathRecord>& paths, const std::vector<double>& times);

std::vector<double> snapshot_times(const TimeSpec& t);

// Path p uses seed derive_seed(base, p, stream); prefixes of larger ensembles agree.
Ensemble run_kinetic_ensemble(const Experiment& e, double epsilon, std::size_t paths, std::uint64_t base_seed);
Ensemble run_spde_ensemble(const Experiment& e, const LimitCoefficients& c, std::size_t paths,
                           std::uint64_t base_seed);
// Single deterministic path of the mean (K*, Psi) or plain (K(M)) equation.
Ensemble run_deterministic(const Experiment& e, const LimitCoefficients& c, DeterministicMode mode);

struct LawCell {
    double t = 0.0;
    std::size_t observable = 0;
    double mean_a = 0.0, mean_b = 0.0, z = 0.0;
    double var_a = 0.0, var_b = 0.0, var_ratio = 0.0;
    bool mean_ok = false, var_ok = false;
};

struct LawComparison {
    std::vector<LawCell> cells;
    double max_abs_z = 0.0;
    double min_ratio = 0.0, max_ratio = 0.0;
    bool means_pass = false;
    bool variances_pass = false;
    bool pass = false;
};

inline constexpr double kLawMaxZ = 3.0;
inline constexpr double kVarRatioLow = 0.6;
inline constexpr double kVarRatioHigh = 1.6;

// Two-sample z-test on means and variance ratio var_a / var_b at each requested
// time. Throws std::invalid_argument if the time meshes or observable counts differ.
LawComparison compare_laws(const EnsembleStats& a, const EnsembleStats& b, const std::vector<double>& at_times);

struct SlopeFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
};
// Least squares of log y against log x.
SlopeFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

// Mean of a stochastic ensemble against a deterministic solution, max |z| over cells.
struct MeanCheck {
    double max_abs_z = 0.0;
    double max_abs_diff = 0.0;
    bool pass = false;
};
MeanCheck compare_mean(const EnsembleStats& ens, const EnsembleStats& det, const std::vector<double>& at_times);

struct ConvergenceReport {
    std::vector<double> epsilons;
    std::vector<double> local_eq_mean, local_eq_se;
    SlopeFit fit;
    bool slope_pass = false;
    std::vector<Ensemble> kinetic;  // one per epsilon (the last holds paths.kinetic paths)
    Ensemble spde;
    Ensemble mean_solution;
    LawComparison law;
    MeanCheck mean_check;
    bool conservation_pass = false;
    bool entropy_pass = false;
    bool pass = false;
};

inline constexpr double kSlopeLow = 1.7;
inline constexpr double kSlopeHigh = 2.3;
inline constexpr double kMassDriftTol = 1e-10;
inline constexpr double kMinFTol = -1e-12;
inline constexpr double kEntropySlack = 1e-3;

ConvergenceReport run_convergence_study(const Experiment& e, const LimitCoefficients& c);

}  // namespace kda
