// Acceptance run: one PASS/FAIL line per criterion, exit 0 only if all pass.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "kda/coefficients.hpp"
#include "kda/config.hpp"
#include "kda/error.hpp"
#include "kda/fixtures.hpp"
#include "kda/generator.hpp"
#include "kda/harness.hpp"
#include "kda/kinetic.hpp"
#include "kda/parallel.hpp"
#include "kda/rng.hpp"

using namespace kda;
namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

// Pinned tolerances.
constexpr double kModelTol = 1e-12;
constexpr double kResolventTol = 1e-12;
constexpr double kResolventIdentityTol = 1e-10;
constexpr double kEntropyTol = 1e-3;
constexpr double kHeatTol = 0.02;
constexpr double kPoissonTol = 1e-8;
constexpr double kGeneratorTol = 1e-10;
constexpr double kAsymmetryTol = 1e-8;
constexpr double kNegEigTol = 1e-10;
constexpr double kSqrtTol = 1e-10;
constexpr double kEnhancedTol = 1e-10;
constexpr double kClosedFormTol = 1e-10;

const fs::path kConfigs = fs::path(KDA_SOURCE_DIR) / "configs";

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

std::string fmt12(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12f", v);
    return buf;
}

int failures = 0;

void criterion(int id, const char* name, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass) ++failures;
    std::printf("C%-2d %s  %s  [%s] (%.1f s)\n", id, o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), secs);
    std::fflush(stdout);
}

Experiment load_experiment(const std::string& name) {
    return build_experiment(load_config((kConfigs / (name + ".json")).string()));
}

Eigen::MatrixXd centred_columns(const PilotChain& c, int cols, Rng& rng) {
    std::normal_distribution<double> nd;
    Eigen::MatrixXd th(c.size(), cols);
    for (int j = 0; j < cols; ++j) {
        for (int i = 0; i < c.size(); ++i) th(i, j) = nd(rng);
        th.col(j).array() -= c.stationary().dot(th.col(j));
    }
    return th;
}

}  // namespace

int main() {
    std::printf("acceptance run, KDA_WORKERS=%d\n", worker_count());
    const Experiment two = load_experiment("two_state");
    const LimitCoefficients two_c = compute_limit_coefficients(two.chain, two.model);
    const ConvergenceReport study = run_convergence_study(two, two_c);

    criterion(1, "admissibility validation", [] {
        double worst = 0.0;
        int shipped = 0;
        for (const char* name : {"two_state", "zero_pilot", "three_state_2d"}) {
            const Experiment e = load_experiment(name);
            worst = std::max(worst, e.model.moment_residual());
            if (e.chain.radius() > e.model.alpha() / 4) return Outcome{false, std::string(name) + " violates Rsmall"};
            ++shipped;
        }
        int rejected = 0;
        const std::vector<std::pair<const char*, Hypothesis>> broken{
            {"vdv", Hypothesis::vdv},         {"HypM", Hypothesis::HypM},
            {"BallR", Hypothesis::BallR},     {"Rsmall", Hypothesis::Rsmall},
            {"mcentred", Hypothesis::mcentred}, {"mixCoupled", Hypothesis::mixCoupled}};
        for (const auto& [file, hyp] : broken) {
            try {
                build_experiment(load_config((kConfigs / "broken" / (std::string(file) + ".json")).string()));
            } catch (const AdmissibilityError& e) {
                if (e.hypothesis() == hyp) ++rejected;
            }
        }
        const bool ok = worst <= kModelTol && rejected == static_cast<int>(broken.size());
        return Outcome{ok, std::to_string(shipped) + " configs valid, moment residual " + fmt(worst) + ", " +
                               std::to_string(rejected) + "/" + std::to_string(broken.size()) +
                               " broken fixtures named correctly"};
    });

    criterion(2, "resolvent algebra, 50 random chains", [] {
        auto g = make_grid(1, 16);
        Rng rng(derive_seed(2, 0, kMcStream));
        double e1 = 0.0, e2 = 0.0;
        for (int t = 0; t < 50; ++t) {
            RandomChainOptions o;
            o.reversible = t % 2 == 0;
            const auto c = random_chain(g, 2 + t % 9, rng, o);
            const int n = c.size();
            const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            for (double a : {0.5, 1.0, 3.0})
                e1 = std::max(e1, ((a * I - c.rates()) * resolvent(c, a, I) - I).cwiseAbs().maxCoeff());
            const Eigen::MatrixXd th = centred_columns(c, 3, rng);
            const Eigen::MatrixXd lhs = resolvent(c, 0.0, resolvent(c, 1.0, th));
            e2 = std::max(e2, (lhs - resolvent(c, 0.0, th) + resolvent(c, 1.0, th)).cwiseAbs().maxCoeff());
        }
        return Outcome{e1 <= kResolventTol && e2 <= kResolventIdentityTol,
                       "max |(aI-Q)R_a - I| = " + fmt(e1) + ", max |R0R1 - R0 + R1| = " + fmt(e2)};
    });

    criterion(3, "kinetic conservation and positivity", [&] {
        double drift = 0.0, minf = std::numeric_limits<double>::infinity();
        std::size_t paths = 0;
        for (const auto& k : study.kinetic) {
            drift = std::max(drift, k.stats.max_mass_drift);
            minf = std::min(minf, k.stats.min_f);
            paths += k.paths.size();
        }
        for (const char* name : {"zero_pilot", "three_state_2d"}) {
            const Experiment e = load_experiment(name);
            const auto& cfg = e.config;
            for (std::size_t i = 0; i < cfg.epsilons.size(); ++i) {
                const Ensemble k = run_kinetic_ensemble(e, cfg.epsilons[i], cfg.paths.scaling,
                                                        derive_seed(cfg.seed, i, kKineticStream));
                drift = std::max(drift, k.stats.max_mass_drift);
                minf = std::min(minf, k.stats.min_f);
                paths += k.paths.size();
            }
        }
        return Outcome{drift <= kMassDriftTol && minf >= kMinFTol, std::to_string(paths) + " paths, mass drift " +
                                                                       fmt(drift) + ", min f " + fmt(minf)};
    });

    criterion(4, "entropy estimate at eps = 0.1, 50 paths", [&] {
        ExperimentConfig cfg = two.config;
        double ratio[2];
        for (int h = 0; h < 2; ++h) {
            cfg.time.dt_factor = 0.25 / (1 << h);
            const Experiment e = build_experiment(cfg);
            ratio[h] = run_kinetic_ensemble(e, 0.1, 50, derive_seed(cfg.seed, 40, kKineticStream)).stats.max_entropy_ratio;
        }
        // Violation margin max(0, ratio - 1) must not grow when dt halves.
        const double m0 = std::max(0.0, ratio[0] - 1), m1 = std::max(0.0, ratio[1] - 1);
        const bool ok = m0 <= kEntropyTol && m1 <= kEntropyTol && m1 <= m0;
        return Outcome{ok, "max ratio " + fmt12(ratio[0]) + " at dt = eps^2/4, " + fmt12(ratio[1]) +
                               " at dt = eps^2/8, margins " + fmt(m0) + ", " + fmt(m1)};
    });

    criterion(5, "local-equilibrium eps^2 scaling", [&] {
        std::string d = "slope " + fmt(study.fit.slope) + " +- " + fmt(study.fit.slope_se) + ", means";
        for (double m : study.local_eq_mean) d += " " + fmt(m);
        return Outcome{study.slope_pass, d};
    });

    criterion(6, "deterministic limit, zero pilot, eps = 0.05", [] {
        auto run = [](int res) {
            auto g = make_grid(1, res);
            const VelocityModel m = two_speed_model();
            const PilotChain z = zero_chain(g);
            auto rho = GridField::from_function(g, [](double x, double) { return 1 + std::cos(2 * pi * x); });
            KineticOptions o;
            o.epsilon = 0.05;
            o.t_end = 1.0;
            o.mesh_intervals = 20;
            const auto tr = simulate_path(KineticDensity::local_equilibrium(rho, m), z, m, o, 1);
            double worst = 0.0;
            for (const auto& s : tr.snapshots) {
                auto heat = GridField::from_function(g, [&](double x, double) {
                    return 1 + std::exp(-4 * pi * pi * s.t) * std::cos(2 * pi * x);
                });
                worst = std::max(worst, l2_norm(s.rho - heat));
            }
            return worst;
        };
        const double err = run(64);
        return Outcome{err <= kHeatTol, "sup_t |rho - rho_heat| = " + fmt(err) + " (resolution 128: " +
                                            fmt(run(128)) + ")"};
    });

    criterion(7, "corrector Poisson residual", [&] {
        auto g = two.grid;
        Rng rng(derive_seed(7, 0, kMcStream));
        const PilotChain five = random_chain(g, 5, rng);
        double worst = 0.0, sharp = 0.0;
        int runs = 0;
        for (const PilotChain* c : {&two.chain, &five})
            for (PsiKind psi : {PsiKind::identity, PsiKind::half_square, PsiKind::tanh}) {
                const CorrectorCalculus calc(*c, two.model, make_test_function(two.test_functions[0], psi));
                const PoissonReport r = verify_poisson_phi1(calc, two.model, 100, derive_seed(7, ++runs, kMcStream));
                worst = std::max(worst, r.max_residual);
                sharp = std::max(sharp, r.max_sharp_phi);
            }
        return Outcome{worst <= kPoissonTol, std::to_string(runs) + " x 100 samples, max residual " + fmt(worst) +
                                                 ", max |L_sharp phi| " + fmt(sharp)};
    });

    criterion(8, "limit generator cross-checks, 20 random (rho, xi)", [&] {
        Rng rng(derive_seed(8, 0, kMcStream));
        double eb = 0.0, eq = 0.0;
        for (int t = 0; t < 20; ++t) {
            const GridField rho = random_smooth_field(two.grid, rng, 1.0, 0.4);
            const GridField xi = random_smooth_field(two.grid, rng, 0.0, 1.0);
            const CorrectorCalculus id(two.chain, two.model, make_test_function(xi, PsiKind::identity));
            const CorrectorCalculus sq(two.chain, two.model, make_test_function(xi, PsiKind::half_square));
            eb = std::max(eb, std::abs(id.limit_generator(rho).total() - b_from_coefficients(rho, xi, two_c)));
            eq = std::max(eq, std::abs(sq.limit_generator(rho).second_order -
                                       quadratic_form(two_c, gradient(xi) * rho)));
        }
        return Outcome{eb <= kGeneratorTol && eq <= kGeneratorTol,
                       "max |L phi - b| = " + fmt(eb) + ", max |second order - <S u, u>| = " + fmt(eq)};
    });

    criterion(9, "stationarity identities and centering, 1e4 samples", [&] {
        const std::size_t n = 10000;
        const double burn = default_burn_in(two.chain, 20.0);
        const GridField& xi = two.test_functions[0];
        const auto st = verify_stationarity_identities(two.chain, two.model, two.rho_in, xi, n, burn,
                                                       derive_seed(9, 0, kMcStream));
        const CorrectorCalculus id(two.chain, two.model, make_test_function(xi, PsiKind::identity));
        const McCheck cen = verify_centering(id, two.chain, two.model, two.rho_in, n, burn, derive_seed(9, 1, kMcStream));
        bool ok = st.jd1.pass && st.jjd2.pass && cen.pass;
        std::string d = "z: JD1 " + fmt(st.jd1.z) + ", JJD2 " + fmt(st.jjd2.z) + ", centering " + fmt(cen.z);
        int k = 2;
        for (PsiKind psi : {PsiKind::identity, PsiKind::half_square, PsiKind::tanh}) {
            const CorrectorCalculus calc(two.chain, two.model, make_test_function(xi, psi));
            const McCheck s = verify_solvability(calc, two.chain, two.model, two.rho_in, n, burn,
                                                 derive_seed(9, k++, kMcStream));
            ok = ok && s.pass;
            d += ", solvability " + std::string(psi_name(psi)) + " " + fmt(s.z);
        }
        return Outcome{ok, d};
    });

    criterion(10, "covariance operator, 20 random chains", [&] {
        Rng rng(derive_seed(10, 0, kMcStream));
        double asym_rev = 0.0, asym_nonrev = 0.0, rel_nonrev = 0.0, neg = 0.0, sq = 0.0, norm_excess = -1.0;
        bool rank_ok = true;
        for (int t = 0; t < 20; ++t) {
            RandomChainOptions o;
            o.reversible = t % 2 == 0;
            const int N = 2 + t % 7;
            const PilotChain c = random_chain(two.grid, N, rng, o);
            const LimitCoefficients lc = compute_limit_coefficients(c, two.model);
            (c.is_reversible() ? asym_rev : asym_nonrev) =
                std::max(c.is_reversible() ? asym_rev : asym_nonrev, lc.kernel_asymmetry);
            if (!c.is_reversible()) rel_nonrev = std::max(rel_nonrev, lc.kernel_asymmetry / lc.kernel_max_abs);
            neg = std::min(neg, lc.min_raw_eigenvalue);
            rank_ok = rank_ok && lc.rank <= N;
            const Eigen::MatrixXd H = sqrt_operator(lc);
            sq = std::max(sq, (H * H - weighted_kernel(lc)).cwiseAbs().maxCoeff());
            const double top = lc.eigenvalues.empty() ? 0.0 : lc.eigenvalues.front();
            norm_excess = std::max(norm_excess, top / (c.radius() * c.radius() / c.spectral_gap()));
        }
        const double asym = std::max(asym_rev, asym_nonrev);
        const bool ok = asym <= kAsymmetryTol && neg >= -kNegEigTol && rank_ok && sq <= kSqrtTol && norm_excess <= 1.0;
        return Outcome{ok, "asymmetry " + fmt(asym_rev) + " (reversible) / " + fmt(asym_nonrev) +
                                " (non-reversible, " + fmt(rel_nonrev) + " relative), min eigenvalue " + fmt(neg) + ", rank <= N " +
                               (rank_ok ? "yes" : "no") + ", |H^2 - S| " + fmt(sq) + ", |S| / (R^2/gap) " +
                               fmt(norm_excess)};
    });

    criterion(11, "enhanced diffusion, 20 reversible chains and closed form", [&] {
        Rng rng(derive_seed(11, 0, kMcStream));
        double worst = std::numeric_limits<double>::infinity();
        for (int t = 0; t < 20; ++t) {
            RandomChainOptions o;
            o.reversible = true;
            const PilotChain c = random_chain(two.grid, 2 + t % 7, rng, o);
            worst = std::min(worst, enhanced_diffusion_check(compute_limit_coefficients(c, two.model), c).min_eigenvalue);
        }
        // n = delta (sin + cos), c = chi(n) = n' for the two-speed model.
        const double q = two.chain.rates()(0, 1);
        const GridField cf = chi(two.chain.state(0), two.model)[0];
        double cerr = 0.0;
        for (std::size_t x = 0; x < two.grid->size(); ++x)
            cerr = std::max(cerr, std::abs(two_c.K_star[0][x] - two_c.K_M[0] - cf[x] * cf[x] / (2 * q * (1 + 2 * q))));
        return Outcome{worst >= -kEnhancedTol && cerr <= kClosedFormTol,
                       "min eigenvalue of K* - K(M) " + fmt(worst) + ", closed-form error " + fmt(cerr)};
    });

    criterion(12, "law convergence at eps = 0.05, kinetic vs SPDE", [&] {
        return Outcome{study.law.pass, std::to_string(study.kinetic.back().stats.paths) + " vs " +
                                           std::to_string(study.spde.stats.paths) + " paths, max |z| " +
                                           fmt(study.law.max_abs_z) + ", variance ratios [" +
                                           fmt(study.law.min_ratio) + ", " + fmt(study.law.max_ratio) + "]"};
    });

    criterion(13, "SPDE mean vs mean equation", [&] {
        return Outcome{study.mean_check.pass, std::to_string(study.spde.stats.paths) + " paths, max |z| " +
                                                  fmt(study.mean_check.max_abs_z)};
    });

    std::printf("%d of 13 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
