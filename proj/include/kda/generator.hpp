#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kda/chain.hpp"
#include "kda/coefficients.hpp"
#include "kda/velocity.hpp"

namespace kda {

enum class PsiKind { identity, half_square, tanh };

const char* psi_name(PsiKind k);
PsiKind parse_psi(const std::string& name);

// phi(rho) = psi(<rho, xi>).
struct TestFunction {
    GridField xi;
    PsiKind psi = PsiKind::identity;

    double value(double u) const;
    double d1(double u) const;
    double d2(double u) const;
    double sup_d1() const;  // +inf for u^2/2
    double sup_d2() const;
};

// Throws std::invalid_argument unless xi is band-limited to resolution / 4.
TestFunction make_test_function(GridField xi, PsiKind psi);

struct LimitGeneratorValue {
    double second_order = 0.0;  // psi'' term
    double first_order = 0.0;   // psi' terms
    double total() const { return first_order + second_order; }
};

// Exact corrector algebra for one (chain, model, test function). Immutable.
class CorrectorCalculus {
public:
    CorrectorCalculus(const PilotChain& chain, const VelocityModel& model, TestFunction test);

    const TestFunction& test() const noexcept { return test_; }
    const StateData& states() const noexcept { return data_; }

    double phi(const KineticDensity& f) const;
    // psi'(<rho, xi>) <J(f) + rho(f) R0 chi(n_i), grad xi>.
    double phi1(const KineticDensity& f, int i) const;
    // Riesz representative of D_f phi1 for the pairing (h, g) = sum_j nu_j int h_j g_j.
    KineticDensity phi1_derivative(const KineticDensity& f, int i) const;
    KineticDensity phi_derivative(const KineticDensity& f) const;

    // L_flat Phi(f) = -(v . grad f, D_f Phi) with spectral gradients.
    double L_flat(const KineticDensity& f, const KineticDensity& derivative) const;
    double L_flat_phi(const KineticDensity& f) const;
    double L_flat_phi1(const KineticDensity& f, int i) const;
    // L_sharp = Q acting on the state slot + (rho M - f + rho v . grad n_i, D_f .).
    double L_sharp_phi1(const KineticDensity& f, int i) const;
    double L_sharp_phi(const KineticDensity& f, int i) const;

    LimitGeneratorValue limit_generator(const GridField& rho) const;

    // Right side of the corrector bound with the constant assembled from the
    // Poisson-equation estimate; +inf when psi' is unbounded.
    double phi1_bound(const KineticDensity& f) const;
    double mixing_l1() const noexcept { return gamma_l1_; }

private:
    const PilotChain* chain_;
    const VelocityModel* model_;
    TestFunction test_;
    StateData data_;
    VectorField grad_xi_;
    std::vector<GridField> hess_xi_;
    std::vector<GridField> r0chi_dot_;  // R0 chi(n_i) . grad xi
    double gamma_l1_ = 0.0;

    double pair(const KineticDensity& h, const KineticDensity& g) const;
    double inner_grad(const VectorField& u, const GridField& rho) const;  // <rho u, grad xi>
};

// Integral over t of max_i |P_t(i, .) - lambda|_1: the L1 norm of the mixing
// rate of the per-time maximal coupling.
double mixing_rate_l1(const PilotChain& chain);

// <rho, div(K*^T grad xi) - Psi . grad xi>: the drift of the limit equation tested against xi.
double b_from_coefficients(const GridField& rho, const GridField& xi, const LimitCoefficients& c);

// Random kinetic sample f = a M + smooth perturbation (band-limited, low modes).
KineticDensity random_kinetic_sample(GridPtr grid, const VelocityModel& model, Rng& rng, double perturbation = 0.3);
// Random smooth field 1 + perturbation with modes up to max_mode.
GridField random_smooth_field(GridPtr grid, Rng& rng, double offset, double amplitude, int max_mode = 3);

struct PoissonReport {
    std::size_t samples = 0;
    double max_residual = 0.0;  // max |L_sharp phi1 + L_flat phi|
    double max_scale = 0.0;     // max |L_flat phi| (for context)
    double max_sharp_phi = 0.0;  // max |L_sharp phi|
};
PoissonReport verify_poisson_phi1(const CorrectorCalculus& calc, const VelocityModel& model, std::size_t samples,
                                  std::uint64_t seed);

struct McCheck {
    std::string name;
    double estimate = 0.0;
    double exact = 0.0;
    double std_error = 0.0;
    double z = 0.0;
    std::size_t samples = 0;
    bool pass = false;
};

inline constexpr double kMaxZ = 3.0;

// Stationary pairs (w_0, m_0) from burn_in; both identities share the same draws.
struct StationarityReport {
    McCheck jd1, jjd2;
};
StationarityReport verify_stationarity_identities(const PilotChain& chain, const VelocityModel& model,
                                                  const GridField& rho, const GridField& xi, std::size_t samples,
                                                  double burn_in, std::uint64_t seed);
// E[L_flat phi(rho Mbar_0)] = 0.
McCheck verify_centering(const CorrectorCalculus& calc, const PilotChain& chain, const VelocityModel& model,
                         const GridField& rho, std::size_t samples, double burn_in, std::uint64_t seed);
// E[L_flat phi1(rho Mbar_0, m_0)] = L phi(rho).
McCheck verify_solvability(const CorrectorCalculus& calc, const PilotChain& chain, const VelocityModel& model,
                           const GridField& rho, std::size_t samples, double burn_in, std::uint64_t seed);

// rho Mbar for filter weights a: rho (M + v . grad sum_j a_j n_j).
KineticDensity perturbed_equilibrium(const PilotChain& chain, const VelocityModel& model, const GridField& rho,
                                     const Eigen::VectorXd& weights);

}  // namespace kda
