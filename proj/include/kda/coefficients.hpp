#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "kda/chain.hpp"
#include "kda/grid.hpp"
#include "kda/velocity.hpp"

namespace kda {

// chi(n) = K(1) grad n.
VectorField chi(const GridField& n, const VelocityModel& model);

struct CoefficientOptions {
    // Store the dense (dG x dG) kernel when dG is at most this.
    std::size_t kernel_limit = 2048;
    // Dense symmetric eigensolver up to this size, low-rank projection above.
    std::size_t dense_eigen_limit = 512;
    double eigen_clip = 1e-12;         // retained modes have mu > eigen_clip * max mu
    double negative_tolerance = 1e-10;  // eigenvalues below -this are a hard failure
};

// Per-state data shared with the generator calculus.
struct StateData {
    std::vector<VectorField> chi, R0chi, R1chi, R0R1chi;
};
StateData state_data(const PilotChain& chain, const VelocityModel& model);

struct LimitCoefficients {
    GridPtr grid;
    int dim = 1;
    std::array<double, 4> K_M{};          // row-major d x d
    std::vector<GridField> K_star;        // d*d fields, row-major
    VectorField Psi;
    std::vector<GridField> K_strato;
    VectorField Psi_strato;

    // Kernel C_ab(x, y) = sum_i lambda_i (R0 chi_a)(n_i)(x) chi_b(n_i)(y), stored
    // symmetrized as a (dG x dG) matrix with block index a * G + x (if assembled).
    Eigen::MatrixXd kernel;
    double kernel_asymmetry = 0.0;  // max |C_ab(x,y) - C_ba(y,x)| before symmetrization
    double kernel_max_abs = 0.0;
    double min_raw_eigenvalue = 0.0;  // of the symmetrized weighted kernel, before clipping
    std::vector<double> eigenvalues;  // retained, descending
    std::vector<VectorField> modes;   // orthonormal in the cell-volume weighted L2
    int rank = 0;
    bool dense_eigensolve = true;

    double min_K_star_eigenvalue = 0.0;  // min over x of the smallest eigenvalue of sym K*(x)
    double K_star_asymmetry = 0.0;       // max over x of |K*_12 - K*_21|

    StateData states;
};

// Throws NumericalError if an eigenvalue of S is below -negative_tolerance or
// if K*(x) fails to be positive definite somewhere.
LimitCoefficients compute_limit_coefficients(const PilotChain& chain, const VelocityModel& model,
                                             const CoefficientOptions& opts = {});

// S u and S^{1/2} u through the retained eigenpairs.
VectorField apply_S(const LimitCoefficients& c, const VectorField& u);
VectorField apply_S_half(const LimitCoefficients& c, const VectorField& u);
// <S u, u> = sum_k mu_k <u, p_k>^2.
double quadratic_form(const LimitCoefficients& c, const VectorField& u);

// Weighted operator matrices (dG x dG): cv * C_sym and the square root from the eigenpairs.
Eigen::MatrixXd weighted_kernel(const LimitCoefficients& c);
Eigen::MatrixXd sqrt_operator(const LimitCoefficients& c);

struct EnhancedDiffusionReport {
    bool reversible = false;
    bool asserted = false;     // the inequality is only asserted for reversible chains
    double min_eigenvalue = 0.0;  // min over x of the smallest eigenvalue of sym(K* - K(M))
    GridField eigenvalue_field;   // pointwise smallest eigenvalue
    bool pass = true;
};

inline constexpr double kEnhancedDiffusionTolerance = 1e-10;

EnhancedDiffusionReport enhanced_diffusion_check(const LimitCoefficients& c, const PilotChain& chain);

// Smallest eigenvalue of the symmetric part of a pointwise d x d matrix field.
GridField min_sym_eigenvalue(const std::vector<GridField>& m, int dim);

}  // namespace kda
