#pragma once

#include <Eigen/Sparse>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "kda/coefficients.hpp"
#include "kda/grid.hpp"

namespace kda {

// Data of a linear equation d rho = div(K grad rho + Psi rho) dt + sum_k div(rho u_k) d beta_k.
struct DiffusionData {
    GridPtr grid;
    std::vector<GridField> K;  // d*d, row-major (need not be symmetric)
    VectorField Psi;
    std::vector<VectorField> noise;  // u_k = sqrt(2 mu_k) p_k
};

enum class DeterministicMode { plain, mean };

DiffusionData limit_equation(const LimitCoefficients& c);  // full SPDE
DiffusionData mean_equation(const LimitCoefficients& c);   // K*, Psi, no noise
DiffusionData plain_equation(const LimitCoefficients& c);  // K(M), no drift, no noise
DiffusionData constant_diffusion(GridPtr grid, const std::array<double, 4>& K);

inline constexpr double kDriftGuard = 1e-12;

// IMEX Euler-Maruyama: symmetric part of the diffusion implicit (sparse LDLT,
// factorized once), antisymmetric part, drift and noise explicit in flux form.
class SpdeStepper {
public:
    SpdeStepper(const DiffusionData& data, double dt);
    SpdeStepper(const SpdeStepper&) = delete;
    SpdeStepper& operator=(const SpdeStepper&) = delete;
    ~SpdeStepper();

    double dt() const noexcept { return dt_; }
    int noise_rank() const noexcept { return static_cast<int>(noise_faces_.size()); }
    const GridPtr& grid() const noexcept { return grid_; }

    // dbeta has noise_rank() entries (Brownian increments over dt).
    void step_inplace(std::vector<double>& rho, std::span<const double> dbeta) const;
    GridField step(const GridField& rho, std::span<const double> dbeta) const;
    // Explicit part only: dt * [div(Psi rho) + div(A grad rho)] + sum_k div(rho u_k) dbeta_k.
    void explicit_increment(const std::vector<double>& rho, std::span<const double> dbeta,
                            std::vector<double>& out) const;
    // The implicit operator matrix (discrete div(K_sym grad .)).
    const Eigen::SparseMatrix<double>& diffusion_matrix() const noexcept { return L_; }

private:
    GridPtr grid_;
    double dt_;
    Eigen::SparseMatrix<double> L_;
    struct Solver;
    std::unique_ptr<Solver> solver_;
    // Face values per axis: face a of cell x sits at x + h/2 e_a.
    std::vector<std::vector<double>> psi_faces_;
    std::vector<std::vector<std::vector<double>>> noise_faces_;  // [k][axis][x]
    std::vector<double> anti_xface_, anti_yface_;                 // A12 on x- and y-faces (d = 2)
    bool has_anti_ = false;
    bool has_drift_ = false;

    void add_flux_divergence(const std::vector<std::vector<double>>& u, const std::vector<double>& rho, double scale,
                             std::vector<double>& out) const;
};

struct SpdeOptions {
    double t_end = 1.0;
    double dt = 1e-3;
    int mesh_intervals = 20;
    std::vector<GridField> test_functions;
};

struct SpdeSnapshot {
    double t = 0.0;
    GridField rho;
    double mass = 0.0;
    std::vector<double> observables;  // <rho, xi_k>
};

struct SpdeTrajectory {
    std::uint64_t seed = 0;
    std::vector<SpdeSnapshot> snapshots;
    double max_mass_drift = 0.0;  // relative, over every step
    double max_h1 = 0.0;          // max over steps of the discrete H1 seminorm
    std::size_t steps = 0;
};

using NoiseSource = std::function<void(std::size_t step, std::span<double> dbeta)>;

SpdeTrajectory simulate_spde(const SpdeStepper& stepper, const GridField& rho_in, const SpdeOptions& opts,
                             const NoiseSource& noise);
SpdeTrajectory simulate_spde(const SpdeStepper& stepper, const GridField& rho_in, const SpdeOptions& opts,
                             std::uint64_t seed);
SpdeTrajectory simulate_spde(const GridField& rho_in, const LimitCoefficients& coeffs, const SpdeOptions& opts,
                             std::uint64_t seed);

SpdeTrajectory solve_deterministic(const GridField& rho_in, DeterministicMode mode, const LimitCoefficients& coeffs,
                                   const SpdeOptions& opts);

double discrete_h1_seminorm(const Grid& g, std::span<const double> rho);

}  // namespace kda
