#pragma once

#include <array>
#include <span>
#include <vector>

#include "kda/grid.hpp"

namespace kda {

// Finite velocity set with quadrature weights nu_j and equilibrium M_j.
// Only constructed through make_velocity_model, which validates it.
class VelocityModel {
public:
    int dim() const noexcept { return dim_; }
    int count() const noexcept { return static_cast<int>(weights_.size()); }
    const std::array<double, 2>& velocity(int j) const { return velocities_[j]; }
    const std::vector<std::array<double, 2>>& velocities() const noexcept { return velocities_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    const std::vector<double>& equilibrium() const noexcept { return equilibrium_; }
    double alpha() const noexcept { return alpha_; }

    // d x d row-major, padded to 2x2.
    const std::array<double, 4>& K_one() const noexcept { return k_one_; }
    const std::array<double, 4>& K_M() const noexcept { return k_m_; }

    // Largest absolute residual among the five moment identities and the
    // HypM margin min(M - alpha, 1/alpha - M).
    double moment_residual() const noexcept { return residual_; }
    double hypm_margin() const noexcept { return hypm_margin_; }

private:
    friend VelocityModel make_velocity_model(const std::vector<std::vector<double>>&, const std::vector<double>&,
                                             const std::vector<double>&, double);
    int dim_ = 1;
    std::vector<std::array<double, 2>> velocities_;
    std::vector<double> weights_;
    std::vector<double> equilibrium_;
    double alpha_ = 1.0;
    std::array<double, 4> k_one_{};
    std::array<double, 4> k_m_{};
    double residual_ = 0.0;
    double hypm_margin_ = 0.0;
};

inline constexpr double kMomentTolerance = 1e-12;

// Throws AdmissibilityError (vdv or HypM) or std::invalid_argument on shape errors.
VelocityModel make_velocity_model(const std::vector<std::vector<double>>& velocities,
                                  const std::vector<double>& weights, const std::vector<double>& equilibrium,
                                  double alpha);

// V = {+1, -1}, nu uniform, M = 1.
VelocityModel two_speed_model();
// count equally spaced directions on a circle of the given speed, nu uniform;
// equilibrium given per direction (must be even), empty means M = 1.
VelocityModel circle_model(int count, double speed, std::vector<double> equilibrium = {}, double alpha = 1.0);

struct Moments {
    int dim = 1;
    double rho = 0.0;
    std::array<double, 2> J{0.0, 0.0};
    std::array<double, 4> K{0.0, 0.0, 0.0, 0.0};  // row-major d x d
};

Moments moments(std::span<const double> profile, const VelocityModel& model);
std::vector<double> relaxation(std::span<const double> profile, const VelocityModel& model);

// Distribution over (velocity x grid); data laid out slice by slice:
// data[j * G + x] = f(x, v_j).
class KineticDensity {
public:
    KineticDensity() = default;
    KineticDensity(GridPtr grid, int velocities, std::vector<double> data);
    static KineticDensity local_equilibrium(const GridField& rho, const VelocityModel& model,
                                            const VectorField* grad_w = nullptr);

    const GridPtr& grid() const noexcept { return grid_; }
    int velocities() const noexcept { return nv_; }
    std::span<const double> slice(int j) const { return {data_.data() + j * grid_->size(), grid_->size()}; }
    const std::vector<double>& data() const noexcept { return data_; }

    KineticDensity operator+(const KineticDensity& o) const;
    KineticDensity operator*(double s) const;

private:
    GridPtr grid_;
    int nv_ = 0;
    std::vector<double> data_;
};

struct FieldMoments {
    GridField rho;
    VectorField J;
    std::vector<GridField> K;  // d*d row-major
};

GridField density(const KineticDensity& f, const VelocityModel& model);
FieldMoments field_moments(const KineticDensity& f, const VelocityModel& model);
KineticDensity relaxation(const KineticDensity& f, const VelocityModel& model);
// Total mass: integral of f over x and nu.
double total_mass(const KineticDensity& f, const VelocityModel& model);

}  // namespace kda
