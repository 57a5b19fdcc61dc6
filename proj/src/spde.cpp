#include "kda/spde.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kda/error.hpp"
#include "kda/rng.hpp"

namespace kda {

namespace {

std::size_t neighbour(const Grid& g, std::size_t p, int axis, int step) {
    const int n = g.resolution();
    if (axis == 0) {
        const std::size_t row = p - p % n;
        return row + static_cast<std::size_t>((static_cast<int>(p % n) + step + n) % n);
    }
    const int iy = static_cast<int>(p / n);
    return static_cast<std::size_t>((iy + step + n) % n) * n + p % n;
}

std::vector<double> at_offset(const GridField& f, double ox, double oy) {
    const Grid& g = *f.grid();
    // Value at x + (ox, oy) h is the field translated by -(ox, oy) h.
    const double h = g.spacing();
    const double s[2] = {-ox * h, -oy * h};
    return spectral_shift(f, std::span<const double>(s, g.dim())).vec();
}

}  // namespace

DiffusionData limit_equation(const LimitCoefficients& c) {
    DiffusionData d = mean_equation(c);
    for (int k = 0; k < c.rank; ++k) d.noise.push_back(c.modes[k] * std::sqrt(2.0 * c.eigenvalues[k]));
    return d;
}

DiffusionData mean_equation(const LimitCoefficients& c) {
    DiffusionData d;
    d.grid = c.grid;
    d.K = c.K_star;
    d.Psi = c.Psi;
    return d;
}

DiffusionData plain_equation(const LimitCoefficients& c) { return constant_diffusion(c.grid, c.K_M); }

DiffusionData constant_diffusion(GridPtr grid, const std::array<double, 4>& K) {
    DiffusionData d;
    const int dim = grid->dim();
    for (int a = 0; a < dim; ++a)
        for (int b = 0; b < dim; ++b) d.K.push_back(GridField::constant(grid, K[a * dim + b]));
    d.Psi = VectorField::zeros(grid);
    d.grid = std::move(grid);
    return d;
}

struct SpdeStepper::Solver {
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
};

SpdeStepper::~SpdeStepper() = default;

SpdeStepper::SpdeStepper(const DiffusionData& data, double dt) : grid_(data.grid), dt_(dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("SPDE time step must be positive");
    const Grid& g = *grid_;
    const int d = g.dim();
    const std::size_t G = g.size();
    const double h = g.spacing();
    if (static_cast<int>(data.K.size()) != d * d) throw std::invalid_argument("diffusion matrix has wrong shape");

    double psi_max = 0.0;
    for (int a = 0; a < d; ++a) psi_max = std::max(psi_max, data.Psi[a].max_abs());
    if (dt > h / (2.0 * psi_max + kDriftGuard))
        throw std::invalid_argument("SPDE time step violates the drift guard dt <= h / (2 max|Psi|)");
    has_drift_ = psi_max > 0.0;

    std::vector<Eigen::Triplet<double>> trip;
    for (int a = 0; a < d; ++a) {
        const std::vector<double> kf = at_offset(data.K[a * d + a], a == 0 ? 0.5 : 0.0, a == 1 ? 0.5 : 0.0);
        for (std::size_t p = 0; p < G; ++p) {
            const std::size_t q = neighbour(g, p, a, 1);
            const double c = kf[p] / (h * h);
            trip.emplace_back(p, p, -c);
            trip.emplace_back(q, q, -c);
            trip.emplace_back(p, q, c);
            trip.emplace_back(q, p, c);
        }
    }
    if (d == 2) {
        const GridField ks = (data.K[1] + data.K[2]) * 0.5;
        const std::vector<double> kc = at_offset(ks, 0.5, 0.5);
        for (std::size_t p = 0; p < G; ++p) {
            const std::size_t p10 = neighbour(g, p, 0, 1), p01 = neighbour(g, p, 1, 1), p11 = neighbour(g, p10, 1, 1);
            const std::size_t pts[4] = {p, p10, p01, p11};
            const double gx[4] = {-1.0, 1.0, -1.0, 1.0}, gy[4] = {-1.0, -1.0, 1.0, 1.0};
            const double s = -kc[p] / (4.0 * h * h);
            for (int r = 0; r < 4; ++r)
                for (int t = 0; t < 4; ++t) trip.emplace_back(pts[r], pts[t], s * (gx[r] * gy[t] + gy[r] * gx[t]));
        }
        const GridField anti = (data.K[1] - data.K[2]) * 0.5;
        if (anti.max_abs() > 0.0) {
            has_anti_ = true;
            anti_xface_ = at_offset(anti, 0.5, 0.0);
            anti_yface_ = at_offset(anti, 0.0, 0.5);
        }
    }
    L_.resize(G, G);
    L_.setFromTriplets(trip.begin(), trip.end());

    Eigen::SparseMatrix<double> A(G, G);
    A.setIdentity();
    A = A - dt * L_;
    solver_ = std::make_unique<Solver>();
    solver_->ldlt.compute(A);
    if (solver_->ldlt.info() != Eigen::Success)
        throw NumericalError("implicit diffusion operator could not be factorized (not SPD?)");
    const auto& D = solver_->ldlt.vectorD();
    if (D.size() && D.minCoeff() <= 0.0)
        throw NumericalError("implicit diffusion operator is not positive definite (min pivot " +
                             std::to_string(D.minCoeff()) + ")");

    psi_faces_.resize(d);
    for (int a = 0; a < d; ++a) psi_faces_[a] = at_offset(data.Psi[a], a == 0 ? 0.5 : 0.0, a == 1 ? 0.5 : 0.0);
    for (const auto& u : data.noise) {
        std::vector<std::vector<double>> faces(d);
        for (int a = 0; a < d; ++a) faces[a] = at_offset(u[a], a == 0 ? 0.5 : 0.0, a == 1 ? 0.5 : 0.0);
        noise_faces_.push_back(std::move(faces));
    }
}

void SpdeStepper::add_flux_divergence(const std::vector<std::vector<double>>& u, const std::vector<double>& rho,
                                      double scale, std::vector<double>& out) const {
    const Grid& g = *grid_;
    const double h = g.spacing();
    const std::size_t G = g.size();
    for (int a = 0; a < g.dim(); ++a) {
        for (std::size_t p = 0; p < G; ++p) {
            const std::size_t q = neighbour(g, p, a, 1);
            const double flux = scale * u[a][p] * 0.5 * (rho[p] + rho[q]) / h;
            out[q] -= flux;
            out[p] += flux;
        }
    }
}

void SpdeStepper::explicit_increment(const std::vector<double>& rho, std::span<const double> dbeta,
                                     std::vector<double>& out) const {
    const Grid& g = *grid_;
    const std::size_t G = g.size();
    out.assign(G, 0.0);
    if (has_drift_) add_flux_divergence(psi_faces_, rho, dt_, out);
    if (has_anti_) {
        const double h = g.spacing();
        for (std::size_t p = 0; p < G; ++p) {
            const std::size_t px = neighbour(g, p, 0, 1), py = neighbour(g, p, 1, 1);
            // x-face between p and px: A12 d_y rho.
            const double dy = (rho[neighbour(g, p, 1, 1)] - rho[neighbour(g, p, 1, -1)] + rho[neighbour(g, px, 1, 1)] -
                               rho[neighbour(g, px, 1, -1)]) /
                              (4.0 * h);
            const double fx = dt_ * anti_xface_[p] * dy / h;
            out[p] += fx;
            out[px] -= fx;
            // y-face between p and py: -A12 d_x rho.
            const double dx = (rho[neighbour(g, p, 0, 1)] - rho[neighbour(g, p, 0, -1)] + rho[neighbour(g, py, 0, 1)] -
                               rho[neighbour(g, py, 0, -1)]) /
                              (4.0 * h);
            const double fy = -dt_ * anti_yface_[p] * dx / h;
            out[p] += fy;
            out[py] -= fy;
        }
    }
    if (static_cast<int>(dbeta.size()) != noise_rank()) throw std::invalid_argument("wrong number of increments");
    for (int k = 0; k < noise_rank(); ++k)
        if (dbeta[k] != 0.0) add_flux_divergence(noise_faces_[k], rho, dbeta[k], out);
}

void SpdeStepper::step_inplace(std::vector<double>& rho, std::span<const double> dbeta) const {
    std::vector<double> inc;
    explicit_increment(rho, dbeta, inc);
    Eigen::Map<Eigen::VectorXd> r(rho.data(), static_cast<Eigen::Index>(rho.size()));
    Eigen::Map<const Eigen::VectorXd> e(inc.data(), static_cast<Eigen::Index>(inc.size()));
    const Eigen::VectorXd rhs = r + e;
    r = solver_->ldlt.solve(rhs);
}

GridField SpdeStepper::step(const GridField& rho, std::span<const double> dbeta) const {
    std::vector<double> v = rho.vec();
    step_inplace(v, dbeta);
    return GridField(rho.grid(), std::move(v));
}

double discrete_h1_seminorm(const Grid& g, std::span<const double> rho) {
    const double h = g.spacing();
    double s = 0.0;
    for (int a = 0; a < g.dim(); ++a)
        for (std::size_t p = 0; p < g.size(); ++p) {
            const double dv = (rho[neighbour(g, p, a, 1)] - rho[p]) / h;
            s += dv * dv;
        }
    return std::sqrt(s * g.cell_volume());
}

SpdeTrajectory simulate_spde(const SpdeStepper& stepper, const GridField& rho_in, const SpdeOptions& opts,
                             const NoiseSource& noise) {
    if (!rho_in.grid()->same_as(*stepper.grid())) throw std::invalid_argument("initial density grid mismatch");
    if (std::abs(opts.dt - stepper.dt()) > 1e-15 * opts.dt) throw std::invalid_argument("stepper dt mismatch");
    const auto nsteps = static_cast<std::size_t>(std::llround(opts.t_end / opts.dt));
    if (nsteps == 0 || std::abs(nsteps * opts.dt - opts.t_end) > 1e-9 * opts.t_end)
        throw std::invalid_argument("t_end must be a whole number of SPDE steps");
    if (opts.mesh_intervals < 1 || nsteps % opts.mesh_intervals != 0)
        throw std::invalid_argument("SPDE steps must divide evenly into the snapshot mesh");
    const std::size_t every = nsteps / opts.mesh_intervals;
    const Grid& g = *rho_in.grid();

    SpdeTrajectory traj;
    std::vector<double> rho = rho_in.vec();
    auto mass = [&]() {
        double m = 0.0;
        for (double x : rho) m += x;
        return m * g.cell_volume();
    };
    auto snap = [&](double t) {
        SpdeSnapshot s;
        s.t = t;
        s.rho = GridField(rho_in.grid(), rho);
        s.mass = mass();
        for (const auto& xi : opts.test_functions) s.observables.push_back(l2_inner(s.rho, xi));
        traj.snapshots.push_back(std::move(s));
    };
    const double m0 = mass();
    snap(0.0);
    traj.max_h1 = discrete_h1_seminorm(g, rho);
    std::vector<double> db(stepper.noise_rank(), 0.0);
    for (std::size_t n = 1; n <= nsteps; ++n) {
        if (!db.empty()) noise(n - 1, db);
        stepper.step_inplace(rho, db);
        for (double x : rho)
            if (!std::isfinite(x)) throw NumericalError("non-finite SPDE value at step " + std::to_string(n));
        traj.steps = n;
        const double m = mass();
        if (m0 != 0.0) traj.max_mass_drift = std::max(traj.max_mass_drift, std::abs(m - m0) / std::abs(m0));
        traj.max_h1 = std::max(traj.max_h1, discrete_h1_seminorm(g, rho));
        if (n % every == 0) snap(opts.t_end * static_cast<double>(n / every) / opts.mesh_intervals);
    }
    return traj;
}

SpdeTrajectory simulate_spde(const SpdeStepper& stepper, const GridField& rho_in, const SpdeOptions& opts,
                             std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, std::sqrt(opts.dt));
    auto traj = simulate_spde(stepper, rho_in, opts, [&](std::size_t, std::span<double> db) {
        for (double& x : db) x = normal(rng);
    });
    traj.seed = seed;
    return traj;
}

SpdeTrajectory simulate_spde(const GridField& rho_in, const LimitCoefficients& coeffs, const SpdeOptions& opts,
                             std::uint64_t seed) {
    const SpdeStepper stepper(limit_equation(coeffs), opts.dt);
    return simulate_spde(stepper, rho_in, opts, seed);
}

SpdeTrajectory solve_deterministic(const GridField& rho_in, DeterministicMode mode, const LimitCoefficients& coeffs,
                                   const SpdeOptions& opts) {
    const SpdeStepper stepper(mode == DeterministicMode::plain ? plain_equation(coeffs) : mean_equation(coeffs),
                              opts.dt);
    return simulate_spde(stepper, rho_in, opts, NoiseSource{});
}

}  // namespace kda
