#include "kda/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "kda/error.hpp"

namespace kda {

namespace {

// Stack a vector field into a dG column: index a * G + x.
Eigen::VectorXd stack(const VectorField& v) {
    const std::size_t G = v[0].size();
    Eigen::VectorXd out(v.dim() * G);
    for (int a = 0; a < v.dim(); ++a)
        for (std::size_t x = 0; x < G; ++x) out(a * G + x) = v[a][x];
    return out;
}

VectorField unstack(const GridPtr& g, const Eigen::VectorXd& s) {
    const std::size_t G = g->size();
    std::vector<GridField> comps;
    for (int a = 0; a < g->dim(); ++a) {
        std::vector<double> v(G);
        for (std::size_t x = 0; x < G; ++x) v[x] = s(a * G + x);
        comps.emplace_back(g, std::move(v));
    }
    return VectorField(std::move(comps));
}

// sum_i lambda_i A_i (x) B_i, per component pair (a, b), pointwise.
std::vector<GridField> expect_outer(const PilotChain& chain, const std::vector<VectorField>& A,
                                    const std::vector<VectorField>& B) {
    const int d = chain.grid()->dim();
    const std::size_t G = chain.grid()->size();
    std::vector<GridField> out;
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) {
            std::vector<double> v(G, 0.0);
            for (int i = 0; i < chain.size(); ++i) {
                const double l = chain.stationary()(i);
                for (std::size_t x = 0; x < G; ++x) v[x] += l * A[i][a][x] * B[i][b][x];
            }
            out.emplace_back(chain.grid(), std::move(v));
        }
    return out;
}

// sum_i lambda_i div(chi_i) A_i.
VectorField expect_div_times(const PilotChain& chain, const std::vector<VectorField>& chi,
                             const std::vector<VectorField>& A) {
    const int d = chain.grid()->dim();
    const std::size_t G = chain.grid()->size();
    std::vector<std::vector<double>> v(d, std::vector<double>(G, 0.0));
    for (int i = 0; i < chain.size(); ++i) {
        const GridField dv = divergence(chi[i]);
        const double l = chain.stationary()(i);
        for (int a = 0; a < d; ++a)
            for (std::size_t x = 0; x < G; ++x) v[a][x] += l * dv[x] * A[i][a][x];
    }
    std::vector<GridField> comps;
    for (auto& c : v) comps.emplace_back(chain.grid(), std::move(c));
    return VectorField(std::move(comps));
}

std::vector<GridField> add_constant_matrix(std::vector<GridField> m, const std::array<double, 4>& k, int d) {
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b)
            m[a * d + b] = m[a * d + b] + GridField::constant(m[a * d + b].grid(), k[a * d + b]);
    return m;
}

}  // namespace

VectorField chi(const GridField& n, const VelocityModel& model) {
    const int d = model.dim();
    if (n.grid()->dim() != d) throw std::invalid_argument("field and velocity model dimensions differ");
    const VectorField g = gradient(n);
    const auto& k = model.K_one();
    std::vector<GridField> comps;
    for (int a = 0; a < d; ++a) {
        GridField c = g[0] * k[a * d + 0];
        for (int b = 1; b < d; ++b) c = c + g[b] * k[a * d + b];
        comps.push_back(std::move(c));
    }
    return VectorField(std::move(comps));
}

StateData state_data(const PilotChain& chain, const VelocityModel& model) {
    StateData s;
    for (const auto& n : chain.states()) s.chi.push_back(chi(n, model));
    s.R0chi = resolvent(chain, 0.0, s.chi);
    s.R1chi = resolvent(chain, 1.0, s.chi);
    s.R0R1chi = resolvent(chain, 0.0, s.R1chi);
    return s;
}

GridField min_sym_eigenvalue(const std::vector<GridField>& m, int dim) {
    const std::size_t G = m.front().size();
    std::vector<double> v(G);
    for (std::size_t x = 0; x < G; ++x) {
        if (dim == 1) {
            v[x] = m[0][x];
        } else {
            const double a = m[0][x], d = m[3][x], b = 0.5 * (m[1][x] + m[2][x]);
            v[x] = 0.5 * (a + d) - std::sqrt(0.25 * (a - d) * (a - d) + b * b);
        }
    }
    return GridField(m.front().grid(), std::move(v));
}

LimitCoefficients compute_limit_coefficients(const PilotChain& chain, const VelocityModel& model,
                                             const CoefficientOptions& opts) {
    if (chain.grid()->dim() != model.dim()) throw std::invalid_argument("chain and model dimensions differ");
    LimitCoefficients c;
    c.grid = chain.grid();
    c.dim = model.dim();
    const int d = c.dim;
    const std::size_t G = c.grid->size();
    const std::size_t dG = d * G;
    const int N = chain.size();
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) c.K_M[a * d + b] = model.K_M()[a * d + b];

    c.states = state_data(chain, model);
    const auto& S = c.states;

    c.K_star = add_constant_matrix(expect_outer(chain, S.R0R1chi, S.chi), c.K_M, d);
    c.Psi = expect_div_times(chain, S.chi, S.R0R1chi);
    c.K_strato = add_constant_matrix(expect_outer(chain, S.R1chi, S.chi), c.K_M, d);
    c.Psi_strato = expect_div_times(chain, S.chi, S.R1chi);

    const GridField kmin = min_sym_eigenvalue(c.K_star, d);
    c.min_K_star_eigenvalue = kmin.min();
    if (!(c.min_K_star_eigenvalue > 0.0))
        throw NumericalError("K* is not positive definite (min eigenvalue " + std::to_string(c.min_K_star_eigenvalue) +
                             ")");
    if (d == 2)
        for (std::size_t x = 0; x < G; ++x)
            c.K_star_asymmetry = std::max(c.K_star_asymmetry, std::abs(c.K_star[1][x] - c.K_star[2][x]));

    // Low-rank factors: C = U W^T with U_i = lambda_i R0 chi_i, W_i = chi_i.
    Eigen::MatrixXd U(dG, N), W(dG, N);
    for (int i = 0; i < N; ++i) {
        U.col(i) = chain.stationary()(i) * stack(S.R0chi[i]);
        W.col(i) = stack(S.chi[i]);
    }
    // Asymmetry and entrywise bound without storing C.
    for (std::size_t p = 0; p < dG; ++p)
        for (std::size_t q = p; q < dG; ++q) {
            const double cpq = U.row(p).dot(W.row(q));
            const double cqp = U.row(q).dot(W.row(p));
            c.kernel_asymmetry = std::max(c.kernel_asymmetry, std::abs(cpq - cqp));
            c.kernel_max_abs = std::max({c.kernel_max_abs, std::abs(cpq), std::abs(cqp)});
        }
    const double cv = c.grid->cell_volume();
    if (dG <= opts.kernel_limit) {
        const Eigen::MatrixXd C = U * W.transpose();
        c.kernel = 0.5 * (C + C.transpose());
    }

    Eigen::VectorXd mu;
    Eigen::MatrixXd vecs;  // Euclidean-orthonormal eigenvectors of cv * C_sym
    if (dG <= opts.dense_eigen_limit) {
        const Eigen::MatrixXd A = cv * (c.kernel.size() ? c.kernel
                                                        : Eigen::MatrixXd(0.5 * (U * W.transpose() +
                                                                                 W * U.transpose())));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
        mu = es.eigenvalues();
        vecs = es.eigenvectors();
        c.dense_eigensolve = true;
    } else {
        // Range of C_sym lies in span[U W]; project onto an orthonormal basis of it.
        Eigen::MatrixXd B(dG, 2 * N);
        B << U, W;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
        const int r = static_cast<int>(qr.rank());
        const Eigen::MatrixXd Qb = (qr.householderQ() * Eigen::MatrixXd::Identity(dG, r));
        const Eigen::MatrixXd QU = Qb.transpose() * U, QW = Qb.transpose() * W;
        const Eigen::MatrixXd small = 0.5 * cv * (QU * QW.transpose() + QW * QU.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(small);
        mu = es.eigenvalues();
        vecs = Qb * es.eigenvectors();
        c.dense_eigensolve = false;
    }
    c.min_raw_eigenvalue = mu.size() ? mu.minCoeff() : 0.0;
    if (c.min_raw_eigenvalue < -opts.negative_tolerance)
        throw NumericalError("covariance operator has eigenvalue " + std::to_string(c.min_raw_eigenvalue));
    // Eigen returns ascending order; keep descending retained modes.
    const double clip = opts.eigen_clip * (mu.size() ? std::max(mu.maxCoeff(), 0.0) : 0.0);
    for (int k = static_cast<int>(mu.size()) - 1; k >= 0; --k) {
        if (mu(k) <= clip) continue;
        c.eigenvalues.push_back(mu(k));
        c.modes.push_back(unstack(c.grid, vecs.col(k) / std::sqrt(cv)));
    }
    c.rank = static_cast<int>(c.eigenvalues.size());
    return c;
}

VectorField apply_S(const LimitCoefficients& c, const VectorField& u) {
    VectorField out = VectorField::zeros(c.grid);
    for (int k = 0; k < c.rank; ++k) out = out + c.modes[k] * (c.eigenvalues[k] * l2_inner(u, c.modes[k]));
    return out;
}

VectorField apply_S_half(const LimitCoefficients& c, const VectorField& u) {
    VectorField out = VectorField::zeros(c.grid);
    for (int k = 0; k < c.rank; ++k)
        out = out + c.modes[k] * (std::sqrt(c.eigenvalues[k]) * l2_inner(u, c.modes[k]));
    return out;
}

double quadratic_form(const LimitCoefficients& c, const VectorField& u) {
    double s = 0.0;
    for (int k = 0; k < c.rank; ++k) {
        const double p = l2_inner(u, c.modes[k]);
        s += c.eigenvalues[k] * p * p;
    }
    return s;
}

Eigen::MatrixXd weighted_kernel(const LimitCoefficients& c) {
    if (c.kernel.size() == 0) throw std::logic_error("kernel was not assembled");
    return c.grid->cell_volume() * c.kernel;
}

Eigen::MatrixXd sqrt_operator(const LimitCoefficients& c) {
    const std::size_t dG = c.dim * c.grid->size();
    const double cv = c.grid->cell_volume();
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dG, dG);
    for (int k = 0; k < c.rank; ++k) {
        const Eigen::VectorXd p = stack(c.modes[k]);
        out += std::sqrt(c.eigenvalues[k]) * cv * p * p.transpose();
    }
    return out;
}

EnhancedDiffusionReport enhanced_diffusion_check(const LimitCoefficients& c, const PilotChain& chain) {
    EnhancedDiffusionReport r;
    r.reversible = chain.is_reversible();
    r.asserted = r.reversible;
    std::vector<GridField> diff;
    for (int a = 0; a < c.dim; ++a)
        for (int b = 0; b < c.dim; ++b)
            diff.push_back(c.K_star[a * c.dim + b] - GridField::constant(c.grid, c.K_M[a * c.dim + b]));
    r.eigenvalue_field = min_sym_eigenvalue(diff, c.dim);
    r.min_eigenvalue = r.eigenvalue_field.min();
    r.pass = !r.asserted || r.min_eigenvalue >= -kEnhancedDiffusionTolerance;
    return r;
}

}  // namespace kda
