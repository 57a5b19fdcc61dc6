#include "kda/generator.hpp"

#include <unsupported/Eigen/MatrixFunctions>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "kda/parallel.hpp"

namespace kda {

const char* psi_name(PsiKind k) {
    switch (k) {
        case PsiKind::identity: return "identity";
        case PsiKind::half_square: return "half_square";
        case PsiKind::tanh: return "tanh";
    }
    return "?";
}

PsiKind parse_psi(const std::string& name) {
    if (name == "identity") return PsiKind::identity;
    if (name == "half_square") return PsiKind::half_square;
    if (name == "tanh") return PsiKind::tanh;
    throw std::invalid_argument("unknown psi '" + name + "' (identity, half_square, tanh)");
}

double TestFunction::value(double u) const {
    switch (psi) {
        case PsiKind::identity: return u;
        case PsiKind::half_square: return 0.5 * u * u;
        case PsiKind::tanh: return std::tanh(u);
    }
    return 0.0;
}

double TestFunction::d1(double u) const {
    switch (psi) {
        case PsiKind::identity: return 1.0;
        case PsiKind::half_square: return u;
        case PsiKind::tanh: {
            const double c = 1.0 / std::cosh(u);
            return c * c;
        }
    }
    return 0.0;
}

double TestFunction::d2(double u) const {
    switch (psi) {
        case PsiKind::identity: return 0.0;
        case PsiKind::half_square: return 1.0;
        case PsiKind::tanh: {
            const double c = 1.0 / std::cosh(u);
            return -2.0 * std::tanh(u) * c * c;
        }
    }
    return 0.0;
}

double TestFunction::sup_d1() const {
    return psi == PsiKind::half_square ? std::numeric_limits<double>::infinity() : 1.0;
}

double TestFunction::sup_d2() const {
    switch (psi) {
        case PsiKind::identity: return 0.0;
        case PsiKind::half_square: return 1.0;
        case PsiKind::tanh: return 4.0 / (3.0 * std::sqrt(3.0));  // max of 2 tanh sech^2
    }
    return 0.0;
}

TestFunction make_test_function(GridField xi, PsiKind psi) {
    if (xi.empty()) throw std::invalid_argument("test function profile is empty");
    const double ex = band_excess(xi, default_band(*xi.grid()));
    if (ex > 1e-9)
        throw std::invalid_argument("test function is not band-limited below half the Nyquist mode (relative excess " +
                                    std::to_string(ex) + ")");
    return TestFunction{std::move(xi), psi};
}

double mixing_rate_l1(const PilotChain& chain) {
    const int n = chain.size();
    if (n == 1) return 0.0;
    const Eigen::MatrixXd& Q = chain.rates();
    const Eigen::RowVectorXd lam = chain.stationary().transpose();
    const double h = 0.002 / std::max(1.0, Q.cwiseAbs().maxCoeff());
    const Eigen::MatrixXd step = (Q * h).exp();
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);
    auto tv = [&](const Eigen::MatrixXd& M) {
        double m = 0.0;
        for (int i = 0; i < n; ++i) m = std::max(m, (M.row(i) - lam).cwiseAbs().sum());
        return m;
    };
    double prev = tv(P), total = 0.0;
    const double t_max = 200.0 / chain.spectral_gap();
    for (double t = 0.0; t < t_max; t += h) {
        P = P * step;
        const double cur = tv(P);
        total += 0.5 * h * (prev + cur);
        prev = cur;
        if (cur < 1e-13) break;
    }
    return total;
}

CorrectorCalculus::CorrectorCalculus(const PilotChain& chain, const VelocityModel& model, TestFunction test)
    : chain_(&chain), model_(&model), test_(std::move(test)) {
    if (!test_.xi.grid()->same_as(*chain.grid())) throw std::invalid_argument("test function grid mismatch");
    data_ = state_data(chain, model);
    grad_xi_ = gradient(test_.xi);
    hess_xi_ = hessian(test_.xi);
    for (const auto& r : data_.R0chi) {
        GridField dot(chain.grid());
        for (int a = 0; a < model.dim(); ++a) dot = dot + r[a] * grad_xi_[a];
        r0chi_dot_.push_back(std::move(dot));
    }
    gamma_l1_ = mixing_rate_l1(chain);
}

double CorrectorCalculus::pair(const KineticDensity& h, const KineticDensity& g) const {
    const std::size_t G = h.grid()->size();
    double s = 0.0;
    for (int j = 0; j < model_->count(); ++j) {
        auto a = h.slice(j), b = g.slice(j);
        double t = 0.0;
        for (std::size_t x = 0; x < G; ++x) t += a[x] * b[x];
        s += model_->weights()[j] * t;
    }
    return s * h.grid()->cell_volume();
}

double CorrectorCalculus::inner_grad(const VectorField& u, const GridField& rho) const {
    double s = 0.0;
    for (int a = 0; a < u.dim(); ++a) s += l2_inner(u[a] * rho, grad_xi_[a]);
    return s;
}

double CorrectorCalculus::phi(const KineticDensity& f) const {
    return test_.value(l2_inner(density(f, *model_), test_.xi));
}

double CorrectorCalculus::phi1(const KineticDensity& f, int i) const {
    const FieldMoments m = field_moments(f, *model_);
    const double u = l2_inner(m.rho, test_.xi);
    const double B = l2_inner(m.J, grad_xi_) + l2_inner(m.rho, r0chi_dot_[i]);
    return test_.d1(u) * B;
}

KineticDensity CorrectorCalculus::phi1_derivative(const KineticDensity& f, int i) const {
    const FieldMoments m = field_moments(f, *model_);
    const double u = l2_inner(m.rho, test_.xi);
    const double B = l2_inner(m.J, grad_xi_) + l2_inner(m.rho, r0chi_dot_[i]);
    const double p1 = test_.d1(u), p2 = test_.d2(u);
    const std::size_t G = f.grid()->size();
    std::vector<double> data(G * model_->count());
    for (int j = 0; j < model_->count(); ++j) {
        const auto& v = model_->velocity(j);
        for (std::size_t x = 0; x < G; ++x) {
            double vg = 0.0;
            for (int a = 0; a < model_->dim(); ++a) vg += v[a] * grad_xi_[a][x];
            data[j * G + x] = p2 * test_.xi[x] * B + p1 * (vg + r0chi_dot_[i][x]);
        }
    }
    return KineticDensity(f.grid(), model_->count(), std::move(data));
}

KineticDensity CorrectorCalculus::phi_derivative(const KineticDensity& f) const {
    const double p1 = test_.d1(l2_inner(density(f, *model_), test_.xi));
    const std::size_t G = f.grid()->size();
    std::vector<double> data(G * model_->count());
    for (int j = 0; j < model_->count(); ++j)
        for (std::size_t x = 0; x < G; ++x) data[j * G + x] = p1 * test_.xi[x];
    return KineticDensity(f.grid(), model_->count(), std::move(data));
}

double CorrectorCalculus::L_flat(const KineticDensity& f, const KineticDensity& derivative) const {
    const std::size_t G = f.grid()->size();
    std::vector<double> transport(G * model_->count());
    for (int j = 0; j < model_->count(); ++j) {
        const auto s = f.slice(j);
        const VectorField g = gradient(GridField(f.grid(), std::vector<double>(s.begin(), s.end())));
        const auto& v = model_->velocity(j);
        for (std::size_t x = 0; x < G; ++x) {
            double t = 0.0;
            for (int a = 0; a < model_->dim(); ++a) t += v[a] * g[a][x];
            transport[j * G + x] = t;
        }
    }
    return -pair(KineticDensity(f.grid(), model_->count(), std::move(transport)), derivative);
}

double CorrectorCalculus::L_flat_phi(const KineticDensity& f) const { return L_flat(f, phi_derivative(f)); }

double CorrectorCalculus::L_flat_phi1(const KineticDensity& f, int i) const {
    return L_flat(f, phi1_derivative(f, i));
}

double CorrectorCalculus::L_sharp_phi1(const KineticDensity& f, int i) const {
    double a_term = 0.0;
    for (int k = 0; k < chain_->size(); ++k) {
        const double q = chain_->rates()(i, k);
        if (q != 0.0) a_term += q * phi1(f, k);
    }
    const GridField rho = density(f, *model_);
    const KineticDensity h =
        KineticDensity::local_equilibrium(rho, *model_, &chain_->state_gradients()[i]) + f * -1.0;
    return a_term + pair(h, phi1_derivative(f, i));
}

double CorrectorCalculus::L_sharp_phi(const KineticDensity& f, int i) const {
    const GridField rho = density(f, *model_);
    const KineticDensity h =
        KineticDensity::local_equilibrium(rho, *model_, &chain_->state_gradients()[i]) + f * -1.0;
    return pair(h, phi_derivative(f));
}

LimitGeneratorValue CorrectorCalculus::limit_generator(const GridField& rho) const {
    const int d = model_->dim();
    const double u = l2_inner(rho, test_.xi);
    const auto& lam = chain_->stationary();
    LimitGeneratorValue out;
    double second = 0.0;
    double first = 0.0;
    for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) first += model_->K_M()[a * d + b] * l2_inner(rho, hess_xi_[a * d + b]);
    for (int i = 0; i < chain_->size(); ++i) {
        const VectorField& c = data_.chi[i];
        const VectorField& eta = data_.R0R1chi[i];
        second += lam(i) * inner_grad(c, rho) * inner_grad(data_.R0chi[i], rho);
        double t = 0.0;
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) {
                t += l2_inner(rho * c[a] * eta[b], hess_xi_[a * d + b]);
                // (grad eta)_ab = d_a eta_b
                t += l2_inner(rho * c[a] * partial(eta[b], a), grad_xi_[b]);
            }
        first += lam(i) * t;
    }
    out.second_order = test_.d2(u) * second;
    out.first_order = test_.d1(u) * first;
    return out;
}

double CorrectorCalculus::phi1_bound(const KineticDensity& f) const {
    double theta = 0.0;
    for (int j = 0; j < model_->count(); ++j) {
        double s = 0.0;
        for (double x : f.slice(j)) s += std::abs(x);
        theta += model_->weights()[j] * s;
    }
    theta *= f.grid()->cell_volume();
    double gmax = 0.0;
    for (std::size_t x = 0; x < f.grid()->size(); ++x) {
        double g2 = 0.0;
        for (int a = 0; a < model_->dim(); ++a) g2 += grad_xi_[a][x] * grad_xi_[a][x];
        gmax = std::max(gmax, std::sqrt(g2));
    }
    const double W = test_.xi.max_abs() + gmax;
    const double R = chain_->radius();
    const double p1 = test_.sup_d1(), p2 = test_.sup_d2();
    if (!std::isfinite(p1)) return std::numeric_limits<double>::infinity();
    const double C = (p2 * W * W + p1 * W) * (1.0 + theta * theta * (2.0 + R) * (2.0 + R));
    return C * ((2.0 + R * (1.0 + gamma_l1_)) * theta + R * gamma_l1_);
}

double b_from_coefficients(const GridField& rho, const GridField& xi, const LimitCoefficients& c) {
    const int d = c.dim;
    const VectorField g = gradient(xi);
    std::vector<GridField> flux;
    for (int a = 0; a < d; ++a) {
        GridField s(c.grid);
        for (int b = 0; b < d; ++b) s = s + c.K_star[b * d + a] * g[b];
        flux.push_back(std::move(s));
    }
    GridField integrand = divergence(VectorField(std::move(flux)));
    for (int a = 0; a < d; ++a) integrand = integrand - c.Psi[a] * g[a];
    return l2_inner(rho, integrand);
}

GridField random_smooth_field(GridPtr grid, Rng& rng, double offset, double amplitude, int max_mode) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<FourierMode> modes;
    const int ky_max = grid->dim() == 2 ? max_mode : 0;
    for (int kx = 0; kx <= max_mode; ++kx)
        for (int ky = -ky_max; ky <= ky_max; ++ky) {
            if (kx == 0 && ky <= 0) continue;
            modes.push_back({FourierMode::Kind::Cos, {kx, ky}, normal(rng)});
            modes.push_back({FourierMode::Kind::Sin, {kx, ky}, normal(rng)});
        }
    GridField p = field_from_modes(grid, modes);
    const double m = p.max_abs();
    if (m > 0.0) p = p * (amplitude / m);
    return p + GridField::constant(grid, offset);
}

KineticDensity random_kinetic_sample(GridPtr grid, const VelocityModel& model, Rng& rng, double perturbation) {
    std::uniform_real_distribution<double> scale(0.5, 2.0);
    const double a = scale(rng);
    const std::size_t G = grid->size();
    std::vector<double> data(G * model.count());
    for (int j = 0; j < model.count(); ++j) {
        const GridField p = random_smooth_field(grid, rng, 1.0, perturbation);
        for (std::size_t x = 0; x < G; ++x) data[j * G + x] = a * model.equilibrium()[j] * p[x];
    }
    return KineticDensity(grid, model.count(), std::move(data));
}

PoissonReport verify_poisson_phi1(const CorrectorCalculus& calc, const VelocityModel& model, std::size_t samples,
                                  std::uint64_t seed) {
    const GridPtr grid = calc.test().xi.grid();
    const int N = static_cast<int>(calc.states().chi.size());
    std::vector<double> res(samples), flat(samples), sharp(samples);
    parallel_for(samples, [&](std::size_t k) {
        Rng rng(derive_seed(seed, k));
        const KineticDensity f = random_kinetic_sample(grid, model, rng);
        const int i = std::uniform_int_distribution<int>(0, N - 1)(rng);
        flat[k] = calc.L_flat_phi(f);
        res[k] = std::abs(calc.L_sharp_phi1(f, i) + flat[k]);
        sharp[k] = std::abs(calc.L_sharp_phi(f, i));
    });
    PoissonReport r;
    r.samples = samples;
    for (std::size_t k = 0; k < samples; ++k) {
        r.max_residual = std::max(r.max_residual, res[k]);
        r.max_scale = std::max(r.max_scale, std::abs(flat[k]));
        r.max_sharp_phi = std::max(r.max_sharp_phi, sharp[k]);
    }
    return r;
}

KineticDensity perturbed_equilibrium(const PilotChain& chain, const VelocityModel& model, const GridField& rho,
                                     const Eigen::VectorXd& weights) {
    const VectorField g = gradient(combine_states(chain, weights));
    return KineticDensity::local_equilibrium(rho, model, &g);
}

namespace {

McCheck summarize(std::string name, const std::vector<double>& x, double exact) {
    McCheck c;
    c.name = std::move(name);
    c.samples = x.size();
    c.exact = exact;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size() - 1);
    c.estimate = mean;
    c.std_error = std::sqrt(var / static_cast<double>(x.size()));
    const double diff = mean - exact;
    // Degenerate ensembles (zero pilot): exact agreement up to rounding.
    const double floor = 1e-14 * std::max(1.0, std::abs(exact));
    if (c.std_error <= floor)
        c.z = std::abs(diff) <= floor ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    else
        c.z = diff / c.std_error;
    c.pass = std::abs(c.z) <= kMaxZ;
    return c;
}

void require_samples(std::size_t n) {
    if (n < 2) throw std::invalid_argument("Monte Carlo checks need at least 2 samples");
}

}  // namespace

StationarityReport verify_stationarity_identities(const PilotChain& chain, const VelocityModel& model,
                                                  const GridField& rho, const GridField& xi, std::size_t samples,
                                                  double burn_in, std::uint64_t seed) {
    require_samples(samples);
    const int N = chain.size();
    const VectorField gx = gradient(xi);
    Eigen::VectorXd s(N), theta(N);
    for (int i = 0; i < N; ++i) {
        s(i) = l2_inner(chi(chain.state(i), model) * rho, gx);
        theta(i) = std::cos(i + 1.0);
    }
    const Eigen::VectorXd r1theta = resolvent(chain, 1.0, Eigen::MatrixXd(theta)).col(0);
    const Eigen::VectorXd r1s = resolvent(chain, 1.0, Eigen::MatrixXd(s)).col(0);
    const auto& lam = chain.stationary();
    double exact1 = 0.0, exact2 = 0.0;
    for (int i = 0; i < N; ++i) {
        exact1 += lam(i) * s(i) * r1theta(i);
        exact2 += lam(i) * s(i) * r1s(i);
    }
    std::vector<double> x1(samples), x2(samples);
    parallel_for(samples, [&](std::size_t k) {
        Rng rng(derive_seed(seed, k, 1));
        const FilterState fs = sample_stationary_pair(chain, burn_in, rng);
        const double jw = fs.weights.dot(s);
        x1[k] = jw * theta(fs.state);
        x2[k] = jw * jw;
    });
    return {summarize("JD1", x1, exact1), summarize("JJD2", x2, exact2)};
}

McCheck verify_centering(const CorrectorCalculus& calc, const PilotChain& chain, const VelocityModel& model,
                         const GridField& rho, std::size_t samples, double burn_in, std::uint64_t seed) {
    require_samples(samples);
    std::vector<double> x(samples);
    parallel_for(samples, [&](std::size_t k) {
        Rng rng(derive_seed(seed, k, 2));
        const FilterState fs = sample_stationary_pair(chain, burn_in, rng);
        x[k] = calc.L_flat_phi(perturbed_equilibrium(chain, model, rho, fs.weights));
    });
    return summarize("centering", x, 0.0);
}

McCheck verify_solvability(const CorrectorCalculus& calc, const PilotChain& chain, const VelocityModel& model,
                           const GridField& rho, std::size_t samples, double burn_in, std::uint64_t seed) {
    require_samples(samples);
    std::vector<double> x(samples);
    parallel_for(samples, [&](std::size_t k) {
        Rng rng(derive_seed(seed, k, 3));
        const FilterState fs = sample_stationary_pair(chain, burn_in, rng);
        x[k] = calc.L_flat_phi1(perturbed_equilibrium(chain, model, rho, fs.weights), fs.state);
    });
    return summarize("solvability", x, calc.limit_generator(rho).total());
}

}  // namespace kda
