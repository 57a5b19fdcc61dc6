#include "kda/velocity.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "kda/error.hpp"

namespace kda {

const char* hypothesis_name(Hypothesis h) {
    switch (h) {
        case Hypothesis::vdv: return "vdv";
        case Hypothesis::HypM: return "HypM";
        case Hypothesis::BallR: return "BallR";
        case Hypothesis::Rsmall: return "Rsmall";
        case Hypothesis::mcentred: return "mcentred";
        case Hypothesis::mixCoupled: return "mixCoupled";
        case Hypothesis::generator: return "generator";
    }
    return "unknown";
}

namespace {

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

}  // namespace

VelocityModel make_velocity_model(const std::vector<std::vector<double>>& velocities,
                                  const std::vector<double>& weights, const std::vector<double>& equilibrium,
                                  double alpha) {
    const std::size_t n = velocities.size();
    if (n == 0) throw std::invalid_argument("velocity set is empty");
    if (weights.size() != n || equilibrium.size() != n)
        throw std::invalid_argument("velocities, weights and equilibrium must have the same length");
    const int d = static_cast<int>(velocities.front().size());
    if (d != 1 && d != 2) throw std::invalid_argument("velocities must have 1 or 2 components");

    VelocityModel m;
    m.dim_ = d;
    m.alpha_ = alpha;
    for (std::size_t j = 0; j < n; ++j) {
        if (static_cast<int>(velocities[j].size()) != d)
            throw std::invalid_argument("velocity " + std::to_string(j) + " has the wrong dimension");
        std::array<double, 2> v{0.0, 0.0};
        for (int a = 0; a < d; ++a) v[a] = velocities[j][a];
        if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(weights[j]) ||
            !std::isfinite(equilibrium[j]))
            throw std::invalid_argument("non-finite velocity model entry " + std::to_string(j));
        if (!(weights[j] > 0.0)) throw std::invalid_argument("weight " + std::to_string(j) + " is not positive");
        if (std::hypot(v[0], v[1]) > 1.0 + kMomentTolerance)
            throw AdmissibilityError(Hypothesis::vdv, "|v_" + std::to_string(j) + "| > 1");
        m.velocities_.push_back(v);
    }
    m.weights_ = weights;
    m.equilibrium_ = equilibrium;
    if (!(alpha > 0.0 && alpha <= 1.0)) throw AdmissibilityError(Hypothesis::HypM, "alpha must lie in (0, 1]");

    // The five moment sums.
    double s_nu = 0.0, s_m = 0.0;
    std::array<double, 2> s_v{0, 0}, s_vm{0, 0};
    std::array<double, 8> s_vvvm{};
    for (std::size_t j = 0; j < n; ++j) {
        const auto& v = m.velocities_[j];
        const double w = weights[j], M = equilibrium[j];
        s_nu += w;
        s_m += w * M;
        for (int a = 0; a < d; ++a) {
            s_v[a] += w * v[a];
            s_vm[a] += w * v[a] * M;
            for (int b = 0; b < d; ++b) {
                m.k_one_[a * 2 + b] += w * v[a] * v[b];
                m.k_m_[a * 2 + b] += w * v[a] * v[b] * M;
                for (int c = 0; c < d; ++c) s_vvvm[(a * 2 + b) * 2 + c] += w * v[a] * v[b] * v[c] * M;
            }
        }
    }
    // Compact the padded 2x2 storage to row-major d x d.
    if (d == 1) {
        m.k_one_ = {m.k_one_[0], 0, 0, 0};
        m.k_m_ = {m.k_m_[0], 0, 0, 0};
    }
    double res = std::abs(s_nu - 1.0);
    if (res > kMomentTolerance) throw AdmissibilityError(Hypothesis::vdv, "sum nu = " + fmt(s_nu) + " != 1");
    res = std::max(res, std::abs(s_m - 1.0));
    if (std::abs(s_m - 1.0) > kMomentTolerance)
        throw AdmissibilityError(Hypothesis::vdv, "sum nu M = " + fmt(s_m) + " != 1");
    for (int a = 0; a < d; ++a) {
        res = std::max({res, std::abs(s_v[a]), std::abs(s_vm[a])});
        if (std::abs(s_v[a]) > kMomentTolerance)
            throw AdmissibilityError(Hypothesis::vdv, "sum nu v = " + fmt(s_v[a]) + " != 0");
        if (std::abs(s_vm[a]) > kMomentTolerance)
            throw AdmissibilityError(Hypothesis::vdv, "sum nu v M = " + fmt(s_vm[a]) + " != 0");
    }
    for (double t : s_vvvm) {
        res = std::max(res, std::abs(t));
        if (std::abs(t) > kMomentTolerance)
            throw AdmissibilityError(Hypothesis::vdv, "third moment sum nu v v v M = " + fmt(t) + " != 0");
    }
    m.residual_ = res;

    // Symmetric velocity set with even weights and equilibrium.
    for (std::size_t j = 0; j < n; ++j) {
        const auto& v = m.velocities_[j];
        bool found = false;
        for (std::size_t k = 0; k < n && !found; ++k) {
            const auto& u = m.velocities_[k];
            found = std::abs(u[0] + v[0]) <= kMomentTolerance && std::abs(u[1] + v[1]) <= kMomentTolerance &&
                    std::abs(weights[k] - weights[j]) <= kMomentTolerance &&
                    std::abs(equilibrium[k] - equilibrium[j]) <= kMomentTolerance;
        }
        if (!found)
            throw AdmissibilityError(Hypothesis::vdv, "velocity set is not symmetric with even weights and M at v_" +
                                                          std::to_string(j));
    }

    double margin = INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
        const double M = equilibrium[j];
        margin = std::min({margin, M - alpha, 1.0 / alpha - M});
        if (M < alpha - kMomentTolerance || M > 1.0 / alpha + kMomentTolerance)
            throw AdmissibilityError(Hypothesis::HypM,
                                     "M_" + std::to_string(j) + " = " + fmt(M) + " outside [alpha, 1/alpha]");
    }
    m.hypm_margin_ = margin;
    return m;
}

VelocityModel two_speed_model() { return make_velocity_model({{1.0}, {-1.0}}, {0.5, 0.5}, {1.0, 1.0}, 1.0); }

VelocityModel circle_model(int count, double speed, std::vector<double> equilibrium, double alpha) {
    if (count < 2 || count % 2 != 0) throw std::invalid_argument("circle model needs an even number of directions");
    if (equilibrium.empty()) equilibrium.assign(count, 1.0);
    std::vector<std::vector<double>> v;
    for (int j = 0; j < count; ++j) {
        const double th = 2.0 * std::numbers::pi * j / count;
        v.push_back({speed * std::cos(th), speed * std::sin(th)});
    }
    // Exact antipodes: the cos/sin of th + pi differ from the negation by rounding.
    for (int j = count / 2; j < count; ++j) v[j] = {-v[j - count / 2][0], -v[j - count / 2][1]};
    return make_velocity_model(v, std::vector<double>(count, 1.0 / count), equilibrium, alpha);
}

Moments moments(std::span<const double> profile, const VelocityModel& model) {
    if (static_cast<int>(profile.size()) != model.count())
        throw std::invalid_argument("profile length does not match velocity set");
    Moments out;
    out.dim = model.dim();
    const int d = model.dim();
    for (int j = 0; j < model.count(); ++j) {
        const double w = model.weights()[j] * profile[j];
        const auto& v = model.velocity(j);
        out.rho += w;
        for (int a = 0; a < d; ++a) {
            out.J[a] += w * v[a];
            for (int b = 0; b < d; ++b) out.K[a * d + b] += w * v[a] * v[b];
        }
    }
    return out;
}

std::vector<double> relaxation(std::span<const double> profile, const VelocityModel& model) {
    const double rho = moments(profile, model).rho;
    std::vector<double> out(profile.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = rho * model.equilibrium()[j] - profile[j];
    return out;
}

KineticDensity::KineticDensity(GridPtr grid, int velocities, std::vector<double> data)
    : grid_(std::move(grid)), nv_(velocities), data_(std::move(data)) {
    if (!grid_) throw std::invalid_argument("null grid");
    if (data_.size() != grid_->size() * static_cast<std::size_t>(nv_))
        throw std::invalid_argument("kinetic density size mismatch");
    for (double v : data_)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite kinetic density value");
}

KineticDensity KineticDensity::local_equilibrium(const GridField& rho, const VelocityModel& model,
                                                 const VectorField* grad_w) {
    const std::size_t G = rho.size();
    std::vector<double> data(G * model.count());
    for (int j = 0; j < model.count(); ++j) {
        const auto& v = model.velocity(j);
        for (std::size_t x = 0; x < G; ++x) {
            double mbar = model.equilibrium()[j];
            if (grad_w)
                for (int a = 0; a < model.dim(); ++a) mbar += v[a] * (*grad_w)[a][x];
            data[j * G + x] = rho[x] * mbar;
        }
    }
    return KineticDensity(rho.grid(), model.count(), std::move(data));
}

KineticDensity KineticDensity::operator+(const KineticDensity& o) const {
    if (o.data_.size() != data_.size()) throw std::invalid_argument("kinetic density size mismatch");
    std::vector<double> v(data_);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += o.data_[i];
    return KineticDensity(grid_, nv_, std::move(v));
}

KineticDensity KineticDensity::operator*(double s) const {
    std::vector<double> v(data_);
    for (double& x : v) x *= s;
    return KineticDensity(grid_, nv_, std::move(v));
}

GridField density(const KineticDensity& f, const VelocityModel& model) {
    if (f.velocities() != model.count()) throw std::invalid_argument("velocity count mismatch");
    const std::size_t G = f.grid()->size();
    std::vector<double> rho(G, 0.0);
    for (int j = 0; j < model.count(); ++j) {
        const double w = model.weights()[j];
        auto s = f.slice(j);
        for (std::size_t x = 0; x < G; ++x) rho[x] += w * s[x];
    }
    return GridField(f.grid(), std::move(rho));
}

FieldMoments field_moments(const KineticDensity& f, const VelocityModel& model) {
    const int d = model.dim();
    const std::size_t G = f.grid()->size();
    std::vector<std::vector<double>> J(d, std::vector<double>(G, 0.0));
    std::vector<std::vector<double>> K(d * d, std::vector<double>(G, 0.0));
    for (int j = 0; j < model.count(); ++j) {
        const double w = model.weights()[j];
        const auto& v = model.velocity(j);
        auto s = f.slice(j);
        for (std::size_t x = 0; x < G; ++x)
            for (int a = 0; a < d; ++a) {
                J[a][x] += w * v[a] * s[x];
                for (int b = 0; b < d; ++b) K[a * d + b][x] += w * v[a] * v[b] * s[x];
            }
    }
    FieldMoments out;
    out.rho = density(f, model);
    std::vector<GridField> jc;
    for (auto& c : J) jc.emplace_back(f.grid(), std::move(c));
    out.J = VectorField(std::move(jc));
    for (auto& c : K) out.K.emplace_back(f.grid(), std::move(c));
    return out;
}

KineticDensity relaxation(const KineticDensity& f, const VelocityModel& model) {
    const GridField rho = density(f, model);
    const std::size_t G = f.grid()->size();
    std::vector<double> out(f.data().size());
    for (int j = 0; j < model.count(); ++j) {
        auto s = f.slice(j);
        for (std::size_t x = 0; x < G; ++x) out[j * G + x] = rho[x] * model.equilibrium()[j] - s[x];
    }
    return KineticDensity(f.grid(), f.velocities(), std::move(out));
}

double total_mass(const KineticDensity& f, const VelocityModel& model) {
    return density(f, model).mean();
}

}  // namespace kda
