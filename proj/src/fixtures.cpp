#include "kda/fixtures.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace kda {

namespace {

GridField random_state(const GridPtr& g, int max_mode, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<FourierMode> modes;
    const int ky_max = g->dim() == 2 ? max_mode : 0;
    for (int kx = 0; kx <= max_mode; ++kx)
        for (int ky = -ky_max; ky <= ky_max; ++ky) {
            if (kx == 0 && ky <= 0) continue;  // half plane, no constant
            const double decay = 1.0 / (1.0 + kx * kx + ky * ky);
            modes.push_back({FourierMode::Kind::Cos, {kx, ky}, decay * normal(rng)});
            modes.push_back({FourierMode::Kind::Sin, {kx, ky}, decay * normal(rng)});
        }
    return field_from_modes(g, modes);
}

}  // namespace

PilotChain random_chain(GridPtr grid, int n, Rng& rng, const RandomChainOptions& opts) {
    if (n < 1) throw std::invalid_argument("random chain needs at least one state");
    if (opts.max_mode > default_band(*grid)) throw std::invalid_argument("max_mode exceeds the resolved band");
    std::uniform_real_distribution<double> rate(opts.rate_min, opts.rate_max);
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(n, n);
    if (opts.reversible) {
        std::uniform_real_distribution<double> weight(0.5, 1.5);
        Eigen::VectorXd lam(n);
        for (int i = 0; i < n; ++i) lam(i) = weight(rng);
        lam /= lam.sum();
        // lambda_i Q_ij = s_ij symmetric.
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                const double s = rate(rng) / n;
                Q(i, j) = s / lam(i);
                Q(j, i) = s / lam(j);
            }
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) Q(i, j) = rate(rng);
    }
    for (int i = 0; i < n; ++i) Q(i, i) = -(Q.row(i).sum() - Q(i, i));

    const Eigen::VectorXd lam = stationary_law(Q);
    std::vector<GridField> raw;
    for (int i = 0; i < n; ++i) raw.push_back(n == 1 ? GridField(grid) : random_state(grid, opts.max_mode, rng));
    GridField mean(grid);
    for (int i = 0; i < n; ++i) mean = mean + raw[i] * lam(i);
    double r = 0.0;
    for (auto& s : raw) {
        s = s - mean;
        r = std::max(r, c3_norm(s));
    }
    const double target = opts.radius_fraction * opts.alpha / 4.0;
    if (r > 0.0)
        for (auto& s : raw) s = s * (target / r);
    // Re-centre after scaling so rounding stays far below the centring tolerance.
    GridField m2(grid);
    for (int i = 0; i < n; ++i) m2 = m2 + raw[i] * lam(i);
    for (auto& s : raw) s = s - m2;
    return build_chain(std::move(raw), Q, opts.alpha);
}

PilotChain two_state_chain(GridPtr grid, double q, double delta, double alpha) {
    const bool two_d = grid->dim() == 2;
    auto shape = [&](double s) {
        return GridField::from_function(grid, [=](double x, double y) {
            const double tp = 2.0 * std::numbers::pi;
            return s * delta * (std::sin(tp * x) + std::cos(tp * x) + (two_d ? std::cos(tp * y) : 0.0));
        });
    };
    Eigen::MatrixXd Q(2, 2);
    Q << -q, q, q, -q;
    return build_chain({shape(1.0), shape(-1.0)}, Q, alpha);
}

double two_state_delta(double fraction, double alpha) {
    // c3 norm of sin + cos is sqrt(2) (2 pi)^3 (third derivative dominates).
    const double tp = 2.0 * std::numbers::pi;
    return fraction * alpha / 4.0 / (std::sqrt(2.0) * tp * tp * tp);
}

}  // namespace kda
