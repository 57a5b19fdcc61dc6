#include <cmath>
#include <numbers>

#include "doctest.h"
#include "kda/fixtures.hpp"
#include "kda/spde.hpp"

using namespace kda;
using std::numbers::pi;

namespace {

GridField cos_mode(GridPtr g, int k) {
    return GridField::from_function(g, [k](double x, double) { return std::cos(2 * pi * k * x); });
}

SpdeOptions options(double T, double dt, int mesh, std::vector<GridField> xi = {}) {
    SpdeOptions o;
    o.t_end = T;
    o.dt = dt;
    o.mesh_intervals = mesh;
    o.test_functions = std::move(xi);
    return o;
}

// Variable-coefficient equation used for the spatial-order and conservation checks.
DiffusionData variable_equation(GridPtr g, double noise_amp) {
    DiffusionData d;
    d.grid = g;
    d.K = {GridField::from_function(g, [](double x, double) { return 1 + 0.5 * std::sin(2 * pi * x); })};
    d.Psi = VectorField({GridField::from_function(g, [](double x, double) { return 0.3 * std::cos(2 * pi * x); })});
    if (noise_amp > 0.0)
        d.noise = {VectorField({cos_mode(g, 1) * noise_amp}),
                   VectorField({GridField::from_function(g, [=](double x, double) {
                       return 0.5 * noise_amp * std::sin(4 * pi * x);
                   })})};
    return d;
}

}  // namespace

TEST_CASE("plain heat equation: exact discrete symbol and analytic decay") {
    auto g = make_grid(1, 64);
    const double h = g->spacing();
    auto data = constant_diffusion(g, {1, 0, 0, 0});
    auto rho0 = GridField::constant(g, 1.0) + cos_mode(g, 1) + cos_mode(g, 5) * 0.3;
    {
        const double dt = 1e-3;
        SpdeStepper st(data, dt);
        auto tr = simulate_spde(st, rho0, options(0.05, dt, 1), NoiseSource{});
        const int n = 50;
        auto sym = [&](int k) { return std::pow(1 / (1 + dt * 4 / (h * h) * std::pow(std::sin(pi * k * h), 2)), n); };
        auto expect = GridField::constant(g, 1.0) + cos_mode(g, 1) * sym(1) + cos_mode(g, 5) * (0.3 * sym(5));
        CHECK((tr.snapshots.back().rho - expect).max_abs() < 1e-12);
    }
    {
        const double dt = 1e-4;
        SpdeStepper st(data, dt);
        auto tr = simulate_spde(st, GridField::constant(g, 1.0) + cos_mode(g, 1), options(0.1, dt, 1), NoiseSource{});
        auto expect = GridField::constant(g, 1.0) + cos_mode(g, 1) * std::exp(-4 * pi * pi * 0.1);
        CHECK((tr.snapshots.back().rho - expect).max_abs() < 1e-3);
    }
}

TEST_CASE("anisotropic 2D diffusion decays at the analytic rate") {
    auto g = make_grid(2, 32);
    std::array<double, 4> K{1.0, 0.3, 0.3, 0.5};
    auto data = constant_diffusion(g, K);
    const double dt = 1e-4, T = 0.05;
    SpdeStepper st(data, dt);
    auto mode = GridField::from_function(g, [](double x, double y) { return std::cos(2 * pi * (x + y)); });
    auto tr = simulate_spde(st, GridField::constant(g, 1.0) + mode, options(T, dt, 1), NoiseSource{});
    const double rate = 4 * pi * pi * (K[0] + K[1] + K[2] + K[3]);
    auto expect = GridField::constant(g, 1.0) + mode * std::exp(-rate * T);
    CHECK((tr.snapshots.back().rho - expect).max_abs() < 1e-3);
    CHECK(tr.max_mass_drift < 1e-12);
}

TEST_CASE("non-symmetric diffusion tensor: antisymmetric part is a conservative flux") {
    auto g = make_grid(2, 16);
    std::array<double, 4> K{0.6, 0.2, -0.1, 0.5};
    SpdeStepper st(constant_diffusion(g, K), 1e-3);
    auto rho = GridField::from_function(g, [](double x, double y) {
        return 1 + 0.5 * std::cos(2 * pi * x) * std::sin(4 * pi * y);
    });
    auto tr = simulate_spde(st, rho, options(0.1, 1e-3, 2), NoiseSource{});
    CHECK(tr.max_mass_drift < 1e-12);
    // A constant antisymmetric part has zero divergence, so the solution matches the symmetric tensor.
    SpdeStepper sym(constant_diffusion(g, {0.6, 0.05, 0.05, 0.5}), 1e-3);
    auto ts = simulate_spde(sym, rho, options(0.1, 1e-3, 2), NoiseSource{});
    CHECK((tr.snapshots.back().rho - ts.snapshots.back().rho).max_abs() < 1e-12);
}

TEST_CASE("zero density stays zero and mass is conserved over many noisy steps") {
    auto g = make_grid(1, 32);
    SpdeStepper st(variable_equation(g, 0.3), 1e-4);
    auto z = simulate_spde(st, GridField(g), options(0.01, 1e-4, 1), 3);
    CHECK(z.snapshots.back().rho.max_abs() == 0.0);

    auto rho = GridField::constant(g, 1.0) + cos_mode(g, 2) * 0.4;
    auto tr = simulate_spde(st, rho, options(1.0, 1e-4, 4), 17);
    CHECK(tr.steps == 10000);
    CHECK(tr.max_mass_drift <= 1e-10);
    CHECK(std::isfinite(tr.max_h1));
}

TEST_CASE("limit-equation ensembles: reproducibility, zero-noise limit, growing variance") {
    auto g = make_grid(1, 64);
    auto m = two_speed_model();
    auto chain = two_state_chain(g, 1.0, two_state_delta(0.9));
    auto c = compute_limit_coefficients(chain, m);
    auto rho = GridField::constant(g, 1.0) + cos_mode(g, 1) * 0.5;
    std::vector<GridField> xi{cos_mode(g, 1), GridField::from_function(g, [](double x, double) {
                                  return std::sin(2 * pi * x);
                              })};
    auto o = options(0.2, 1e-3, 4, xi);

    auto a = simulate_spde(rho, c, o, 5), b = simulate_spde(rho, c, o, 6), a2 = simulate_spde(rho, c, o, 5);
    CHECK(a.snapshots[0].observables == b.snapshots[0].observables);
    CHECK(a.snapshots.back().observables == a2.snapshots.back().observables);
    CHECK(a.snapshots.back().observables != b.snapshots.back().observables);

    // Zero noise reproduces the mean equation.
    SpdeStepper st(limit_equation(c), o.dt);
    auto quiet = simulate_spde(st, rho, o, [](std::size_t, std::span<double> db) {
        for (double& x : db) x = 0.0;
    });
    auto mean = solve_deterministic(rho, DeterministicMode::mean, c, o);
    CHECK((quiet.snapshots.back().rho - mean.snapshots.back().rho).max_abs() < 1e-8);
    CHECK(mean.max_mass_drift <= 1e-12);

    // Variance of <rho_t, xi> over 200 paths: zero at t = 0, positive afterwards.
    std::vector<std::vector<double>> obs(o.mesh_intervals + 1);
    for (int p = 0; p < 200; ++p) {
        auto tr = simulate_spde(st, rho, o, derive_seed(99, p));
        for (int t = 0; t <= o.mesh_intervals; ++t) obs[t].push_back(tr.snapshots[t].observables[1]);
    }
    auto var = [](const std::vector<double>& v) {
        double m = 0, s = 0;
        for (double x : v) m += x;
        m /= v.size();
        for (double x : v) s += (x - m) * (x - m);
        return s / (v.size() - 1);
    };
    CHECK(var(obs[0]) == 0.0);
    for (int t = 1; t <= o.mesh_intervals; ++t) CHECK(var(obs[t]) > 0.0);
}

TEST_CASE("mean equation with zero-pilot coefficients equals the plain equation") {
    auto g = make_grid(1, 32);
    auto c = compute_limit_coefficients(zero_chain(g), two_speed_model());
    auto rho = GridField::constant(g, 1.0) + cos_mode(g, 1);
    auto o = options(0.1, 1e-3, 2);
    auto a = solve_deterministic(rho, DeterministicMode::mean, c, o);
    auto b = solve_deterministic(rho, DeterministicMode::plain, c, o);
    CHECK((a.snapshots.back().rho - b.snapshots.back().rho).max_abs() == 0.0);
    CHECK(SpdeStepper(limit_equation(c), 1e-3).noise_rank() == 0);
}

TEST_CASE("weak first order in time with coupled Brownian increments") {
    auto g = make_grid(1, 32);
    auto data = variable_equation(g, 0.4);
    auto rho = GridField::constant(g, 1.0) + cos_mode(g, 1) * 0.5;
    auto xi = GridField::from_function(g, [](double x, double) { return std::sin(2 * pi * x); });
    const double T = 0.05, dt = 0.01;
    const int paths = 400;
    std::vector<double> dts{dt, dt / 2, dt / 4};
    std::vector<std::unique_ptr<SpdeStepper>> st;
    for (double h : dts) st.push_back(std::make_unique<SpdeStepper>(data, h));
    std::vector<double> mean(3, 0.0);
    const int fine = static_cast<int>(std::llround(T / dts[2]));
    for (int p = 0; p < paths; ++p) {
        Rng rng(derive_seed(2025, p));
        std::normal_distribution<double> nd(0.0, std::sqrt(dts[2]));
        std::vector<std::array<double, 2>> inc(fine);
        for (auto& v : inc) v = {nd(rng), nd(rng)};
        for (int lvl = 0; lvl < 3; ++lvl) {
            const int group = 1 << (2 - lvl);
            auto o = options(T, dts[lvl], 1, {xi});
            auto tr = simulate_spde(*st[lvl], rho, o, [&](std::size_t n, std::span<double> db) {
                db[0] = db[1] = 0.0;
                for (int j = 0; j < group; ++j) {
                    db[0] += inc[n * group + j][0];
                    db[1] += inc[n * group + j][1];
                }
            });
            mean[lvl] += tr.snapshots.back().observables[0] / paths;
        }
    }
    double ratio = (mean[0] - mean[1]) / (mean[1] - mean[2]);
    CHECK(ratio == doctest::Approx(2.0).epsilon(0.35));
}

TEST_CASE("second order in space for variable coefficients") {
    const double T = 0.05, dt = 2.5e-4;
    std::vector<GridField> sol;
    for (int n : {32, 64, 128}) {
        auto g = make_grid(1, n);
        SpdeStepper st(variable_equation(g, 0.0), dt);
        auto rho = GridField::constant(g, 1.0) + cos_mode(g, 1) * 0.5 + cos_mode(g, 2) * 0.2;
        sol.push_back(simulate_spde(st, rho, options(T, dt, 1), NoiseSource{}).snapshots.back().rho);
    }
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t i = 0; i < 32; ++i) {
        e1 = std::max(e1, std::abs(sol[0][i] - sol[1][2 * i]));
        e2 = std::max(e2, std::abs(sol[1][2 * i] - sol[2][4 * i]));
    }
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("drift guard and mesh errors") {
    auto g = make_grid(1, 32);
    auto d = variable_equation(g, 0.0);
    d.Psi = VectorField({GridField::constant(g, 100.0)});
    CHECK_THROWS_AS(SpdeStepper(d, 1e-3), std::invalid_argument);
    SpdeStepper ok(variable_equation(g, 0.0), 1e-3);
    CHECK_THROWS_AS(simulate_spde(ok, GridField::constant(g, 1.0), options(0.0105, 1e-3, 1), NoiseSource{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(simulate_spde(ok, GridField::constant(g, 1.0), options(0.01, 1e-3, 3), NoiseSource{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(simulate_spde(ok, GridField::constant(make_grid(1, 16), 1.0), options(0.01, 1e-3, 1),
                                  NoiseSource{}),
                    std::invalid_argument);
}
