#include <cmath>
#include <numbers>

#include "doctest.h"
#include "kda/fixtures.hpp"
#include "kda/generator.hpp"

using namespace kda;
using std::numbers::pi;

namespace {

constexpr PsiKind kAllPsi[] = {PsiKind::identity, PsiKind::half_square, PsiKind::tanh};

GridField sin1(GridPtr g) {
    return GridField::from_function(g, [](double x, double) { return std::sin(2 * pi * x); });
}
GridField cos1(GridPtr g) {
    return GridField::from_function(g, [](double x, double) { return std::cos(2 * pi * x); });
}

double pairing(const KineticDensity& h, const KineticDensity& g, const VelocityModel& m) {
    double s = 0.0;
    for (int j = 0; j < m.count(); ++j)
        for (std::size_t x = 0; x < h.grid()->size(); ++x) s += m.weights()[j] * h.slice(j)[x] * g.slice(j)[x];
    return s * h.grid()->cell_volume();
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST_CASE("psi library and test-function band check") {
    for (PsiKind k : kAllPsi) CHECK(parse_psi(psi_name(k)) == k);
    CHECK_THROWS_AS(parse_psi("cubic"), std::invalid_argument);
    auto g = make_grid(1, 64);
    CHECK_NOTHROW(make_test_function(cos1(g), PsiKind::tanh));
    auto rough = GridField::from_function(g, [](double x, double) { return std::cos(2 * pi * 20 * x); });
    CHECK_THROWS_AS(make_test_function(rough, PsiKind::identity), std::invalid_argument);

    TestFunction t{cos1(g), PsiKind::tanh};
    for (double u : {-2.0, -0.3, 0.0, 0.7, 3.0}) {
        const double h = 1e-5;
        CHECK(t.d1(u) == doctest::Approx((t.value(u + h) - t.value(u - h)) / (2 * h)).epsilon(1e-8));
        CHECK(t.d2(u) == doctest::Approx((t.d1(u + h) - t.d1(u - h)) / (2 * h)).epsilon(1e-7));
        CHECK(std::abs(t.d2(u)) <= t.sup_d2() + 1e-15);
    }
}

TEST_CASE("phi1 closed forms") {
    auto g = make_grid(1, 64);
    auto m = two_speed_model();
    // Zero pilot and J(f) = 0.
    auto z = zero_chain(g);
    auto rho = GridField::constant(g, 1.0) + cos1(g) * 0.3;
    for (PsiKind k : kAllPsi) {
        CorrectorCalculus calc(z, m, make_test_function(sin1(g), k));
        CHECK(calc.phi1(KineticDensity::local_equilibrium(rho, m), 0) == 0.0);
    }

    // f = M on the two-state chain: phi1 = +- psi'(<1, xi>) <c / (2q), xi'>.
    const double q = 0.6;
    auto c = two_state_chain(g, q, two_state_delta(0.9));
    auto xi = cos1(g) + GridField::constant(g, 0.4);
    auto cf = chi(c.state(0), m)[0];
    auto M = KineticDensity::local_equilibrium(GridField::constant(g, 1.0), m);
    for (PsiKind k : kAllPsi) {
        CorrectorCalculus calc(c, m, make_test_function(xi, k));
        const double expect = calc.test().d1(0.4) * l2_inner(cf * (1 / (2 * q)), gradient(xi)[0]);
        CHECK(rel(calc.phi1(M, 0), expect) < 1e-12);
        CHECK(rel(calc.phi1(M, 1), -expect) < 1e-12);
    }
}

TEST_CASE("Frechet derivatives match central differences") {
    auto g = make_grid(1, 32);
    auto m = two_speed_model();
    Rng rng(12);
    auto c = random_chain(g, 4, rng);
    auto xi = random_smooth_field(g, rng, 0.2, 1.0);
    for (PsiKind k : kAllPsi) {
        CorrectorCalculus calc(c, m, make_test_function(xi, k));
        for (int trial = 0; trial < 5; ++trial) {
            auto f = random_kinetic_sample(g, m, rng);
            auto h = random_kinetic_sample(g, m, rng);
            const int i = trial % c.size();
            const double s = 1e-5;
            double fd1 = (calc.phi1(f + h * s, i) - calc.phi1(f + h * -s, i)) / (2 * s);
            double fd0 = (calc.phi(f + h * s) - calc.phi(f + h * -s)) / (2 * s);
            CHECK(std::abs(fd1 - pairing(h, calc.phi1_derivative(f, i), m)) <= 1e-6 * std::max(1.0, std::abs(fd1)));
            CHECK(std::abs(fd0 - pairing(h, calc.phi_derivative(f), m)) <= 1e-6 * std::max(1.0, std::abs(fd0)));
        }
    }
}

TEST_CASE("phi1 bound") {
    auto g = make_grid(1, 64);
    auto m = two_speed_model();
    Rng rng(13);
    auto c = random_chain(g, 5, rng);
    auto xi = random_smooth_field(g, rng, 0.0, 1.0);
    for (PsiKind k : kAllPsi) {
        CorrectorCalculus calc(c, m, make_test_function(xi, k));
        for (int s = 0; s < 20; ++s) {
            auto f = random_kinetic_sample(g, m, rng);
            const double b = calc.phi1_bound(f);
            if (k == PsiKind::half_square) {
                CHECK(std::isinf(b));
                continue;
            }
            for (int i = 0; i < c.size(); ++i) CHECK(std::abs(calc.phi1(f, i)) <= b);
        }
    }
}

TEST_CASE("mixing rate of the two-state chain") {
    auto g = make_grid(1, 16);
    const double q = 0.9;
    auto c = two_state_chain(g, q, 1e-4);
    // |P_t(i, .) - lambda|_1 = e^{-2 q t}.
    CHECK(mixing_rate_l1(c) == doctest::Approx(1 / (2 * q)).epsilon(1e-5));
    CHECK(mixing_rate_l1(zero_chain(g)) == 0.0);
}

TEST_CASE("Poisson equation for the first corrector") {
    auto g = make_grid(1, 64);
    auto m = two_speed_model();
    Rng rng(14);
    auto two = two_state_chain(g, 1.0, two_state_delta(0.9));
    auto five = random_chain(g, 5, rng);
    auto xi = cos1(g) + sin1(g) * 0.5;
    for (const PilotChain* c : {&two, &five})
        for (PsiKind k : kAllPsi) {
            CorrectorCalculus calc(*c, m, make_test_function(xi, k));
            auto r = verify_poisson_phi1(calc, m, 100, 77);
            CHECK(r.max_residual <= 1e-8);
            CHECK(r.max_scale > 1e-3);
            // phi depends on f only through rho, so L_sharp phi vanishes.
            CHECK(r.max_sharp_phi <= 1e-12);
        }

    // Zero pilot with J(f) = 0: both terms vanish.
    auto z = zero_chain(g);
    CorrectorCalculus cz(z, m, make_test_function(xi, PsiKind::tanh));
    auto eq = KineticDensity::local_equilibrium(GridField::constant(g, 1.0) + cos1(g) * 0.2, m);
    CHECK(std::abs(cz.L_flat_phi(eq)) < 1e-15);
    CHECK(std::abs(cz.L_sharp_phi1(eq, 0)) < 1e-15);

    // Identity psi: every term is linear in f.
    CorrectorCalculus ci(five, m, make_test_function(xi, PsiKind::identity));
    auto f = random_kinetic_sample(g, m, rng);
    CHECK(rel(ci.L_flat_phi(f * 2.0), 2 * ci.L_flat_phi(f)) < 1e-12);
    CHECK(rel(ci.L_sharp_phi1(f * 2.0, 2), 2 * ci.L_sharp_phi1(f, 2)) < 1e-12);
}

TEST_CASE("limit generator") {
    auto g = make_grid(1, 64);
    auto m = two_speed_model();
    Rng rng(15);
    auto xi = random_smooth_field(g, rng, 0.0, 1.0);
    auto rho = random_smooth_field(g, rng, 1.0, 0.5);

    // Zero pilot, identity: pure diffusion <rho, div(K(M) grad xi)>.
    auto z = zero_chain(g);
    CorrectorCalculus cz(z, m, make_test_function(xi, PsiKind::identity));
    CHECK(rel(cz.limit_generator(rho).total(), l2_inner(rho, divergence(gradient(xi)))) < 1e-12);

    for (bool reversible : {true, false}) {
        RandomChainOptions o;
        o.reversible = reversible;
        auto c = random_chain(g, 5, rng, o);
        auto coeffs = compute_limit_coefficients(c, m);
        CorrectorCalculus id(c, m, make_test_function(xi, PsiKind::identity));
        CorrectorCalculus hs(c, m, make_test_function(xi, PsiKind::half_square));
        CHECK(std::abs(id.limit_generator(rho).total() - b_from_coefficients(rho, xi, coeffs)) < 1e-10);
        const double quad = quadratic_form(coeffs, gradient(xi) * rho);
        CHECK(std::abs(hs.limit_generator(rho).second_order - quad) < 1e-10);
        CHECK(rel(hs.limit_generator(rho).second_order, quad) < 1e-9);

        // Linear in rho for identity; quadratic second-order part for u^2/2.
        auto rho2 = random_smooth_field(g, rng, 0.5, 0.3);
        CHECK(std::abs(id.limit_generator(rho * 2.0 + rho2).total() -
                       (2 * id.limit_generator(rho).total() + id.limit_generator(rho2).total())) < 1e-10);
        CHECK(rel(hs.limit_generator(rho * 3.0).second_order, 9 * hs.limit_generator(rho).second_order) < 1e-12);
    }

    // Two dimensions, non-symmetric K* through a non-reversible chain.
    auto g2 = make_grid(2, 16);
    auto c2 = random_chain(g2, 3, rng);
    auto m2 = circle_model(4, 1.0);
    auto coeffs2 = compute_limit_coefficients(c2, m2);
    auto xi2 = random_smooth_field(g2, rng, 0.0, 1.0, 2);
    auto rho2 = random_smooth_field(g2, rng, 1.0, 0.5, 2);
    CorrectorCalculus id2(c2, m2, make_test_function(xi2, PsiKind::identity));
    CHECK(std::abs(id2.limit_generator(rho2).total() - b_from_coefficients(rho2, xi2, coeffs2)) < 1e-10);
}

TEST_CASE("stationarity identities, centering and solvability") {
    auto g = make_grid(1, 32);
    auto m = two_speed_model();
    auto rho = GridField::constant(g, 1.0) + cos1(g) * 0.5;
    auto xi = cos1(g) + sin1(g);

    // Zero pilot: exact zeros.
    auto z = zero_chain(g);
    auto rz = verify_stationarity_identities(z, m, rho, xi, 50, default_burn_in(z, 20), 1);
    CHECK(rz.jd1.estimate == 0.0);
    CHECK(rz.jd1.exact == 0.0);
    CHECK(rz.jjd2.pass);
    CorrectorCalculus cz(z, m, make_test_function(xi, PsiKind::identity));
    auto cen0 = verify_centering(cz, z, m, rho, 50, default_burn_in(z, 20), 1);
    CHECK(cen0.estimate == 0.0);
    CHECK(cen0.pass);

    Rng rng(16);
    auto c = random_chain(g, 4, rng);
    const double burn = default_burn_in(c, 20);
    auto r = verify_stationarity_identities(c, m, rho, xi, 4000, burn, 2);
    CHECK(r.jd1.pass);
    CHECK(r.jjd2.pass);
    // A longer burn-in leaves the estimates within Monte Carlo error.
    auto r2 = verify_stationarity_identities(c, m, rho, xi, 4000, 2 * burn, 2);
    const double se = std::hypot(r.jjd2.std_error, r2.jjd2.std_error);
    CHECK(std::abs(r.jjd2.estimate - r2.jjd2.estimate) <= 3 * se);

    CorrectorCalculus calc(c, m, make_test_function(xi, PsiKind::identity));
    auto cen = verify_centering(calc, c, m, rho, 4000, burn, 3);
    CHECK(cen.pass);
    auto cen2 = verify_centering(calc, c, m, rho * 2.0, 4000, burn, 3);
    CHECK(rel(cen2.estimate, 2 * cen.estimate) < 1e-10);
    CHECK(cen2.z == doctest::Approx(cen.z).epsilon(1e-10));

    CorrectorCalculus tanh_calc(c, m, make_test_function(xi, PsiKind::tanh));
    CHECK(verify_solvability(tanh_calc, c, m, rho, 4000, burn, 4).pass);
    CHECK_THROWS_AS(verify_centering(calc, c, m, rho, 1, burn, 3), std::invalid_argument);
}
