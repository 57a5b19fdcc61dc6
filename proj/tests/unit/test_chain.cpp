#include <cmath>
#include <numbers>

#include "doctest.h"
#include "kda/chain.hpp"
#include "kda/error.hpp"
#include "kda/fixtures.hpp"

using namespace kda;
using std::numbers::pi;

namespace {

GridField wave(GridPtr g, double amp) {
    return GridField::from_function(g, [amp](double x, double) { return amp * std::sin(2 * pi * x); });
}

Eigen::MatrixXd sym2(double q) {
    Eigen::MatrixXd Q(2, 2);
    Q << -q, q, q, -q;
    return Q;
}

Hypothesis rejected_with(std::vector<GridField> s, const Eigen::MatrixXd& Q, double alpha = 1.0) {
    try {
        build_chain(std::move(s), Q, alpha);
    } catch (const AdmissibilityError& e) {
        return e.hypothesis();
    }
    FAIL("chain accepted");
    return Hypothesis::vdv;
}

}  // namespace

TEST_CASE("symmetric two-state chain: law, gap, resolvents, generator") {
    auto g = make_grid(1, 64);
    const double q = 0.7, a = 0.0008;
    auto c = build_chain({wave(g, a), wave(g, -a)}, sym2(q), 1.0);
    CHECK(c.stationary()(0) == doctest::Approx(0.5));
    CHECK(c.is_reversible());
    CHECK(c.spectral_gap() == doctest::Approx(2 * q));

    Eigen::MatrixXd theta(2, 1);
    theta << 1.3, -1.3;
    for (double alpha : {0.1, 1.0, 10.0}) {
        auto r = resolvent(c, alpha, theta);
        CHECK(r(0, 0) == doctest::Approx(1.3 / (alpha + 2 * q)).epsilon(1e-14));
        CHECK(r(1, 0) == doctest::Approx(-1.3 / (alpha + 2 * q)).epsilon(1e-14));
    }
    auto r0 = resolvent(c, 0.0, theta);
    CHECK(r0(0, 0) == doctest::Approx(1.3 / (2 * q)).epsilon(1e-14));

    Eigen::MatrixXd cst = Eigen::MatrixXd::Constant(2, 1, 2.0);
    CHECK(resolvent(c, 4.0, cst)(1, 0) == doctest::Approx(0.5));

    Eigen::VectorXd phi(2);
    phi << 1.3, -1.3;
    auto qphi = apply_generator(c, phi);
    CHECK(qphi(0) == doctest::Approx(-2 * q * 1.3));
    CHECK(qphi(1) == doctest::Approx(2 * q * 1.3));
    CHECK(apply_generator(c, Eigen::VectorXd::Constant(2, 5.0)).cwiseAbs().maxCoeff() < 1e-15);

    // Field-valued resolvent matches the scalar closed form pointwise.
    auto rf = resolvent(c, 1.0, c.states());
    CHECK((rf[0] - c.state(0) * (1.0 / (1 + 2 * q))).max_abs() < 1e-16);
}

TEST_CASE("resolvent algebra on random chains") {
    auto g = make_grid(1, 16);
    Rng rng(2024);
    std::normal_distribution<double> nd;
    for (int trial = 0; trial < 30; ++trial) {
        const int n = 2 + trial % 9;
        RandomChainOptions o;
        o.reversible = trial % 2 == 0;
        auto c = random_chain(g, n, rng, o);
        // Every two-state chain is reversible.
        CHECK(c.is_reversible() == (o.reversible || n == 2));
        const auto& lam = c.stationary();
        CHECK((lam.transpose() * c.rates()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(lam.sum() == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(lam.minCoeff() > 0.0);
        CHECK(c.radius() <= c.alpha_bound() / 4);

        Eigen::MatrixXd theta(n, 3);
        for (int i = 0; i < n; ++i)
            for (int k = 0; k < 3; ++k) theta(i, k) = nd(rng);
        Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
        for (double alpha : {0.1, 1.0, 10.0})
            CHECK(((alpha * I - c.rates()) * resolvent(c, alpha, theta) - theta).cwiseAbs().maxCoeff() < 1e-12);

        // Centre theta: R0 R1 = R0 - R1, and R0 output is centred.
        Eigen::MatrixXd ct = theta.rowwise() - lam.transpose() * theta;
        auto r0 = resolvent(c, 0.0, ct);
        auto r1 = resolvent(c, 1.0, ct);
        CHECK((resolvent(c, 0.0, r1) - (r0 - r1)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((-c.rates() * r0 - ct).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((lam.transpose() * r0).cwiseAbs().maxCoeff() < 1e-12);

        Eigen::VectorXd phi = Eigen::VectorXd::NullaryExpr(n, [&] { return nd(rng); });
        CHECK(std::abs(lam.dot(apply_generator(c, phi))) < 1e-12);
    }
}

TEST_CASE("R0 rejects non-centred data") {
    auto g = make_grid(1, 16);
    auto c = build_chain({wave(g, 0.001), wave(g, -0.001)}, sym2(1.0), 1.0);
    Eigen::MatrixXd theta = Eigen::MatrixXd::Constant(2, 1, 1.0);
    CHECK_THROWS_AS(resolvent(c, 0.0, theta), std::invalid_argument);
}

TEST_CASE("admissibility failures name the hypothesis") {
    auto g = make_grid(1, 64);
    auto n = wave(g, 0.003);
    CHECK(rejected_with({n, n}, sym2(1.0)) == Hypothesis::mcentred);
    CHECK(rejected_with({wave(g, 0.2), wave(g, -0.2)}, sym2(1.0)) == Hypothesis::Rsmall);
    Eigen::MatrixXd red(2, 2);
    red << 0, 0, 0, 0;
    CHECK(rejected_with({n, -n}, red) == Hypothesis::mixCoupled);
    Eigen::MatrixXd bad(2, 2);
    bad << -1, 1, 1, -0.5;
    CHECK(rejected_with({n, -n}, bad) == Hypothesis::generator);
    Eigen::MatrixXd neg(2, 2);
    neg << 1, -1, 1, -1;
    CHECK(rejected_with({n, -n}, neg) == Hypothesis::generator);
    auto rough = GridField::from_function(g, [](double x, double) { return 1e-7 * std::sin(2 * pi * 30 * x); });
    CHECK(rejected_with({rough, -rough}, sym2(1.0)) == Hypothesis::BallR);
}

TEST_CASE("reversibility and gap of special chains") {
    auto g = make_grid(1, 16);
    auto z = zero_chain(g);
    CHECK(z.is_reversible());
    CHECK(std::isinf(z.spectral_gap()));
    auto p = sample_path(z, 100.0, 5);
    CHECK(p.jump_times.empty());
    CHECK(p.states.size() == 1);

    Eigen::MatrixXd Q(3, 3);
    Q << -1, 1, 0, 0, -1, 1, 1, 0, -1;
    auto c = build_chain({GridField(g), GridField(g), GridField(g)}, Q, 1.0);
    CHECK_FALSE(c.is_reversible());
    CHECK(c.stationary()(2) == doctest::Approx(1.0 / 3));
    CHECK(c.spectral_gap() == doctest::Approx(1.5));
}

TEST_CASE("exponential holding times and ergodic occupation") {
    auto g = make_grid(1, 16);
    const double q = 1.7;
    auto c = two_state_chain(g, q, 1e-4);
    // Holding times of a long path.
    auto p = sample_path(c, 70000.0, 99);
    double prev = 0.0, s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (double t : p.jump_times) {
        double h = t - prev;
        if (prev > 0.0) {
            s += h;
            s2 += h * h;
            ++n;
        }
        prev = t;
    }
    REQUIRE(n > 100000);
    double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(mean - 1 / q) < 3 * se);

    // Occupation fractions on a non-symmetric chain.
    Eigen::MatrixXd Q(3, 3);
    Q << -1.0, 0.6, 0.4, 0.2, -0.5, 0.3, 1.5, 0.5, -2.0;
    auto c3 = build_chain({GridField(g), GridField(g), GridField(g)}, Q, 1.0);
    // Batch means over independent paths give a standard error.
    const int batches = 200;
    const double T = 200.0;
    Eigen::MatrixXd occ(batches, 3);
    for (int b = 0; b < batches; ++b) {
        auto path = sample_path(c3, T, derive_seed(7, b));
        Eigen::Vector3d o = Eigen::Vector3d::Zero();
        double t0 = 0.0;
        for (std::size_t k = 0; k <= path.jump_times.size(); ++k) {
            double t1 = k < path.jump_times.size() ? path.jump_times[k] : T;
            o(path.states[k]) += t1 - t0;
            t0 = t1;
        }
        occ.row(b) = o.transpose() / T;
    }
    for (int i = 0; i < 3; ++i) {
        double m = occ.col(i).mean();
        double var = (occ.col(i).array() - m).square().sum() / (batches - 1);
        CHECK(std::abs(m - c3.stationary()(i)) < 3 * std::sqrt(var / batches));
    }
}

TEST_CASE("stationary start: initial state chi-square") {
    auto g = make_grid(1, 16);
    Eigen::MatrixXd Q(4, 4);
    Q << -1.0, 0.5, 0.3, 0.2, 0.1, -0.4, 0.2, 0.1, 0.6, 0.6, -1.5, 0.3, 0.2, 0.2, 0.2, -0.6;
    std::vector<GridField> s(4, GridField(g));
    auto c = build_chain(s, Q, 1.0);
    const int n = 100000;
    std::vector<double> count(4, 0.0);
    for (int k = 0; k < n; ++k) ++count[sample_path(c, 1e-9, derive_seed(3, k)).states[0]];
    double chi2 = 0.0;
    for (int i = 0; i < 4; ++i) {
        double e = n * c.stationary()(i);
        chi2 += (count[i] - e) * (count[i] - e) / e;
    }
    // Upper 0.001 quantile of chi-square with 3 degrees of freedom.
    CHECK(chi2 < 16.266);
}

TEST_CASE("paths are reproducible and cadlag") {
    auto g = make_grid(1, 16);
    Rng rng(5);
    auto c = random_chain(g, 5, rng);
    auto a = sample_path(c, 50.0, 1234), b = sample_path(c, 50.0, 1234);
    CHECK(a.jump_times == b.jump_times);
    CHECK(a.states == b.states);
    for (std::size_t k = 1; k < a.jump_times.size(); ++k) CHECK(a.jump_times[k] > a.jump_times[k - 1]);
    for (std::size_t k = 1; k < a.states.size(); ++k) CHECK(a.states[k] != a.states[k - 1]);
    if (!a.jump_times.empty()) {
        CHECK(a.state_at(a.jump_times[0]) == a.states[1]);
        CHECK(a.state_at(0.5 * a.jump_times[0]) == a.states[0]);
    }
}

TEST_CASE("exponential filter") {
    auto g = make_grid(1, 16);
    auto n = wave(g, 1.0);
    auto w0 = GridField(g);
    CHECK((ou_filter_step(w0, n, std::log(2.0)) - n * 0.5).max_abs() < 1e-15);
    CHECK((ou_filter_step(n, w0, 0.0) - n).max_abs() == 0.0);
    CHECK((ou_filter_step(w0, n, 1e6) - n).max_abs() < 1e-15);
    auto w = GridField::from_function(g, [](double x, double) { return std::cos(2 * pi * x); });
    auto two = ou_filter_step(ou_filter_step(w, n, 0.3), n, 0.45);
    CHECK((two - ou_filter_step(w, n, 0.75)).max_abs() < 1e-12);
}

TEST_CASE("filter weights reproduce the stepped filter along a path") {
    auto g = make_grid(1, 16);
    Rng rng(8);
    auto c = random_chain(g, 4, rng);
    auto p = sample_path(c, 12.0, 77);
    auto fw = filter_weights(c, p);
    CHECK(fw.weights.sum() == doctest::Approx(1 - std::exp(-12.0)).epsilon(1e-12));
    GridField w(g);
    double t = 0.0;
    for (std::size_t k = 0; k <= p.jump_times.size(); ++k) {
        double t1 = k < p.jump_times.size() ? p.jump_times[k] : p.t_end;
        w = ou_filter_step(w, c.state(p.states[k]), t1 - t);
        t = t1;
    }
    CHECK((combine_states(c, fw.weights) - w).max_abs() < 1e-14);
    CHECK(fw.state == p.states.back());
}

TEST_CASE("time average of the filtered gradient vanishes for a centred chain") {
    auto g = make_grid(1, 16);
    auto c = two_state_chain(g, 1.0, two_state_delta(0.9));
    Rng rng(4);
    const int n = 4000;
    double s = 0.0, s2 = 0.0;
    for (int k = 0; k < n; ++k) {
        auto pair = sample_stationary_pair(c, default_burn_in(c, 20), rng);
        double v = gradient(combine_states(c, pair.weights))[0][0];
        s += v;
        s2 += v * v;
    }
    double mean = s / n, se = std::sqrt((s2 / n - mean * mean) / n);
    CHECK(std::abs(mean) < 3 * se);
}
