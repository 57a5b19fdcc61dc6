#include "kda/chain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "kda/error.hpp"

namespace kda {

namespace {

bool strongly_connected(const Eigen::MatrixXd& Q) {
    const int n = static_cast<int>(Q.rows());
    auto reach_all = [&](bool transpose) {
        std::vector<char> seen(n, 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            for (int j = 0; j < n; ++j) {
                const double q = transpose ? Q(j, i) : Q(i, j);
                if (j != i && q > 0.0 && !seen[j]) {
                    seen[j] = 1;
                    stack.push_back(j);
                }
            }
        }
        return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
    };
    return reach_all(false) && reach_all(true);
}

std::string num(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

}  // namespace

Eigen::VectorXd stationary_law(const Eigen::MatrixXd& rates) {
    // lambda^T Q = 0 with sum 1, one equation replaced by the normalization.
    const Eigen::Index n = rates.rows();
    Eigen::MatrixXd A = rates.transpose();
    A.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    return A.fullPivLu().solve(b);
}

Eigen::MatrixXd PilotChain::resolvent_matrix(double shift) const {
    if (!(shift >= 0.0) || !std::isfinite(shift)) throw std::invalid_argument("resolvent shift must be >= 0");
    if (shift == 0.0) return R0_;
    if (shift == 1.0) return R1_;
    const int n = size();
    Eigen::MatrixXd A = shift * Eigen::MatrixXd::Identity(n, n) - Q_;
    return A.partialPivLu().inverse();
}

PilotChain build_chain(std::vector<GridField> states, const Eigen::MatrixXd& rates, double alpha, double scale) {
    if (states.empty()) throw std::invalid_argument("chain needs at least one state");
    const int n = static_cast<int>(states.size());
    for (const auto& s : states) {
        if (s.empty()) throw std::invalid_argument("empty state field");
        if (!s.grid()->same_as(*states.front().grid())) throw std::invalid_argument("chain states must share a grid");
    }
    if (rates.rows() != n || rates.cols() != n)
        throw AdmissibilityError(Hypothesis::generator, "rate matrix must be " + std::to_string(n) + "x" +
                                                            std::to_string(n));
    if (!rates.allFinite()) throw AdmissibilityError(Hypothesis::generator, "non-finite rate");
    const double qscale = std::max(1.0, rates.cwiseAbs().maxCoeff());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j)
            if (i != j && rates(i, j) < -kRateTolerance)
                throw AdmissibilityError(Hypothesis::generator, "negative off-diagonal rate Q(" + std::to_string(i) +
                                                                    "," + std::to_string(j) + ")");
        if (std::abs(rates.row(i).sum()) > kRateTolerance * qscale)
            throw AdmissibilityError(Hypothesis::generator,
                                     "row " + std::to_string(i) + " sums to " + num(rates.row(i).sum()));
    }
    if (n > 1 && !strongly_connected(rates))
        throw AdmissibilityError(Hypothesis::mixCoupled, "chain is reducible (more than one communicating class)");

    PilotChain c;
    c.Q_ = rates;
    c.alpha_ = alpha;
    c.scale_ = scale;

    c.lambda_ = stationary_law(rates);
    if ((c.lambda_.array() <= 0.0).any())
        throw AdmissibilityError(Hypothesis::mixCoupled, "stationary law has a non-positive entry");

    // Centring.
    const GridPtr g = states.front().grid();
    double centre = 0.0;
    for (std::size_t x = 0; x < g->size(); ++x) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += c.lambda_(i) * states[i][x];
        centre = std::max(centre, std::abs(s));
    }
    if (centre > kCentringTolerance)
        throw AdmissibilityError(Hypothesis::mcentred, "max |sum_i lambda_i n_i| = " + num(centre));

    // Stable ball: fields must be resolved (band-limited) for the C^3 estimate to be meaningful.
    const int band = default_band(*g);
    for (int i = 0; i < n; ++i) {
        const double ex = band_excess(states[i], band);
        if (ex > 1e-9)
            throw AdmissibilityError(Hypothesis::BallR, "state " + std::to_string(i) +
                                                            " has Fourier content above mode " +
                                                            std::to_string(band) + " (relative " + num(ex) + ")");
        c.radius_ = std::max(c.radius_, c3_norm(states[i]));
    }
    if (c.radius_ > alpha / 4.0)
        throw AdmissibilityError(Hypothesis::Rsmall, "R = " + num(c.radius_) + " > alpha/4 = " + num(alpha / 4.0));

    // Reversibility, spectral gap, generator bound.
    c.reversible_ = true;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (std::abs(c.lambda_(i) * rates(i, j) - c.lambda_(j) * rates(j, i)) > kRateTolerance * qscale)
                c.reversible_ = false;
    if (n == 1) {
        c.gap_ = std::numeric_limits<double>::infinity();
    } else {
        Eigen::EigenSolver<Eigen::MatrixXd> es(-rates, false);
        std::vector<double> re;
        for (int i = 0; i < n; ++i) re.push_back(es.eigenvalues()(i).real());
        std::vector<double> mag;
        for (int i = 0; i < n; ++i) mag.push_back(std::abs(es.eigenvalues()(i)));
        const auto zero = std::min_element(mag.begin(), mag.end()) - mag.begin();
        c.gap_ = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i)
            if (i != zero) c.gap_ = std::min(c.gap_, re[i]);
    }
    for (int i = 0; i < n; ++i) c.a_bound_ = std::max(c.a_bound_, rates.row(i).cwiseAbs().sum());

    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd Pi = Eigen::VectorXd::Ones(n) * c.lambda_.transpose();
    c.R1_ = (I - rates).partialPivLu().inverse();
    c.R0_ = (Pi - rates).partialPivLu().inverse() - Pi;

    for (const auto& s : states) c.grads_.push_back(gradient(s));
    c.states_ = std::move(states);
    return c;
}

PilotChain zero_chain(GridPtr grid, double alpha) {
    return build_chain({GridField(std::move(grid))}, Eigen::MatrixXd::Zero(1, 1), alpha);
}

Eigen::MatrixXd resolvent(const PilotChain& chain, double shift, const Eigen::MatrixXd& theta) {
    if (theta.rows() != chain.size()) throw std::invalid_argument("resolvent data must have one row per state");
    if (shift == 0.0) {
        const Eigen::RowVectorXd mean = chain.stationary().transpose() * theta;
        const double scale = std::max(1.0, theta.cwiseAbs().maxCoeff());
        if (mean.size() > 0 && mean.cwiseAbs().maxCoeff() > 1e-10 * scale)
            throw std::invalid_argument("R_0 needs lambda-centred data");
    }
    return chain.resolvent_matrix(shift) * theta;
}

std::vector<GridField> resolvent(const PilotChain& chain, double shift, const std::vector<GridField>& theta) {
    const int n = chain.size();
    if (static_cast<int>(theta.size()) != n) throw std::invalid_argument("one field per state expected");
    const std::size_t G = theta.front().size();
    Eigen::MatrixXd T(n, G);
    for (int i = 0; i < n; ++i)
        for (std::size_t x = 0; x < G; ++x) T(i, x) = theta[i][x];
    const Eigen::MatrixXd R = resolvent(chain, shift, T);
    std::vector<GridField> out;
    for (int i = 0; i < n; ++i) {
        std::vector<double> v(G);
        for (std::size_t x = 0; x < G; ++x) v[x] = R(i, x);
        out.emplace_back(theta[i].grid(), std::move(v));
    }
    return out;
}

std::vector<VectorField> resolvent(const PilotChain& chain, double shift, const std::vector<VectorField>& theta) {
    const int n = chain.size();
    if (static_cast<int>(theta.size()) != n) throw std::invalid_argument("one field per state expected");
    const int d = theta.front().dim();
    std::vector<std::vector<GridField>> comps(n);
    for (int a = 0; a < d; ++a) {
        std::vector<GridField> ta;
        for (int i = 0; i < n; ++i) ta.push_back(theta[i][a]);
        auto ra = resolvent(chain, shift, ta);
        for (int i = 0; i < n; ++i) comps[i].push_back(std::move(ra[i]));
    }
    std::vector<VectorField> out;
    for (auto& c : comps) out.emplace_back(std::move(c));
    return out;
}

Eigen::VectorXd apply_generator(const PilotChain& chain, const Eigen::VectorXd& phi) {
    if (phi.size() != chain.size()) throw std::invalid_argument("one value per state expected");
    return chain.rates() * phi;
}

int PilotPath::state_at(double t) const {
    const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
    return states[it - jump_times.begin()];
}

PilotPath sample_path(const PilotChain& chain, double t_end, Rng& rng) {
    if (!(t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
    const int n = chain.size();
    const auto& lam = chain.stationary();
    std::discrete_distribution<int> init(lam.data(), lam.data() + n);
    PilotPath p;
    p.t_end = t_end;
    int s = init(rng);
    p.states.push_back(s);
    double t = 0.0;
    const auto& Q = chain.rates();
    std::vector<double> w(n);
    for (;;) {
        const double rate = -Q(s, s);
        if (rate <= 0.0) break;
        t += std::exponential_distribution<double>(rate)(rng);
        if (t >= t_end) break;
        for (int j = 0; j < n; ++j) w[j] = j == s ? 0.0 : std::max(0.0, Q(s, j));
        s = std::discrete_distribution<int>(w.begin(), w.end())(rng);
        p.jump_times.push_back(t);
        p.states.push_back(s);
    }
    return p;
}

PilotPath sample_path(const PilotChain& chain, double t_end, std::uint64_t seed) {
    Rng rng(seed);
    PilotPath p = sample_path(chain, t_end, rng);
    p.seed = seed;
    return p;
}

GridField ou_filter_step(const GridField& w, const GridField& m, double dt_micro) {
    if (!(dt_micro >= 0.0)) throw std::invalid_argument("filter step must be >= 0");
    if (dt_micro == 0.0) return w;
    const double e = std::exp(-dt_micro);
    std::vector<double> v(w.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m[i] + e * (w[i] - m[i]);
    return GridField(w.grid(), std::move(v));
}

FilterState filter_weights(const PilotChain& chain, const PilotPath& path) {
    FilterState fs;
    fs.weights = Eigen::VectorXd::Zero(chain.size());
    double t = 0.0;
    for (std::size_t k = 0; k < path.states.size(); ++k) {
        const double t_next = k < path.jump_times.size() ? path.jump_times[k] : path.t_end;
        const double e = std::exp(-(t_next - t));
        fs.weights *= e;
        fs.weights(path.states[k]) += 1.0 - e;
        t = t_next;
    }
    fs.state = path.states.back();
    return fs;
}

FilterState sample_stationary_pair(const PilotChain& chain, double burn_in, Rng& rng) {
    return filter_weights(chain, sample_path(chain, burn_in, rng));
}

double default_burn_in(const PilotChain& chain, double mixing_times) {
    const double gap = chain.spectral_gap();
    return mixing_times * std::max(1.0, std::isfinite(gap) ? 1.0 / gap : 0.0);
}

GridField combine_states(const PilotChain& chain, const Eigen::VectorXd& weights) {
    const std::size_t G = chain.grid()->size();
    std::vector<double> v(G, 0.0);
    for (int i = 0; i < chain.size(); ++i) {
        const double a = weights(i);
        if (a == 0.0) continue;
        const auto& s = chain.state(i);
        for (std::size_t x = 0; x < G; ++x) v[x] += a * s[x];
    }
    return GridField(chain.grid(), std::move(v));
}

}  // namespace kda
