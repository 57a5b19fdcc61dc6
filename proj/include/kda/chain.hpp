#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "kda/grid.hpp"
#include "kda/rng.hpp"

namespace kda {

// Finite-state continuous-time Markov chain whose states are smooth fields.
// Immutable after build_chain; resolvent matrices for alpha = 0 and 1 are cached.
class PilotChain {
public:
    int size() const noexcept { return static_cast<int>(states_.size()); }
    const std::vector<GridField>& states() const noexcept { return states_; }
    const GridField& state(int i) const { return states_[i]; }
    const GridPtr& grid() const { return states_.front().grid(); }
    const Eigen::MatrixXd& rates() const noexcept { return Q_; }
    const Eigen::VectorXd& stationary() const noexcept { return lambda_; }
    double radius() const noexcept { return radius_; }
    double alpha_bound() const noexcept { return alpha_; }
    double spectral_gap() const noexcept { return gap_; }
    bool is_reversible() const noexcept { return reversible_; }
    // max_i sum_j |Q_ij|: the constant that bounds the generator action.
    double generator_bound() const noexcept { return a_bound_; }
    // Uniform factor applied to the states by the config layer (1 if none).
    double applied_scale() const noexcept { return scale_; }
    // Precomputed gradients of the states.
    const std::vector<VectorField>& state_gradients() const noexcept { return grads_; }

    // R_shift = (shift I - Q)^{-1} for shift > 0; for shift = 0 the group
    // inverse (Pi - Q)^{-1} - Pi, Pi = 1 lambda^T, which solves -Qx = theta
    // with lambda.x = 0 for centred theta. Shifts 0 and 1 are cached.
    Eigen::MatrixXd resolvent_matrix(double shift) const;
    const Eigen::MatrixXd& R0() const noexcept { return R0_; }
    const Eigen::MatrixXd& R1() const noexcept { return R1_; }

private:
    friend PilotChain build_chain(std::vector<GridField>, const Eigen::MatrixXd&, double, double);
    std::vector<GridField> states_;
    std::vector<VectorField> grads_;
    Eigen::MatrixXd Q_;
    Eigen::VectorXd lambda_;
    double radius_ = 0.0;
    double alpha_ = 1.0;
    double gap_ = 0.0;
    bool reversible_ = false;
    double a_bound_ = 0.0;
    double scale_ = 1.0;
    Eigen::MatrixXd R0_, R1_;
};

inline constexpr double kRateTolerance = 1e-12;
inline constexpr double kCentringTolerance = 1e-12;

// Solution of lambda^T Q = 0, sum lambda = 1 (no admissibility checks).
Eigen::VectorXd stationary_law(const Eigen::MatrixXd& rates);

// Validates every admissibility hypothesis; throws AdmissibilityError naming
// the first violated one. `scale` is recorded only (states are used as given).
PilotChain build_chain(std::vector<GridField> states, const Eigen::MatrixXd& rates, double alpha,
                       double scale = 1.0);

// Single-state zero field chain on a grid.
PilotChain zero_chain(GridPtr grid, double alpha = 1.0);

// Resolvent action on per-state data. theta has one row per chain state.
Eigen::MatrixXd resolvent(const PilotChain& chain, double shift, const Eigen::MatrixXd& theta);
std::vector<GridField> resolvent(const PilotChain& chain, double shift, const std::vector<GridField>& theta);
std::vector<VectorField> resolvent(const PilotChain& chain, double shift, const std::vector<VectorField>& theta);

Eigen::VectorXd apply_generator(const PilotChain& chain, const Eigen::VectorXd& phi);

struct PilotPath {
    std::vector<double> jump_times;  // strictly increasing, in (0, t_end)
    std::vector<int> states;         // states[0] initial, states[k+1] after jump k
    std::uint64_t seed = 0;
    double t_end = 0.0;
    int state_at(double t) const;
};

// Stationary start (initial state drawn from lambda), exact jump chain.
PilotPath sample_path(const PilotChain& chain, double t_end, std::uint64_t seed);
PilotPath sample_path(const PilotChain& chain, double t_end, Rng& rng);

// w <- m + e^{-dt}(w - m): the exponential filter over dt of microscopic time.
GridField ou_filter_step(const GridField& w, const GridField& m, double dt_micro);

// Filter weights of a path: w(t_end) = sum_j a_j n_j when started from w = 0
// at time 0. Returned together with the final state.
struct FilterState {
    Eigen::VectorXd weights;
    int state = 0;
};
FilterState filter_weights(const PilotChain& chain, const PilotPath& path);

// Stationary pair (w_0, m_0) approximated by a stationary-start path of
// length `burn_in` (microscopic time) filtered from w = 0.
FilterState sample_stationary_pair(const PilotChain& chain, double burn_in, Rng& rng);
// Burn-in covering `mixing_times` mixing times of the chain and of the filter.
double default_burn_in(const PilotChain& chain, double mixing_times);

GridField combine_states(const PilotChain& chain, const Eigen::VectorXd& weights);

}  // namespace kda
