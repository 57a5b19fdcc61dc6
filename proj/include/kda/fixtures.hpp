#pragma once

#include "kda/chain.hpp"
#include "kda/rng.hpp"

namespace kda {

struct RandomChainOptions {
    bool reversible = false;
    double alpha = 1.0;
    double radius_fraction = 0.9;  // states rescaled so that R = radius_fraction * alpha / 4
    int max_mode = 3;              // Fourier modes with |k_axis| <= max_mode
    double rate_min = 0.2;
    double rate_max = 2.0;
};

// Random admissible chain: irreducible rates, smooth centred states.
PilotChain random_chain(GridPtr grid, int states, Rng& rng, const RandomChainOptions& opts = {});

// Two states n = +-delta (sin 2 pi x + cos 2 pi x) in 1D (cos 2 pi y added in 2D), symmetric rate q.
PilotChain two_state_chain(GridPtr grid, double q, double delta, double alpha = 1.0);

// Amplitude delta giving R = fraction * alpha / 4 for two_state_chain in 1D.
double two_state_delta(double fraction, double alpha = 1.0);

}  // namespace kda
