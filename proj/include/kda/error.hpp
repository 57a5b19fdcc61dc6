#pragma once

#include <stdexcept>
#include <string>

namespace kda {

// Hypotheses that an input pairing can violate. The names are the ones
// printed by the CLI, so keep them stable.
enum class Hypothesis {
    vdv,         // moment cancellation / normalization of (V, nu, M)
    HypM,        // alpha <= M <= 1/alpha
    BallR,       // state fields certifiably inside a C^3 ball (band-limited, finite)
    Rsmall,      // R <= alpha / 4
    mcentred,    // sum_i lambda_i n_i = 0
    mixCoupled,  // irreducible chain
    generator,   // malformed rate matrix
};

const char* hypothesis_name(Hypothesis h);

class AdmissibilityError : public std::runtime_error {
public:
    AdmissibilityError(Hypothesis h, const std::string& detail)
        : std::runtime_error(std::string(hypothesis_name(h)) + ": " + detail), hyp_(h) {}
    Hypothesis hypothesis() const noexcept { return hyp_; }

private:
    Hypothesis hyp_;
};

// Numerical breakdown (non-finite state, failed factorization, step guard).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace kda
