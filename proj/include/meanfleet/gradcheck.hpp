#pragma once

#include <cstdint>
#include <string>

namespace mf {

struct GradCheckReport {
    int checks = 0;
    int failures = 0;
    double worst_rel = 0.0;
    std::string worst_label;

    bool passed() const { return failures == 0; }
};

// Every tape primitive plus random composed graphs against central finite
// differences (step 1e-6), relative tolerance 1e-6, kinks excluded.
GradCheckReport gradcheck_primitives(std::uint64_t seed);

// Full backpropagation through a 3x3-grid, T=2 rollout with a <=200-parameter
// policy, fixed matching probabilities, BN in eval mode, no exploration.
// Tolerance 1e-3 relative per coordinate.
GradCheckReport gradcheck_bptt(std::uint64_t seed);

}  // namespace mf
