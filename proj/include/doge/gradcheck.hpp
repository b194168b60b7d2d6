#pragma once

#include <cstdint>
#include <string>

namespace doge {

// Finite-difference conformance suite for the surrogate gradient. Instances
// are random small worlds (|V| = 8, responses up to 6 tokens, groups of 4)
// with a perturbed old policy so both clip branches occur; the KL coefficient
// alternates between 0 and 1e-3.
struct GradCheckOptions {
    int trials = 200;
    uint64_t seed = 2024;
    double fd_step = 1e-5;
    bool corrupt = false; // fault hook: nudges one analytic entry

    void validate() const;
};

struct GradCheckResult {
    double max_rel_err = 0.0;
    int instances = 0;
    int64_t flat_tokens = 0;  // tokens landing on the clipped flat branch
    int64_t slope_tokens = 0; // tokens on the live unclipped branch
    std::string worst_instance_json;
};

GradCheckResult run_gradcheck(const GradCheckOptions& opts);

} // namespace doge
