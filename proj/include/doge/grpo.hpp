#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "doge/policy.hpp"

namespace doge {

// One prompt's group of G rollouts with their scalar rewards. Advantages stay
// absent until normalize_advantages fills them.
struct RolloutGroup {
    std::vector<TokenId> prompt;
    std::vector<SequenceSample> samples;
    std::vector<double> rewards;
    std::optional<std::vector<double>> advantages;
};

// Decoupled clip range: ratios are clamped into [1 - eps_low, 1 + eps_high].
struct ClipConfig {
    double eps_low = 0.2;
    double eps_high = 0.2;

    void validate() const;
};

// kl_coeff is the KL penalty weight; adv_eps the denominator guard of the
// advantage normalization.
struct RegularizerConfig {
    double kl_coeff = 1e-3;
    double adv_eps = 1e-6;

    void validate() const;
};

// Per-update instrumentation, surfaced verbatim in the metrics CSV.
struct UpdateReport {
    double objective_value = 0.0;
    double policy_loss = 0.0; // -objective_value, for loss-shaped dashboards
    double kl_value = 0.0;
    double grad_norm = 0.0;
    double mean_entropy = 0.0;
    double clipped_fraction = 0.0;
};

// Adam accumulators; step count t plus first/second moments, one per weight,
// persisted in checkpoints so training resumes bit-exactly.
struct OptimizerState {
    int64_t t = 0;
    std::vector<double> m;
    std::vector<double> v;

    bool empty() const { return t == 0 && m.empty() && v.empty(); }
};

// Group-relative advantages: (r_i - mean) / (population std + adv_eps).
// A zero-variance group (all rewards equal) maps to exact zeros.
std::vector<double> normalize_advantages(const std::vector<double>& rewards, double adv_eps);

// Per-sample per-token importance ratios exp(log pi_current - log pi_old).
std::vector<std::vector<double>> token_ratios(const PolicySnapshot& current,
                                              const PolicySnapshot& old_policy,
                                              const RolloutGroup& group);

// The clipped token-level surrogate with KL penalty:
//   (1/G) sum_i (1/|o_i|) sum_t [ min(r A, clamp(r, 1-eps_l, 1+eps_h) A)
//                                 - kl_coeff * KL_t(current || reference) ].
// Report fields kl_value and mean_entropy use the same (1/G)(1/|o_i|) token
// weighting; clipped_fraction is the plain fraction of tokens whose clipped
// branch was strictly active. grad_norm is left 0 (filled by the caller).
std::pair<double, UpdateReport> clipped_objective(const RolloutGroup& group,
                                                  const std::vector<std::vector<double>>& ratios,
                                                  const ClipConfig& clip,
                                                  const RegularizerConfig& reg,
                                                  const PolicySnapshot& current,
                                                  const PolicySnapshot& reference);

// Exact gradient of the surrogate w.r.t. current params; pi_old is constant,
// tokens are fixed. Tokens in the clipped flat region contribute zero policy
// gradient; the KL term's gradient is included in closed form.
Matrix objective_gradient(const RolloutGroup& group,
                          const std::vector<std::vector<double>>& ratios, const ClipConfig& clip,
                          const RegularizerConfig& reg, const PolicySnapshot& current,
                          const PolicySnapshot& reference);

// Gradient-ascent Adam step (beta1 0.9, beta2 0.999, eps 1e-8), in place.
void apply_update(PolicyParams& params, const Matrix& gradient, OptimizerState& state, double lr);

double grad_l2_norm(const Matrix& gradient);

} // namespace doge
