#include "doge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include <json.hpp>

#include "doge/errors.hpp"
#include "doge/grpo.hpp"
#include "doge/policy.hpp"
#include "doge/rng.hpp"
#include "doge/vocab.hpp"

namespace doge {

void GradCheckOptions::validate() const {
    if (trials < 1) {
        throw InvalidInputError("gradcheck trials must be >= 1");
    }
    if (!(fd_step > 0.0) || !std::isfinite(fd_step)) {
        throw InvalidInputError("gradcheck fd_step must be positive");
    }
}

namespace {

// Relative error with a unit floor, matching the conformance tolerance: the
// denominator never drops below 1, so near-zero entries compare absolutely.
double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

PolicyParams gaussian_params(const Vocabulary& vocab, RngStream& rng, double scale) {
    FeatureSpace space;
    space.vocab_size = vocab.size();
    space.position_buckets = 8;
    space.context_buckets = 8;
    PolicyParams p = PolicyParams::zeros(space);
    for (double& w : p.weights.data) {
        w = scale * rng.next_gaussian();
    }
    return p;
}

} // namespace

GradCheckResult run_gradcheck(const GradCheckOptions& opts) {
    opts.validate();
    const Vocabulary vocab = Vocabulary::make(1, 0, 0); // |V| = 8
    const ClipConfig clip{0.2, 0.28};
    constexpr int kGroupSize = 4;
    constexpr int kMaxLen = 6;
    RngStream rng(opts.seed);

    GradCheckResult result;
    int attempts = 0;
    const int attempt_cap = opts.trials * 12;
    while (result.instances < opts.trials && attempts < attempt_cap) {
        ++attempts;
        const PolicyParams cur_params = gaussian_params(vocab, rng, 0.5);
        PolicyParams old_params = cur_params;
        for (double& w : old_params.weights.data) {
            w += 0.3 * rng.next_gaussian();
        }
        const PolicySnapshot old_snap(vocab, old_params, SnapshotRole::old_policy, 1.0);
        const PolicySnapshot ref(vocab, old_params, SnapshotRole::reference, 1.0);

        RolloutGroup group;
        group.prompt = {static_cast<TokenId>(rng.next_below(vocab.size())),
                        static_cast<TokenId>(rng.next_below(vocab.size()))};
        for (int g = 0; g < kGroupSize; ++g) {
            group.samples.push_back(sample_sequence(old_snap, group.prompt, kMaxLen, rng));
            group.rewards.push_back(rng.next_double());
        }
        group.advantages = normalize_advantages(group.rewards, 1e-6);

        const PolicySnapshot cur(vocab, cur_params, SnapshotRole::current, 1.0);
        const auto ratios = token_ratios(cur, old_snap, group);

        // The min() surrogate has a kink where a ratio crosses a clip bound;
        // central differences are only trustworthy away from it.
        bool near_kink = false;
        int64_t flat = 0, slope = 0;
        for (size_t i = 0; i < ratios.size(); ++i) {
            const double adv = (*group.advantages)[i];
            for (double r : ratios[i]) {
                if (std::abs(r - (1.0 - clip.eps_low)) < 1e-3 ||
                    std::abs(r - (1.0 + clip.eps_high)) < 1e-3) {
                    near_kink = true;
                }
                const double clamped = std::clamp(r, 1.0 - clip.eps_low, 1.0 + clip.eps_high);
                (clamped * adv < r * adv ? flat : slope) += 1;
            }
        }
        if (near_kink) {
            continue;
        }
        const int instance = result.instances++;
        result.flat_tokens += flat;
        result.slope_tokens += slope;

        const RegularizerConfig reg{instance % 2 == 0 ? 1e-3 : 0.0, 1e-6};
        Matrix analytic = objective_gradient(group, ratios, clip, reg, cur, ref);
        if (opts.corrupt && instance == 0) {
            analytic.data[0] += 1e-3;
        }

        PolicyParams probe = cur_params;
        for (size_t k = 0; k < probe.weights.data.size(); ++k) {
            const double saved = probe.weights.data[k];
            const auto objective_at = [&](double w) {
                probe.weights.data[k] = w;
                const PolicySnapshot view(vocab, probe, SnapshotRole::current, 1.0);
                const auto probe_ratios = token_ratios(view, old_snap, group);
                return clipped_objective(group, probe_ratios, clip, reg, view, ref).first;
            };
            const double up = objective_at(saved + opts.fd_step);
            const double down = objective_at(saved - opts.fd_step);
            probe.weights.data[k] = saved;
            const double fd = (up - down) / (2.0 * opts.fd_step);
            const double err = rel_err(analytic.data[k], fd);
            if (err > result.max_rel_err) {
                result.max_rel_err = err;
                nlohmann::json worst = {
                    {"instance", instance},
                    {"weight_index", k},
                    {"analytic", analytic.data[k]},
                    {"finite_difference", fd},
                    {"rel_err", err},
                    {"kl_coeff", reg.kl_coeff},
                    {"seed", opts.seed},
                };
                result.worst_instance_json = worst.dump();
            }
        }
    }
    if (result.instances < opts.trials) {
        throw ContractError("gradcheck rejected too many kink-adjacent instances");
    }
    return result;
}

} // namespace doge
