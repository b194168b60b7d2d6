#include "doge/grpo.hpp"

#include <algorithm>
#include <cmath>

#include "doge/errors.hpp"

namespace doge {

void ClipConfig::validate() const {
    if (!(eps_low > 0.0 && eps_low < 1.0)) {
        throw InvalidInputError("clip eps_low must be in (0, 1)");
    }
    if (!(eps_high > 0.0 && eps_high < 1.0)) {
        throw InvalidInputError("clip eps_high must be in (0, 1)");
    }
}

void RegularizerConfig::validate() const {
    if (!(kl_coeff >= 0.0)) throw InvalidInputError("kl_coeff must be >= 0");
    if (!(adv_eps > 0.0)) throw InvalidInputError("adv_eps must be > 0");
}

std::vector<double> normalize_advantages(const std::vector<double>& rewards, double adv_eps) {
    if (rewards.empty()) throw InvalidInputError("normalize_advantages: empty reward list");
    for (double r : rewards) {
        if (!std::isfinite(r)) throw InvalidInputError("normalize_advantages: non-finite reward");
    }
    // Zero-variance groups normalize to exact zeros; checking value equality
    // directly avoids residue from the mean not being representable.
    const bool all_equal = std::all_of(rewards.begin(), rewards.end(),
                                       [&](double r) { return r == rewards.front(); });
    if (all_equal) return std::vector<double>(rewards.size(), 0.0);

    double mean = 0.0;
    for (double r : rewards) mean += r;
    mean /= static_cast<double>(rewards.size());
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    var /= static_cast<double>(rewards.size()); // population variance
    const double denom = std::sqrt(var) + adv_eps;

    std::vector<double> adv(rewards.size());
    for (size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / denom;
    return adv;
}

namespace {

void check_group(const RolloutGroup& group, const std::vector<std::vector<double>>& ratios,
                 bool need_advantages) {
    if (group.samples.empty()) throw InvalidInputError("rollout group has no samples");
    if (ratios.size() != group.samples.size()) {
        throw InvalidInputError("ratio list count disagrees with sample count");
    }
    for (size_t i = 0; i < group.samples.size(); ++i) {
        if (group.samples[i].tokens.empty()) {
            throw InvalidInputError("rollout sample has no tokens");
        }
        if (ratios[i].size() != group.samples[i].tokens.size()) {
            throw InvalidInputError("ratio length disagrees with token length");
        }
    }
    if (need_advantages) {
        if (!group.advantages || group.advantages->size() != group.samples.size()) {
            throw InvalidInputError("group advantages absent or wrong length");
        }
    }
}

} // namespace

std::vector<std::vector<double>> token_ratios(const PolicySnapshot& current,
                                              const PolicySnapshot& old_policy,
                                              const RolloutGroup& group) {
    if (group.samples.empty()) throw InvalidInputError("rollout group has no samples");
    std::vector<std::vector<double>> out;
    out.reserve(group.samples.size());
    for (const auto& sample : group.samples) {
        const auto lp_cur = sequence_logprob(current, sample.prompt, sample.tokens);
        const auto lp_old = sequence_logprob(old_policy, sample.prompt, sample.tokens);
        std::vector<double> r(lp_cur.size());
        for (size_t t = 0; t < r.size(); ++t) {
            r[t] = std::exp(lp_cur[t] - lp_old[t]);
            if (!std::isfinite(r[t])) throw NumericError("non-finite importance ratio");
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::pair<double, UpdateReport> clipped_objective(const RolloutGroup& group,
                                                  const std::vector<std::vector<double>>& ratios,
                                                  const ClipConfig& clip,
                                                  const RegularizerConfig& reg,
                                                  const PolicySnapshot& current,
                                                  const PolicySnapshot& reference) {
    clip.validate();
    check_group(group, ratios, true);

    const double g_count = static_cast<double>(group.samples.size());
    const double lo = 1.0 - clip.eps_low;
    const double hi = 1.0 + clip.eps_high;

    double objective = 0.0;
    double kl_weighted = 0.0;
    double entropy_weighted = 0.0;
    int64_t clipped_tokens = 0;
    int64_t total_tokens = 0;

    for (size_t i = 0; i < group.samples.size(); ++i) {
        const auto& sample = group.samples[i];
        const double adv = (*group.advantages)[i];
        const double inv_len = 1.0 / static_cast<double>(sample.tokens.size());

        std::vector<TokenId> prefix;
        prefix.reserve(sample.tokens.size());
        double sample_term = 0.0;
        for (size_t t = 0; t < sample.tokens.size(); ++t) {
            const double r = ratios[i][t];
            const double unclipped = r * adv;
            const double clipped = std::clamp(r, lo, hi) * adv;
            const double term = std::min(unclipped, clipped);
            if (clipped < unclipped) ++clipped_tokens;
            ++total_tokens;

            const auto p = step_distribution(current, sample.prompt, prefix);
            const auto q = step_distribution(reference, sample.prompt, prefix);
            const double kl = kl_of(p, q);
            sample_term += term - reg.kl_coeff * kl;
            kl_weighted += inv_len * kl;
            entropy_weighted += inv_len * entropy_of(p);
            prefix.push_back(sample.tokens[t]);
        }
        objective += inv_len * sample_term;
    }
    objective /= g_count;

    UpdateReport report;
    report.objective_value = objective;
    report.policy_loss = -objective;
    report.kl_value = kl_weighted / g_count;
    report.mean_entropy = entropy_weighted / g_count;
    report.clipped_fraction = static_cast<double>(clipped_tokens) / total_tokens;
    if (!std::isfinite(objective)) throw NumericError("non-finite surrogate objective");
    return {objective, report};
}

Matrix objective_gradient(const RolloutGroup& group,
                          const std::vector<std::vector<double>>& ratios, const ClipConfig& clip,
                          const RegularizerConfig& reg, const PolicySnapshot& current,
                          const PolicySnapshot& reference) {
    clip.validate();
    check_group(group, ratios, true);

    const FeatureSpace& space = current.params.space;
    const int v_count = space.vocab_size;
    Matrix grad(space.dim(), v_count);
    const double inv_g = 1.0 / static_cast<double>(group.samples.size());
    const double inv_temp = 1.0 / current.temperature;
    const double lo = 1.0 - clip.eps_low;
    const double hi = 1.0 + clip.eps_high;

    for (size_t i = 0; i < group.samples.size(); ++i) {
        const auto& sample = group.samples[i];
        const double adv = (*group.advantages)[i];
        const double w = inv_g / static_cast<double>(sample.tokens.size());

        std::vector<TokenId> prefix;
        prefix.reserve(sample.tokens.size());
        for (size_t t = 0; t < sample.tokens.size(); ++t) {
            const auto p = step_distribution(current, sample.prompt, prefix);
            const auto feats = feature_map(current.params, sample.prompt, prefix,
                                           static_cast<int>(t));
            const TokenId chosen = sample.tokens[t];

            // Policy term: d/dW min(r A, clamp(r) A). In the flat region the
            // clipped branch wins strictly and the token contributes nothing;
            // otherwise d(rA)/dW = A r dlogpi/dW.
            const double r = ratios[i][t];
            const double unclipped = r * adv;
            const double clipped = std::clamp(r, lo, hi) * adv;
            if (!(clipped < unclipped)) {
                const double coeff = w * adv * r * inv_temp;
                for (int f : feats) {
                    double* row = &grad.data[static_cast<size_t>(f) * v_count];
                    for (int v = 0; v < v_count; ++v) {
                        row[v] += coeff * ((v == chosen ? 1.0 : 0.0) - p[v]);
                    }
                }
            }

            // KL term: dKL/dW[f,u] = (1/tau) p_u (ln(p_u/q_u) - KL) per
            // active feature, with q floored like the forward computation.
            if (reg.kl_coeff > 0.0) {
                const auto q = step_distribution(reference, sample.prompt, prefix);
                const double kl = kl_of(p, q);
                const double coeff = -w * reg.kl_coeff * inv_temp;
                for (int f : feats) {
                    double* row = &grad.data[static_cast<size_t>(f) * v_count];
                    for (int v = 0; v < v_count; ++v) {
                        row[v] += coeff * p[v] * (std::log(p[v] / std::max(q[v], kProbFloor)) - kl);
                    }
                }
            }
            prefix.push_back(chosen);
        }
    }
    for (double x : grad.data) {
        if (!std::isfinite(x)) throw NumericError("non-finite objective gradient");
    }
    return grad;
}

void apply_update(PolicyParams& params, const Matrix& gradient, OptimizerState& state, double lr) {
    auto& w = params.weights.data;
    if (gradient.data.size() != w.size()) {
        throw InvalidInputError("apply_update: gradient shape disagrees with params");
    }
    for (double g : gradient.data) {
        if (!std::isfinite(g)) throw NumericError("apply_update: non-finite gradient");
    }
    if (state.empty()) {
        state.m.assign(w.size(), 0.0);
        state.v.assign(w.size(), 0.0);
    }
    if (state.m.size() != w.size() || state.v.size() != w.size()) {
        throw InvalidInputError("apply_update: optimizer state shape disagrees with params");
    }

    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    state.t += 1;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (size_t i = 0; i < w.size(); ++i) {
        const double g = gradient.data[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        w[i] += lr * m_hat / (std::sqrt(v_hat) + eps); // ascent on the objective
        if (!std::isfinite(w[i])) throw NumericError("apply_update: non-finite parameter");
    }
}

double grad_l2_norm(const Matrix& gradient) {
    double s = 0.0;
    for (double x : gradient.data) s += x * x;
    return std::sqrt(s);
}

} // namespace doge
