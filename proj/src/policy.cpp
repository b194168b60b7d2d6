#include "doge/policy.hpp"

#include <algorithm>
#include <cmath>

#include "doge/errors.hpp"
#include "doge/util.hpp"

namespace doge {

int FeatureSpace::context_bucket(std::span<const TokenId> prompt) const {
    return static_cast<int>(hash_tokens(prompt) % static_cast<uint64_t>(context_buckets));
}

PolicyParams PolicyParams::zeros(const FeatureSpace& space) {
    PolicyParams p;
    p.space = space;
    p.weights = Matrix(space.dim(), space.vocab_size);
    return p;
}

uint64_t PolicyParams::digest() const {
    return digest_doubles(weights.data);
}

PolicyParams init_policy(const Vocabulary& vocab, const FeatureSpace& space, RngStream& rng,
                         double noise_scale, double format_prior) {
    if (space.vocab_size != vocab.size()) {
        throw InvalidInputError("init_policy: feature space vocab size mismatch");
    }
    PolicyParams p = PolicyParams::zeros(space);
    for (double& w : p.weights.data) {
        w = noise_scale * rng.next_gaussian();
    }
    // Skeleton prior: open a think block first, close it, open the answer
    // block, and prefer closing the answer block and stopping once one
    // payload token has been emitted. Answer content is left uniform.
    const double d = format_prior;
    p.weights.at(space.bos_feature(), vocab.think_open()) += d;
    p.weights.at(space.prev_token_feature(vocab.think_open()), vocab.think_close()) += d * 0.5;
    p.weights.at(space.prev_token_feature(vocab.think_close()), vocab.ans_open()) += d;
    p.weights.at(space.position_feature(4), vocab.ans_close()) += d * 0.5;
    p.weights.at(space.prev_token_feature(vocab.ans_close()), vocab.eos()) += d;
    return p;
}

PolicySnapshot::PolicySnapshot(Vocabulary v, PolicyParams p, SnapshotRole r, double temp)
    : vocab(v), params(std::move(p)), role(r), temperature(temp) {
    if (!(temperature > 0.0)) throw InvalidInputError("snapshot temperature must be positive");
    if (params.space.vocab_size != vocab.size()) {
        throw InvalidInputError("snapshot vocab/params size mismatch");
    }
}

void PolicySnapshot::verify_frozen() const {
    if (frozen_digest != 0 && params.digest() != frozen_digest) {
        throw ContractError("frozen snapshot parameters were mutated");
    }
}

namespace {

void check_tokens(const PolicyParams& params, std::span<const TokenId> tokens, const char* what) {
    for (TokenId t : tokens) {
        if (t < 0 || t >= params.space.vocab_size) {
            throw InvalidInputError(std::string(what) + ": unknown token id " + std::to_string(t));
        }
    }
}

// Softmax of the summed active rows at inverse temperature; max-subtracted.
std::vector<double> distribution_at(const PolicySnapshot& snap, std::span<const TokenId> prompt,
                                    std::span<const TokenId> prefix, int position) {
    const auto feats = feature_map(snap.params, prompt, prefix, position);
    const int v_count = snap.params.space.vocab_size;
    std::vector<double> logits(v_count, 0.0);
    for (int f : feats) {
        const double* row = &snap.params.weights.data[static_cast<size_t>(f) * v_count];
        for (int v = 0; v < v_count; ++v) logits[v] += row[v];
    }
    double max_logit = -INFINITY;
    for (double& z : logits) {
        z /= snap.temperature;
        if (!std::isfinite(z)) throw NumericError("non-finite logit in step distribution");
        max_logit = std::max(max_logit, z);
    }
    double sum = 0.0;
    for (double& z : logits) {
        z = std::exp(z - max_logit);
        sum += z;
    }
    for (double& z : logits) z /= sum;
    return logits;
}

} // namespace

std::array<int, 4> feature_map(const PolicyParams& params, std::span<const TokenId> prompt,
                               std::span<const TokenId> prefix, int position) {
    if (position != static_cast<int>(prefix.size())) {
        throw InvalidInputError("feature_map: position must equal prefix length");
    }
    check_tokens(params, prompt, "feature_map prompt");
    check_tokens(params, prefix, "feature_map prefix");
    const FeatureSpace& s = params.space;
    const int prev = prefix.empty() ? s.bos_feature() : s.prev_token_feature(prefix.back());
    return {s.bias_feature(), prev, s.position_feature(position),
            s.context_feature_of_bucket(s.context_bucket(prompt))};
}

std::vector<double> step_distribution(const PolicySnapshot& snapshot,
                                      std::span<const TokenId> prompt,
                                      std::span<const TokenId> prefix) {
    return distribution_at(snapshot, prompt, prefix, static_cast<int>(prefix.size()));
}

SequenceSample sample_sequence(const PolicySnapshot& snapshot, std::span<const TokenId> prompt,
                               int max_len, RngStream& rng) {
    if (max_len < 1) throw InvalidInputError("sample_sequence: max_len must be >= 1");
    SequenceSample out;
    out.prompt.assign(prompt.begin(), prompt.end());
    out.tokens.reserve(max_len);
    for (int pos = 0; pos < max_len; ++pos) {
        const auto dist = distribution_at(snapshot, prompt, out.tokens, pos);
        const TokenId tok = rng.categorical(dist);
        out.tokens.push_back(tok);
        out.step_logprobs.push_back(std::log(std::max(dist[tok], kProbFloor)));
        out.step_entropies.push_back(entropy_of(dist));
        if (tok == snapshot.vocab.eos()) break;
    }
    return out;
}

std::vector<double> sequence_logprob(const PolicySnapshot& snapshot,
                                     std::span<const TokenId> prompt,
                                     std::span<const TokenId> tokens) {
    if (tokens.empty()) throw InvalidInputError("sequence_logprob: empty token list");
    check_tokens(snapshot.params, tokens, "sequence_logprob");
    std::vector<double> out;
    out.reserve(tokens.size());
    std::vector<TokenId> prefix;
    prefix.reserve(tokens.size());
    for (size_t i = 0; i < tokens.size(); ++i) {
        const auto dist = distribution_at(snapshot, prompt, prefix, static_cast<int>(i));
        out.push_back(std::log(std::max(dist[tokens[i]], kProbFloor)));
        prefix.push_back(tokens[i]);
    }
    return out;
}

Matrix grad_sequence_logprob(const PolicySnapshot& snapshot, std::span<const TokenId> prompt,
                             std::span<const TokenId> tokens) {
    if (tokens.empty()) throw InvalidInputError("grad_sequence_logprob: empty token list");
    check_tokens(snapshot.params, tokens, "grad_sequence_logprob");
    const int v_count = snapshot.params.space.vocab_size;
    Matrix grad(snapshot.params.space.dim(), v_count);
    std::vector<TokenId> prefix;
    prefix.reserve(tokens.size());
    const double inv_temp = 1.0 / snapshot.temperature;
    for (size_t i = 0; i < tokens.size(); ++i) {
        const int pos = static_cast<int>(i);
        const auto dist = distribution_at(snapshot, prompt, prefix, pos);
        const auto feats = feature_map(snapshot.params, prompt, prefix, pos);
        const TokenId chosen = tokens[i];
        for (int f : feats) {
            double* row = &grad.data[static_cast<size_t>(f) * v_count];
            for (int v = 0; v < v_count; ++v) {
                row[v] += ((v == chosen ? 1.0 : 0.0) - dist[v]) * inv_temp;
            }
        }
        prefix.push_back(chosen);
    }
    return grad;
}

double step_kl(const PolicySnapshot& snapshot_p, const PolicySnapshot& snapshot_q,
               std::span<const TokenId> prompt, std::span<const TokenId> prefix) {
    if (snapshot_p.vocab.size() != snapshot_q.vocab.size()) {
        throw InvalidInputError("step_kl: snapshots must share a vocabulary");
    }
    const auto p = step_distribution(snapshot_p, prompt, prefix);
    const auto q = step_distribution(snapshot_q, prompt, prefix);
    return kl_of(p, q);
}

double policy_entropy(const PolicySnapshot& snapshot, std::span<const TokenId> prompt,
                      std::span<const TokenId> prefix) {
    return entropy_of(step_distribution(snapshot, prompt, prefix));
}

double entropy_of(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

double kl_of(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw InvalidInputError("kl_of: length mismatch");
    double kl = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            kl += p[i] * std::log(p[i] / std::max(q[i], kProbFloor));
        }
    }
    return kl;
}

} // namespace doge
