#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "doge/rng.hpp"
#include "doge/vocab.hpp"

namespace doge {

// Dense row-major matrix of doubles; shared layout for weights and gradients.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
};

// Feature layout for the linear-softmax policy. Four features are active at
// every step: bias, previous token (or BOS at position 0), a position bucket
// min(position, P_max), and a context bucket hash(prompt) mod B.
struct FeatureSpace {
    int vocab_size = 0;
    int position_buckets = 16; // P_max + 1
    int context_buckets = 64;  // B

    int dim() const { return 1 + (vocab_size + 1) + position_buckets + context_buckets; }

    int bias_feature() const { return 0; }
    int prev_token_feature(TokenId t) const { return 1 + t; }
    int bos_feature() const { return 1 + vocab_size; }
    int position_feature(int position) const {
        const int b = position < position_buckets - 1 ? position : position_buckets - 1;
        return 2 + vocab_size + b;
    }
    int context_feature_of_bucket(int bucket) const {
        return 2 + vocab_size + position_buckets + bucket;
    }
    int context_bucket(std::span<const TokenId> prompt) const;

    bool operator==(const FeatureSpace&) const = default;
};

// Weights of the featurized policy, (feature, token) indexed.
struct PolicyParams {
    FeatureSpace space;
    Matrix weights; // space.dim() x vocab_size

    static PolicyParams zeros(const FeatureSpace& space);
    uint64_t digest() const;
};

// Fresh policy for the start of a run: small Gaussian noise plus a weak
// structural prior on the think/answer skeleton, the stand-in for a base
// model that already mostly follows the output format.
PolicyParams init_policy(const Vocabulary& vocab, const FeatureSpace& space, RngStream& rng,
                         double noise_scale = 0.01, double format_prior = 3.0);

enum class SnapshotRole { current, old_policy, reference, solver };

// Immutable view of a policy at a point in time. Snapshots are safe to share
// across threads; role and temperature travel with the parameters so every
// consumer evaluates the same softmax(logits / temperature) distribution.
struct PolicySnapshot {
    Vocabulary vocab;
    PolicyParams params;
    SnapshotRole role = SnapshotRole::current;
    double temperature = 1.0;
    uint64_t frozen_digest = 0; // nonzero once frozen

    PolicySnapshot(Vocabulary v, PolicyParams p, SnapshotRole r, double temp);

    void freeze() { frozen_digest = params.digest(); }
    bool is_frozen() const { return frozen_digest != 0; }
    // Throws ContractError if a frozen snapshot's parameters have changed.
    void verify_frozen() const;
};

// One sampled response with the statistics recorded at sampling time.
struct SequenceSample {
    std::vector<TokenId> prompt;
    std::vector<TokenId> tokens;        // ends with EOS or cut at max length
    std::vector<double> step_logprobs;  // log pi of each generated token
    std::vector<double> step_entropies; // entropy of each step distribution
};

// Active feature ids (bias, prev/BOS, position bucket, context bucket) for the
// step that generates the token at `position` given `prefix`.
std::array<int, 4> feature_map(const PolicyParams& params, std::span<const TokenId> prompt,
                               std::span<const TokenId> prefix, int position);

// Next-token distribution: softmax over the vocabulary of the summed active
// feature rows, divided by the snapshot temperature.
std::vector<double> step_distribution(const PolicySnapshot& snapshot,
                                      std::span<const TokenId> prompt,
                                      std::span<const TokenId> prefix);

// Ancestral sampling; stops at EOS or max_len. Logprobs and entropies come
// from the same distribution each token was drawn from.
SequenceSample sample_sequence(const PolicySnapshot& snapshot, std::span<const TokenId> prompt,
                               int max_len, RngStream& rng);

// Teacher-forced per-token log-probabilities of an existing token list.
std::vector<double> sequence_logprob(const PolicySnapshot& snapshot,
                                     std::span<const TokenId> prompt,
                                     std::span<const TokenId> tokens);

// Exact gradient of sum(log pi(tokens)) with respect to the weights:
// for each step and active feature f, grad[f, v] += (1[v = chosen] - p(v)) / temperature.
Matrix grad_sequence_logprob(const PolicySnapshot& snapshot, std::span<const TokenId> prompt,
                             std::span<const TokenId> tokens);

// Exact KL(p || q) over the vocabulary at one step; q is floored at 1e-12.
double step_kl(const PolicySnapshot& snapshot_p, const PolicySnapshot& snapshot_q,
               std::span<const TokenId> prompt, std::span<const TokenId> prefix);

// Shannon entropy of the step distribution, in [0, ln |V|].
double policy_entropy(const PolicySnapshot& snapshot, std::span<const TokenId> prompt,
                      std::span<const TokenId> prefix);

// Direct formulas on probability vectors (also used by the ops above).
double entropy_of(std::span<const double> probs);
double kl_of(std::span<const double> p, std::span<const double> q);

inline constexpr double kProbFloor = 1e-12;

} // namespace doge
