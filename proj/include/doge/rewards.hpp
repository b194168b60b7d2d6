#pragma once

#include <span>
#include <vector>

#include "doge/policy.hpp"
#include "doge/rng.hpp"
#include "doge/task.hpp"

namespace doge {

// format_bonus is the beta of the reward formulas; solver_samples (n_S) and
// solver_temperature govern the frozen-Solver estimate in stage 1.
struct RewardConfig {
    double format_bonus = 0.1;
    int solver_samples = 4;
    double solver_temperature = 0.9;

    void validate() const;
};

// Structural parse of a response: one think block, then one answer block.
struct ParsedResponse {
    bool has_think_block = false;
    std::vector<TokenId> think_tokens;
    std::vector<TokenId> answer_tokens;
    bool well_formed = false;
};

// Grammar: THINK_OPEN t* THINK_CLOSE m* ANS_OPEN a+ ANS_CLOSE [EOS], where
// t/m/a are payload tokens (no block delimiters, no EOS). Malformed input is
// not an error; it parses with well_formed = false.
ParsedResponse parse_response(std::span<const TokenId> tokens);

// 1 iff the response is well-formed.
int format_reward(std::span<const TokenId> tokens);

// 1 iff well-formed and the answer block equals gold token-for-token.
int correctness_reward(std::span<const TokenId> tokens, std::span<const TokenId> gold);

// Stage-2 reward: correctness + format_bonus * format, in [0, 1 + beta].
double app_reward(std::span<const TokenId> tokens, std::span<const TokenId> gold,
                  const RewardConfig& cfg);

// Stage-1 reward for one Thinker analysis: the frozen Solver answers the real
// question conditioned on context + question + SEP + analysis, and the reward
// is the mean app-style score over solver_samples draws at solver_temperature.
double context_reward(const SequenceSample& analysis, const TaskInstance& task,
                      const PolicySnapshot& solver, const RewardConfig& cfg, RngStream& rng,
                      int max_response_len = 12);

struct MeanAtK {
    std::vector<double> per_task;
    double aggregate = 0.0;
};

// Fraction of k samples per task with correctness_reward = 1, plus the mean
// over tasks. Sampling temperature is the snapshot's own.
MeanAtK mean_at_k(const PolicySnapshot& policy, const std::vector<TaskInstance>& tasks, int k,
                  RngStream& rng, int max_response_len = 12);

} // namespace doge
