#include "doge/rewards.hpp"

#include <algorithm>

#include "doge/errors.hpp"

namespace doge {

void RewardConfig::validate() const {
    if (!(format_bonus >= 0.0)) throw InvalidInputError("format_bonus must be >= 0");
    if (solver_samples < 1) throw InvalidInputError("solver_samples must be >= 1");
    if (!(solver_temperature > 0.0)) throw InvalidInputError("solver_temperature must be > 0");
}

namespace {

bool is_payload(TokenId t) {
    return t != Vocabulary::kThinkOpen && t != Vocabulary::kThinkClose &&
           t != Vocabulary::kAnsOpen && t != Vocabulary::kAnsClose && t != Vocabulary::kEos;
}

} // namespace

ParsedResponse parse_response(std::span<const TokenId> tokens) {
    ParsedResponse out;
    size_t i = 0;
    const size_t n = tokens.size();

    if (i >= n || tokens[i] != Vocabulary::kThinkOpen) return out;
    ++i;
    const size_t think_begin = i;
    while (i < n && is_payload(tokens[i])) ++i;
    if (i >= n || tokens[i] != Vocabulary::kThinkClose) return out;
    out.has_think_block = true;
    out.think_tokens.assign(tokens.begin() + think_begin, tokens.begin() + i);
    ++i;

    while (i < n && is_payload(tokens[i])) ++i; // free-form middle span
    if (i >= n || tokens[i] != Vocabulary::kAnsOpen) return out;
    ++i;
    const size_t ans_begin = i;
    while (i < n && is_payload(tokens[i])) ++i;
    if (i == ans_begin) return out; // answer block must be nonempty
    if (i >= n || tokens[i] != Vocabulary::kAnsClose) return out;
    const size_t ans_end = i;
    ++i;

    if (i < n && tokens[i] == Vocabulary::kEos) ++i; // optional terminator
    if (i != n) return out;                          // trailing tokens: malformed

    out.answer_tokens.assign(tokens.begin() + ans_begin, tokens.begin() + ans_end);
    out.well_formed = true;
    return out;
}

int format_reward(std::span<const TokenId> tokens) {
    return parse_response(tokens).well_formed ? 1 : 0;
}

int correctness_reward(std::span<const TokenId> tokens, std::span<const TokenId> gold) {
    if (gold.empty()) throw InvalidInputError("correctness_reward: empty gold answer");
    const auto parsed = parse_response(tokens);
    if (!parsed.well_formed) return 0;
    return std::equal(parsed.answer_tokens.begin(), parsed.answer_tokens.end(), gold.begin(),
                      gold.end())
               ? 1
               : 0;
}

double app_reward(std::span<const TokenId> tokens, std::span<const TokenId> gold,
                  const RewardConfig& cfg) {
    cfg.validate();
    return correctness_reward(tokens, gold) + cfg.format_bonus * format_reward(tokens);
}

double context_reward(const SequenceSample& analysis, const TaskInstance& task,
                      const PolicySnapshot& solver, const RewardConfig& cfg, RngStream& rng,
                      int max_response_len) {
    cfg.validate();
    if (solver.role != SnapshotRole::solver || !solver.is_frozen()) {
        throw InvalidInputError("context_reward requires a frozen solver-role snapshot");
    }
    solver.verify_frozen();
    if (max_response_len < 1) throw InvalidInputError("context_reward: max_response_len < 1");

    // Solver prompt: context, question, SEP, then the analysis with any
    // trailing EOS stripped (EOS is a generation terminator, not content).
    std::vector<TokenId> prompt;
    prompt.reserve(task.context.size() + task.question.size() + 1 + analysis.tokens.size());
    prompt.insert(prompt.end(), task.context.begin(), task.context.end());
    prompt.insert(prompt.end(), task.question.begin(), task.question.end());
    prompt.push_back(Vocabulary::kSep);
    for (TokenId t : analysis.tokens) {
        if (t != Vocabulary::kEos) prompt.push_back(t);
    }

    // Sample at the configured solver temperature; parameters are shared with
    // (and digest-checked against) the frozen snapshot.
    PolicySnapshot view(solver.vocab, solver.params, SnapshotRole::solver,
                        cfg.solver_temperature);
    double total = 0.0;
    for (int s = 0; s < cfg.solver_samples; ++s) {
        const auto answer = sample_sequence(view, prompt, max_response_len, rng);
        total += app_reward(answer.tokens, task.gold, cfg);
    }
    solver.verify_frozen();
    return total / cfg.solver_samples;
}

MeanAtK mean_at_k(const PolicySnapshot& policy, const std::vector<TaskInstance>& tasks, int k,
                  RngStream& rng, int max_response_len) {
    if (tasks.empty()) throw InvalidInputError("mean_at_k: empty task list");
    if (k < 1) throw InvalidInputError("mean_at_k: k must be >= 1");

    MeanAtK out;
    out.per_task.reserve(tasks.size());
    for (const auto& task : tasks) {
        std::vector<TokenId> prompt;
        prompt.reserve(task.context.size() + task.question.size());
        prompt.insert(prompt.end(), task.context.begin(), task.context.end());
        prompt.insert(prompt.end(), task.question.begin(), task.question.end());
        int correct = 0;
        for (int s = 0; s < k; ++s) {
            const auto sample = sample_sequence(policy, prompt, max_response_len, rng);
            correct += correctness_reward(sample.tokens, task.gold);
        }
        out.per_task.push_back(static_cast<double>(correct) / k);
        out.aggregate += out.per_task.back();
    }
    out.aggregate /= static_cast<double>(tasks.size());
    return out;
}

} // namespace doge
