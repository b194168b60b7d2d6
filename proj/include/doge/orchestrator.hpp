#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "doge/config.hpp"
#include "doge/curriculum.hpp"
#include "doge/grpo.hpp"
#include "doge/metrics.hpp"
#include "doge/policy.hpp"
#include "doge/rewards.hpp"
#include "doge/rng.hpp"
#include "doge/task.hpp"
#include "doge/vocab.hpp"

namespace doge {

enum class RoundPhase { warmup, stage1, stage2, done };

// Per-round training state. At round start thinker and solver are bit-exact
// copies of the incoming params; the solver snapshot is frozen and every
// stage-1 step re-verifies its digest.
struct RoundState {
    int round_index = 0;
    PolicySnapshot base;
    PolicyParams thinker;
    PolicySnapshot solver;
    RoundPhase phase = RoundPhase::stage1;

    RoundState(int round, PolicySnapshot b, PolicyParams t, PolicySnapshot s)
        : round_index(round), base(std::move(b)), thinker(std::move(t)), solver(std::move(s)) {}
};

// Test and CLI seams. tamper_report runs on each step's report before the
// invariant checks (the CLI fault-injection flag uses it to force an abort);
// on_row sees every metrics row as it is produced.
struct RunHooks {
    std::function<void(int round, Stage stage, int64_t step, UpdateReport&)> tamper_report;
    std::function<void(const MetricsRow&)> on_row;
};

// What one stage emitted: its metrics rows and the task ids visited, in
// batch-slot order (the paired-seed comparisons key on the id sequence).
struct StageResult {
    std::vector<MetricsRow> rows;
    std::vector<std::string> task_ids;
};

// Parameter digests at the round's handoff points.
struct HandoffTrace {
    int round = 0;
    uint64_t base_digest = 0;
    uint64_t thinker_start_digest = 0;
    uint64_t solver_start_digest = 0;
    uint64_t solver_end_digest = 0;
    uint64_t stage1_end_digest = 0;
    uint64_t stage2_start_digest = 0;
    uint64_t stage2_end_digest = 0;
};

struct RunResult {
    Vocabulary vocab = Vocabulary::make(10, 6);
    PolicyParams final_params;
    std::vector<HandoffTrace> handoffs;
    std::vector<MetricsRow> rows;
    std::vector<std::vector<std::string>> stage2_task_ids; // per round, visit order
    MeanAtK final_eval;
};

// Round handoff: thinker and solver become value-exact copies of prev, the
// solver frozen at solver_temperature, the base snapshot kept for reference.
RoundState begin_round(const Vocabulary& vocab, const PolicyParams& prev, int round_index,
                       double base_temperature, double solver_temperature);

// GRPO warmup on the format reward alone; prompts are context + question.
StageResult warmup_format(const Vocabulary& vocab, PolicyParams& params,
                          const std::vector<ProblemRecord>& tasks, int steps,
                          const StageConfig& cfg, const RngFactory& factory,
                          const RunHooks* hooks = nullptr);

// Stage 1: the thinker samples analyses on question-masked prompts and is
// scored by the frozen solver's answers (context reward). Updates
// state.thinker in place and advances the phase to stage2.
StageResult train_stage1(RoundState& state, const std::vector<ProblemRecord>& tasks,
                         const StageConfig& cfg, const RngFactory& factory,
                         const RunHooks* hooks = nullptr);

// Stage 2: standard GRPO with the application reward on full prompts.
StageResult train_stage2(const Vocabulary& vocab, PolicyParams& params,
                         const std::vector<ProblemRecord>& tasks, const StageConfig& cfg,
                         const RngFactory& factory, int round,
                         const RunHooks* hooks = nullptr);

// The full loop: init, manifest, warmup, then per round handoff -> stage 1
// (doge mode only) -> stage 2 -> pool update -> eval. Writes metrics.csv,
// manifest.json, pool.ldjson and per-boundary checkpoints into out_dir.
RunResult run(const RunConfig& cfg, const std::string& out_dir,
              const RunHooks* hooks = nullptr);

} // namespace doge
