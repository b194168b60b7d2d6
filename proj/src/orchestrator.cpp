#include "doge/orchestrator.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "doge/checkpoint.hpp"
#include "doge/errors.hpp"
#include "doge/genclient.hpp"
#include "doge/util.hpp"

namespace doge {

namespace {

uint64_t u(int64_t x) { return static_cast<uint64_t>(x); }

int64_t ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                 t0)
        .count();
}

std::string iso_utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<TokenId> full_prompt(const TaskInstance& task) {
    std::vector<TokenId> p;
    p.reserve(task.context.size() + task.question.size());
    p.insert(p.end(), task.context.begin(), task.context.end());
    p.insert(p.end(), task.question.begin(), task.question.end());
    return p;
}

// Everything one stage's training loop needs besides the mutable params.
struct StageSpec {
    const Vocabulary& vocab;
    Stage stage;
    int round;
    const StageConfig& cfg;
    const RngFactory& factory;
    const std::vector<ProblemRecord>& tasks;
    std::function<std::vector<TokenId>(const TaskInstance&)> prompt_of;
    std::function<double(const SequenceSample&, const TaskInstance&, RngStream&)> reward_of;
    std::function<void()> per_step_check; // optional, e.g. frozen-solver verify
};

[[noreturn]] void abort_step(int round, Stage stage, int64_t step, const std::string& what) {
    throw NumericError("round " + std::to_string(round) + " stage " + stage_name(stage) +
                       " step " + std::to_string(step) + ": " + what);
}

// The runtime invariants every update must satisfy; violation is a hard stop.
void check_report(const UpdateReport& rep, double ln_v, int round, Stage stage, int64_t step) {
    if (!(rep.mean_entropy >= -1e-9 && rep.mean_entropy <= ln_v + 1e-9)) {
        abort_step(round, stage, step,
                   "mean_entropy " + double_to_string(rep.mean_entropy) + " outside [0, ln|V|]");
    }
    if (!(rep.kl_value >= -1e-9)) {
        abort_step(round, stage, step, "kl_value " + double_to_string(rep.kl_value) + " negative");
    }
    if (!(rep.clipped_fraction >= 0.0 && rep.clipped_fraction <= 1.0)) {
        abort_step(round, stage, step,
                   "clipped_fraction " + double_to_string(rep.clipped_fraction) + " outside [0,1]");
    }
    if (!std::isfinite(rep.objective_value) || !std::isfinite(rep.grad_norm)) {
        abort_step(round, stage, step, "non-finite objective or gradient norm");
    }
}

// One stage of GRPO: per step, snapshot pi_old, roll out G samples for each
// of batch_size tasks, score, normalize advantages per group, take one Adam
// step on the batch-mean surrogate gradient. The reference for the KL term
// is frozen at stage start; the optimizer state is stage-local.
StageResult run_stage(PolicyParams& params, int steps, const StageSpec& spec,
                      const RunHooks* hooks) {
    if (steps < 0) {
        throw InvalidInputError("step count must be >= 0");
    }
    StageResult result;
    if (steps == 0) {
        return result;
    }
    StageConfig checked = spec.cfg;
    checked.steps = steps; // warmup borrows stage-2 settings but not its step count
    checked.validate(stage_name(spec.stage));
    if (spec.tasks.empty()) {
        throw InvalidInputError(stage_name(spec.stage) + ": task suite is empty");
    }

    const Vocabulary& vocab = spec.vocab;
    const StageConfig& cfg = spec.cfg;
    const double ln_v = std::log(static_cast<double>(vocab.size()));
    const double reward_cap = 1.0 + cfg.reward.format_bonus + 1e-9;
    const uint64_t stage_ord = u(static_cast<int>(spec.stage));
    const uint64_t round_ord = u(spec.round);

    OptimizerState opt;
    const PolicySnapshot reference(vocab, params, SnapshotRole::reference, cfg.temperature);

    for (int64_t step = 1; step <= steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        if (spec.per_step_check) {
            spec.per_step_check();
        }
        // Single update per rollout batch, so old == current at sampling time.
        const PolicySnapshot current(vocab, params, SnapshotRole::current, cfg.temperature);
        const PolicySnapshot old(vocab, params, SnapshotRole::old_policy, cfg.temperature);

        RngStream task_rng = spec.factory.stream({rng_tag::task_select, round_ord, stage_ord,
                                                  u(step)});
        Matrix grad(params.space.dim(), vocab.size());
        double sum_obj = 0.0, sum_kl = 0.0, sum_ent = 0.0, sum_clip = 0.0, sum_reward = 0.0;
        int64_t reward_count = 0;

        for (int slot = 0; slot < cfg.batch_size; ++slot) {
            const ProblemRecord& rec =
                spec.tasks[task_rng.next_below(spec.tasks.size())];
            result.task_ids.push_back(rec.task.id);

            RolloutGroup group;
            group.prompt = spec.prompt_of(rec.task);
            group.samples.reserve(cfg.group_size);
            group.rewards.reserve(cfg.group_size);
            for (int g = 0; g < cfg.group_size; ++g) {
                RngStream roll = spec.factory.stream(
                    {rng_tag::rollout, round_ord, stage_ord, u(step), u(slot), u(g)});
                group.samples.push_back(
                    sample_sequence(current, group.prompt, cfg.max_response_len, roll));
                RngStream solver_rng = spec.factory.stream(
                    {rng_tag::solver, round_ord, stage_ord, u(step), u(slot), u(g)});
                const double r = spec.reward_of(group.samples.back(), rec.task, solver_rng);
                if (!(r >= -1e-9 && r <= reward_cap)) {
                    abort_step(spec.round, spec.stage, step,
                               "reward " + double_to_string(r) + " outside [0, 1+beta]");
                }
                group.rewards.push_back(r);
                sum_reward += r;
                ++reward_count;
            }
            group.advantages = normalize_advantages(group.rewards, cfg.reg.adv_eps);

            const auto ratios = token_ratios(current, old, group);
            const auto [obj, rep] =
                clipped_objective(group, ratios, cfg.clip, cfg.reg, current, reference);
            const Matrix slot_grad =
                objective_gradient(group, ratios, cfg.clip, cfg.reg, current, reference);
            for (size_t k = 0; k < grad.data.size(); ++k) {
                grad.data[k] += slot_grad.data[k];
            }
            sum_obj += obj;
            sum_kl += rep.kl_value;
            sum_ent += rep.mean_entropy;
            sum_clip += rep.clipped_fraction;
        }

        const double inv_b = 1.0 / cfg.batch_size;
        for (double& x : grad.data) {
            x *= inv_b;
        }
        UpdateReport rep;
        rep.objective_value = sum_obj * inv_b;
        rep.policy_loss = -rep.objective_value;
        rep.kl_value = sum_kl * inv_b;
        rep.mean_entropy = sum_ent * inv_b;
        rep.clipped_fraction = sum_clip * inv_b;
        rep.grad_norm = grad_l2_norm(grad);
        if (hooks && hooks->tamper_report) {
            hooks->tamper_report(spec.round, spec.stage, step, rep);
        }
        check_report(rep, ln_v, spec.round, spec.stage, step);

        apply_update(params, grad, opt, cfg.lr);

        MetricsRow row;
        row.round = spec.round;
        row.stage = spec.stage;
        row.step = step;
        row.mean_reward = sum_reward / static_cast<double>(reward_count);
        row.mean_entropy = rep.mean_entropy;
        row.kl_value = rep.kl_value;
        row.clipped_fraction = rep.clipped_fraction;
        row.grad_norm = rep.grad_norm;
        row.wall_ms = ms_since(t0);
        result.rows.push_back(row);
        if (hooks && hooks->on_row) {
            hooks->on_row(row);
        }
    }
    return result;
}

} // namespace

RoundState begin_round(const Vocabulary& vocab, const PolicyParams& prev, int round_index,
                       double base_temperature, double solver_temperature) {
    if (round_index < 0) {
        throw InvalidInputError("round index must be >= 0");
    }
    PolicySnapshot base(vocab, prev, SnapshotRole::current, base_temperature);
    PolicySnapshot solver(vocab, prev, SnapshotRole::solver, solver_temperature);
    solver.freeze();
    return RoundState(round_index, std::move(base), prev, std::move(solver));
}

StageResult warmup_format(const Vocabulary& vocab, PolicyParams& params,
                          const std::vector<ProblemRecord>& tasks, int steps,
                          const StageConfig& cfg, const RngFactory& factory,
                          const RunHooks* hooks) {
    StageSpec spec{
        vocab,
        Stage::warmup,
        0,
        cfg,
        factory,
        tasks,
        full_prompt,
        [](const SequenceSample& s, const TaskInstance&, RngStream&) {
            return static_cast<double>(format_reward(s.tokens));
        },
        nullptr,
    };
    return run_stage(params, steps, spec, hooks);
}

StageResult train_stage1(RoundState& state, const std::vector<ProblemRecord>& tasks,
                         const StageConfig& cfg, const RngFactory& factory,
                         const RunHooks* hooks) {
    if (state.phase != RoundPhase::stage1) {
        throw InvalidInputError("train_stage1 expects a fresh round state");
    }
    if (!state.solver.is_frozen()) {
        throw InvalidInputError("train_stage1 requires a frozen solver");
    }
    state.solver.verify_frozen();
    StageSpec spec{
        state.base.vocab,
        Stage::stage1,
        state.round_index,
        cfg,
        factory,
        tasks,
        [](const TaskInstance& task) { return mask(task).tokens; },
        [&](const SequenceSample& analysis, const TaskInstance& task, RngStream& rng) {
            return context_reward(analysis, task, state.solver, cfg.reward, rng,
                                  cfg.max_response_len);
        },
        [&]() { state.solver.verify_frozen(); },
    };
    StageResult result = run_stage(state.thinker, cfg.steps, spec, hooks);
    state.solver.verify_frozen();
    state.phase = RoundPhase::stage2;
    return result;
}

StageResult train_stage2(const Vocabulary& vocab, PolicyParams& params,
                         const std::vector<ProblemRecord>& tasks, const StageConfig& cfg,
                         const RngFactory& factory, int round, const RunHooks* hooks) {
    StageSpec spec{
        vocab,
        Stage::stage2,
        round,
        cfg,
        factory,
        tasks,
        full_prompt,
        [&](const SequenceSample& s, const TaskInstance& task, RngStream&) {
            return app_reward(s.tokens, task.gold, cfg.reward);
        },
        nullptr,
    };
    return run_stage(params, cfg.steps, spec, hooks);
}

namespace {

void write_stage_checkpoint(const std::string& out_dir, const std::string& name,
                            const Vocabulary& vocab, const PolicyParams& params,
                            double temperature, uint64_t seed, int round,
                            const std::string& stage, int64_t step) {
    Checkpoint ckpt;
    ckpt.vocab = vocab;
    ckpt.params = params;
    ckpt.temperature = temperature;
    ckpt.rng_root = seed;
    ckpt.round = round;
    ckpt.stage = stage;
    ckpt.step = step;
    save_checkpoint(ckpt, out_dir + "/" + name + ".ckpt.json");
}

std::vector<ProblemRecord> fetch_generator_tasks(const RunConfig& cfg, const Vocabulary& vocab) {
    std::vector<ProblemRecord> fetched;
    GenClientConfig gen;
    gen.base_url = cfg.curriculum.generator_url;
    nlohmann::json payload = {{"digits", cfg.curriculum.digits},
                              {"letters", cfg.curriculum.letters}};
    for (const std::string& family : cfg.curriculum.families) {
        payload["family"] = family;
        const auto tasks = fetch_external("from_knowledge", payload.dump(),
                                          cfg.curriculum.suite_size, family, gen, vocab);
        for (const TaskInstance& task : tasks) {
            ProblemRecord rec;
            rec.task = task;
            rec.round_added = 0;
            rec.provenance = Provenance::external;
            fetched.push_back(std::move(rec));
        }
    }
    return fetched;
}

} // namespace

RunResult run(const RunConfig& cfg, const std::string& out_dir, const RunHooks* hooks) {
    cfg.validate();
    std::filesystem::create_directories(out_dir);

    const Vocabulary vocab = Vocabulary::make(cfg.curriculum.digits, cfg.curriculum.letters);
    FeatureSpace space;
    space.vocab_size = vocab.size();
    const RngFactory factory(cfg.seed);

    RunResult result;
    result.vocab = vocab;

    RunManifest manifest;
    manifest.config_json = config_to_json(cfg);
    manifest.seed = cfg.seed;
    manifest.code_version = kCodeVersion;
    manifest.vocab_digest = vocab.digest();
    manifest.start_time = iso_utc_now();
    save_manifest(manifest, out_dir + "/manifest.json");

    MetricsWriter writer(out_dir + "/metrics.csv");
    RunHooks inner;
    inner.tamper_report = hooks ? hooks->tamper_report : nullptr;
    inner.on_row = [&](const MetricsRow& row) {
        writer.append(row);
        result.rows.push_back(row);
        if (hooks && hooks->on_row) {
            hooks->on_row(row);
        }
    };

    RngStream init_rng = factory.stream({rng_tag::init_policy});
    PolicyParams params = init_policy(vocab, space, init_rng);
    write_stage_checkpoint(out_dir, "init", vocab, params, cfg.stage2.temperature, cfg.seed, 0,
                           "init", 0);

    PoolStore store;
    store.band_low = cfg.curriculum.band_low;
    store.band_high = cfg.curriculum.band_high;
    RngStream knowledge_rng = factory.stream({rng_tag::curriculum, 0});
    store.knowledge = make_knowledge_pool(vocab, cfg.curriculum.knowledge_records, knowledge_rng);

    std::vector<ProblemRecord> imported;
    if (!cfg.curriculum.seed_pool_path.empty()) {
        imported = import_pool(cfg.curriculum.seed_pool_path, vocab);
    }
    if (!cfg.curriculum.generator_url.empty()) {
        for (ProblemRecord& rec : fetch_generator_tasks(cfg, vocab)) {
            imported.push_back(std::move(rec));
        }
    }

    RngStream suite_rng = factory.stream({rng_tag::curriculum, 1});
    std::vector<ProblemRecord> suite =
        build_task_suite(store, vocab, space, cfg.curriculum.families, cfg.curriculum.suite_size,
                         cfg.curriculum.variant_fraction, 0, suite_rng, imported);

    warmup_format(vocab, params, suite, cfg.warmup_steps, cfg.stage2, factory, &inner);
    write_stage_checkpoint(out_dir, "warmup", vocab, params, cfg.stage2.temperature, cfg.seed, 0,
                           "warmup", cfg.warmup_steps);

    for (int t = 0; t < cfg.rounds; ++t) {
        if (t > 0) {
            RngStream round_rng = factory.stream({rng_tag::curriculum, u(1 + t)});
            suite = build_task_suite(store, vocab, space, cfg.curriculum.families,
                                     cfg.curriculum.suite_size, cfg.curriculum.variant_fraction,
                                     t, round_rng);
        }

        save_pool(suite, out_dir + "/suite_round" + std::to_string(t) + ".ldjson");

        RoundState state = begin_round(vocab, params, t, cfg.stage2.temperature,
                                       cfg.stage1.reward.solver_temperature);
        HandoffTrace trace;
        trace.round = t;
        trace.base_digest = state.base.params.digest();
        trace.thinker_start_digest = state.thinker.digest();
        trace.solver_start_digest = state.solver.params.digest();

        if (cfg.mode == RunMode::doge) {
            train_stage1(state, suite, cfg.stage1, factory, &inner);
            write_stage_checkpoint(out_dir, "round" + std::to_string(t) + "_stage1", vocab,
                                   state.thinker, cfg.stage1.temperature, cfg.seed, t, "stage1",
                                   cfg.stage1.steps);
        }
        trace.solver_end_digest = state.solver.params.digest();
        params = state.thinker;
        trace.stage1_end_digest = params.digest();
        trace.stage2_start_digest = params.digest();

        StageResult s2 = train_stage2(vocab, params, suite, cfg.stage2, factory, t, &inner);
        trace.stage2_end_digest = params.digest();
        result.stage2_task_ids.push_back(std::move(s2.task_ids));
        result.handoffs.push_back(trace);
        write_stage_checkpoint(out_dir, "round" + std::to_string(t) + "_stage2", vocab, params,
                               cfg.stage2.temperature, cfg.seed, t, "stage2", cfg.stage2.steps);

        // Curriculum refresh: measure the suite with the just-trained policy
        // and fold banded records into the seed pool.
        std::vector<ProblemRecord> measured = suite;
        RngStream measure_rng = factory.stream({rng_tag::measure, u(t)});
        const PolicySnapshot measure_policy(vocab, params, SnapshotRole::current,
                                            cfg.eval.temperature);
        measure_pass_rates(measure_policy, measured, cfg.curriculum.measure_k, measure_rng,
                           cfg.eval.max_response_len);
        update_seed_pool(store, measured, t);
        save_pool(store.seeds, out_dir + "/pool.ldjson");

        const auto eval_t0 = std::chrono::steady_clock::now();
        RngStream eval_rng = factory.stream({rng_tag::eval, u(t)});
        const PolicySnapshot eval_policy(vocab, params, SnapshotRole::current,
                                         cfg.eval.temperature);
        std::vector<TaskInstance> eval_tasks;
        eval_tasks.reserve(suite.size());
        for (const ProblemRecord& rec : suite) {
            eval_tasks.push_back(rec.task);
        }
        result.final_eval =
            mean_at_k(eval_policy, eval_tasks, cfg.eval.k, eval_rng, cfg.eval.max_response_len);

        MetricsRow eval_row;
        eval_row.round = t;
        eval_row.stage = Stage::eval;
        eval_row.step = 0;
        eval_row.pass_rate_eval = result.final_eval.aggregate;
        eval_row.wall_ms = ms_since(eval_t0);
        inner.on_row(eval_row);
    }

    result.final_params = params;
    write_stage_checkpoint(out_dir, "final", vocab, params, cfg.stage2.temperature, cfg.seed,
                           cfg.rounds - 1, "final", 0);
    writer.finalize();
    manifest.end_time = iso_utc_now();
    save_manifest(manifest, out_dir + "/manifest.json");
    return result;
}

} // namespace doge
