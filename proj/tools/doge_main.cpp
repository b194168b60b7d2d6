#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "doge/checkpoint.hpp"
#include "doge/config.hpp"
#include "doge/curriculum.hpp"
#include "doge/errors.hpp"
#include "doge/gradcheck.hpp"
#include "doge/metrics.hpp"
#include "doge/orchestrator.hpp"
#include "doge/rewards.hpp"

namespace {

using namespace doge;

struct TrainFlags {
    std::string config;
    std::string out_dir;
    std::string mode;
    uint64_t seed = 0;
    bool seed_set = false;
    bool inject_fault = false;
};

int cmd_train(const TrainFlags& flags) {
    RunConfig cfg = load_config(flags.config);
    if (!flags.mode.empty()) {
        cfg.mode = mode_from_name(flags.mode);
    }
    if (flags.seed_set) {
        cfg.seed = flags.seed;
    }
    if (const char* url = std::getenv("DOGE_GEN_URL"); url != nullptr && url[0] != '\0') {
        cfg.curriculum.generator_url = url;
    }

    RunHooks hooks;
    if (flags.inject_fault) {
        hooks.tamper_report = [](int, Stage, int64_t step, UpdateReport& rep) {
            if (step == 1) {
                rep.mean_entropy = -1.0;
            }
        };
    }
    const RunResult result = run(cfg, flags.out_dir, &hooks);

    nlohmann::json summary = {
        {"out_dir", flags.out_dir},
        {"rounds", cfg.rounds},
        {"mode", mode_name(cfg.mode)},
        {"final_eval", result.final_eval.aggregate},
    };
    std::printf("%s\n", summary.dump(2).c_str());
    return 0;
}

struct EvalFlags {
    std::string checkpoint;
    std::string tasks;
    int k = 4;
    double temperature = 0.7;
    int max_response_len = 12;
    uint64_t seed = 1;
};

int cmd_eval(const EvalFlags& flags) {
    if (flags.k < 1) {
        throw InvalidInputError("eval k must be >= 1");
    }
    const Checkpoint ckpt = load_checkpoint(flags.checkpoint);
    const std::vector<ProblemRecord> records = load_pool(flags.tasks);
    if (records.empty()) {
        throw InvalidInputError("eval task pool is empty");
    }
    std::vector<TaskInstance> tasks;
    tasks.reserve(records.size());
    for (const ProblemRecord& rec : records) {
        check_oracle_consistency(rec.task, ckpt.vocab);
        tasks.push_back(rec.task);
    }

    const PolicySnapshot policy(ckpt.vocab, ckpt.params, SnapshotRole::current,
                                flags.temperature);
    RngStream rng(flags.seed);
    const MeanAtK mk = mean_at_k(policy, tasks, flags.k, rng, flags.max_response_len);

    std::map<std::string, std::pair<double, int>> by_family;
    for (size_t i = 0; i < tasks.size(); ++i) {
        auto& acc = by_family[tasks[i].family];
        acc.first += mk.per_task[i];
        acc.second += 1;
    }
    nlohmann::json out = {
        {"aggregate", mk.aggregate},
        {"k", flags.k},
        {"tasks", tasks.size()},
        {"per_family", nlohmann::json::object()},
    };
    for (const auto& [family, acc] : by_family) {
        out["per_family"][family] = acc.first / acc.second;
    }
    std::printf("%s\n", out.dump(2).c_str());
    return 0;
}

int cmd_gradcheck(const GradCheckOptions& opts) {
    const GradCheckResult result = run_gradcheck(opts);
    std::printf("max_rel_err=%.6g instances=%d flat_tokens=%lld slope_tokens=%lld\n",
                result.max_rel_err, result.instances,
                static_cast<long long>(result.flat_tokens),
                static_cast<long long>(result.slope_tokens));
    if (result.max_rel_err > 1e-5) {
        std::printf("worst_instance=%s\n", result.worst_instance_json.c_str());
        return 1;
    }
    return 0;
}

struct ReportFlags {
    std::vector<std::string> runs;
    std::string out;
    double alpha = 0.1;
};

int cmd_report(const ReportFlags& flags) {
    std::vector<std::string> warnings;
    write_report_ema(flags.runs, flags.alpha, flags.out, &warnings);
    for (const std::string& w : warnings) {
        std::fprintf(stderr, "warning: %s\n", w.c_str());
    }
    std::printf("wrote %s\n", flags.out.c_str());
    return 0;
}

struct PoolFlags {
    std::string config = "toy";
    std::string in_path;
    std::string pool_path;
    std::string out_path;
    std::string checkpoint;
    int count = 0;
    int k = 4;
    int round = 0;
    double temperature = 0.7;
    int max_response_len = 12;
    double band_low = -1.0;
    double band_high = -1.0;
    uint64_t seed = 1;
};

int cmd_pool_synth(const PoolFlags& flags) {
    const RunConfig cfg = load_config(flags.config);
    const Vocabulary vocab = Vocabulary::make(cfg.curriculum.digits, cfg.curriculum.letters);
    FeatureSpace space;
    space.vocab_size = vocab.size();

    const RngFactory factory(flags.seed);
    PoolStore store;
    store.band_low = cfg.curriculum.band_low;
    store.band_high = cfg.curriculum.band_high;
    RngStream knowledge_rng = factory.stream({rng_tag::curriculum, 0});
    store.knowledge = make_knowledge_pool(vocab, cfg.curriculum.knowledge_records, knowledge_rng);

    const int count = flags.count > 0 ? flags.count : cfg.curriculum.suite_size;
    RngStream suite_rng = factory.stream({rng_tag::curriculum, 1});
    const auto suite = build_task_suite(store, vocab, space, cfg.curriculum.families, count,
                                        cfg.curriculum.variant_fraction, 0, suite_rng);
    save_pool(suite, flags.out_path);
    std::printf("{\"synthesized\": %zu}\n", suite.size());
    return 0;
}

int cmd_pool_measure(const PoolFlags& flags) {
    const Checkpoint ckpt = load_checkpoint(flags.checkpoint);
    std::vector<ProblemRecord> records = load_pool(flags.in_path);
    const PolicySnapshot policy(ckpt.vocab, ckpt.params, SnapshotRole::current,
                                flags.temperature);
    RngStream rng(flags.seed);
    measure_pass_rates(policy, records, flags.k, rng, flags.max_response_len);
    save_pool(records, flags.out_path);
    std::printf("{\"measured\": %zu, \"k\": %d}\n", records.size(), flags.k);
    return 0;
}

int cmd_pool_update(const PoolFlags& flags) {
    PoolStore store;
    if (flags.band_low >= 0.0) {
        store.band_low = flags.band_low;
    }
    if (flags.band_high >= 0.0) {
        store.band_high = flags.band_high;
    }
    store.validate_band();
    if (!flags.pool_path.empty()) {
        store.seeds = load_pool(flags.pool_path);
    }
    const std::vector<ProblemRecord> measured = load_pool(flags.in_path);
    update_seed_pool(store, measured, flags.round);
    save_pool(store.seeds, flags.out_path);
    std::printf("{\"retained\": %zu}\n", store.seeds.size());
    return 0;
}

int cmd_pool_import(const PoolFlags& flags) {
    const RunConfig cfg = load_config(flags.config);
    const Vocabulary vocab = Vocabulary::make(cfg.curriculum.digits, cfg.curriculum.letters);
    std::vector<std::string> rejected;
    const auto records = import_pool(flags.in_path, vocab, &rejected);
    save_pool(records, flags.out_path);
    for (const std::string& reason : rejected) {
        std::fprintf(stderr, "rejected: %s\n", reason.c_str());
    }
    std::printf("{\"imported\": %zu, \"rejected\": %zu}\n", records.size(), rejected.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-stage decoupled GRPO trainer on synthetic verifiable tasks"};
    app.require_subcommand(1);

    TrainFlags train_flags;
    CLI::App* train = app.add_subcommand("train", "Run the full training loop");
    train->add_option("--config", train_flags.config, "Preset name or config JSON path")
        ->required();
    train->add_option("--out", train_flags.out_dir, "Output directory")->required();
    train->add_option("--mode", train_flags.mode, "doge or baseline")
        ->check(CLI::IsMember({"doge", "baseline"}));
    train->add_option("--seed", train_flags.seed, "Root seed override")
        ->each([&](const std::string&) { train_flags.seed_set = true; });
    train->add_flag("--inject-fault", train_flags.inject_fault)->group("");

    EvalFlags eval_flags;
    CLI::App* eval = app.add_subcommand("eval", "mean@k of a checkpoint on a task pool");
    eval->add_option("--checkpoint", eval_flags.checkpoint)->required();
    eval->add_option("--tasks", eval_flags.tasks, "Task pool (LDJSON)")->required();
    eval->add_option("--k", eval_flags.k);
    eval->add_option("--temperature", eval_flags.temperature);
    eval->add_option("--max-response-len", eval_flags.max_response_len);
    eval->add_option("--seed", eval_flags.seed);

    GradCheckOptions gc;
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check");
    gradcheck->add_option("--trials", gc.trials);
    gradcheck->add_option("--seed", gc.seed);
    gradcheck->add_flag("--corrupt", gc.corrupt)->group("");

    ReportFlags report_flags;
    CLI::App* report = app.add_subcommand("report", "EMA entropy report across runs");
    report->add_option("--out", report_flags.out)->required();
    report->add_option("--alpha", report_flags.alpha, "EMA smoothing in (0,1]");
    report->add_option("runs", report_flags.runs, "metrics.csv paths")->required();

    PoolFlags pool_flags;
    CLI::App* pool = app.add_subcommand("pool", "Seed-problem pool operations");
    pool->require_subcommand(1);
    CLI::App* synth = pool->add_subcommand("synth", "Synthesize a fresh task pool");
    synth->add_option("--config", pool_flags.config);
    synth->add_option("--out", pool_flags.out_path)->required();
    synth->add_option("--count", pool_flags.count);
    synth->add_option("--seed", pool_flags.seed);
    CLI::App* measure = pool->add_subcommand("measure", "Measure mean@k pass rates");
    measure->add_option("--checkpoint", pool_flags.checkpoint)->required();
    measure->add_option("--in", pool_flags.in_path)->required();
    measure->add_option("--out", pool_flags.out_path)->required();
    measure->add_option("--k", pool_flags.k);
    measure->add_option("--temperature", pool_flags.temperature);
    measure->add_option("--max-response-len", pool_flags.max_response_len);
    measure->add_option("--seed", pool_flags.seed);
    CLI::App* update = pool->add_subcommand("update", "Fold measured records into the band");
    update->add_option("--in", pool_flags.in_path)->required();
    update->add_option("--pool", pool_flags.pool_path, "Existing pool to update");
    update->add_option("--out", pool_flags.out_path)->required();
    update->add_option("--band-low", pool_flags.band_low);
    update->add_option("--band-high", pool_flags.band_high);
    update->add_option("--round", pool_flags.round);
    CLI::App* import = pool->add_subcommand("import", "Lenient external pool import");
    import->add_option("--config", pool_flags.config);
    import->add_option("--in", pool_flags.in_path)->required();
    import->add_option("--out", pool_flags.out_path)->required();

    try {
        app.parse(argc, argv);
        if (*train) return cmd_train(train_flags);
        if (*eval) return cmd_eval(eval_flags);
        if (*gradcheck) return cmd_gradcheck(gc);
        if (*report) return cmd_report(report_flags);
        if (*synth) return cmd_pool_synth(pool_flags);
        if (*measure) return cmd_pool_measure(pool_flags);
        if (*update) return cmd_pool_update(pool_flags);
        if (*import) return cmd_pool_import(pool_flags);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const InvalidInputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "abort: %s\n", e.what());
        return 3;
    } catch (const ContractError& e) {
        std::fprintf(stderr, "abort: %s\n", e.what());
        return 3;
    }
}
