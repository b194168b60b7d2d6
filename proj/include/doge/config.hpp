#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "doge/grpo.hpp"
#include "doge/rewards.hpp"

namespace doge {

// One training stage's hyperparameters.
struct StageConfig {
    int steps = 0;
    int batch_size = 0;
    int group_size = 0;
    double temperature = 1.0;
    ClipConfig clip;
    RegularizerConfig reg;
    RewardConfig reward;
    int max_response_len = 12;
    double lr = 0.01;

    void validate(const std::string& where) const;
};

struct CurriculumConfig {
    int digits = 10;
    int letters = 6;
    int suite_size = 12;
    int knowledge_records = 64;
    double variant_fraction = 0.5;
    double band_low = 0.1;
    double band_high = 0.3;
    int measure_k = 4;
    std::vector<std::string> families{"lookup", "arith"};
    std::string seed_pool_path; // optional LDJSON import
    std::string generator_url;  // optional external generator

    void validate() const;
};

struct EvalConfig {
    int k = 4;
    double temperature = 0.7;
    int max_response_len = 12;

    void validate() const;
};

enum class RunMode { doge, baseline };

std::string mode_name(RunMode m);
RunMode mode_from_name(const std::string& name);

struct RunConfig {
    int rounds = 1;
    RunMode mode = RunMode::doge;
    uint64_t seed = 1;
    int warmup_steps = 15;
    StageConfig stage1;
    StageConfig stage2;
    CurriculumConfig curriculum;
    EvalConfig eval;

    void validate() const;
};

// Built-in presets: "toy" (desk-scale defaults), "paper-3b" and "paper-7b"
// (the published run hyperparameters).
RunConfig preset_config(const std::string& name);

// Strict parse: unknown keys, missing keys, and wrong types are
// InvalidInputError with the offending dotted path in the message.
RunConfig config_from_json(const std::string& text);
std::string config_to_json(const RunConfig& cfg);

// `source` is a preset name or a JSON file path.
RunConfig load_config(const std::string& source);

} // namespace doge
