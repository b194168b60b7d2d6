#include "doge/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

#include "doge/errors.hpp"

namespace doge {

using nlohmann::json;

void StageConfig::validate(const std::string& where) const {
    auto fail = [&](const std::string& msg) { throw InvalidInputError(where + ": " + msg); };
    if (steps < 0) fail("steps must be >= 0");
    if (batch_size < 1) fail("batch_size must be >= 1");
    if (group_size < 1) fail("group_size must be >= 1");
    if (!(temperature > 0.0)) fail("temperature must be > 0");
    if (max_response_len < 1) fail("max_response_len must be >= 1");
    if (!(lr > 0.0)) fail("lr must be > 0");
    clip.validate();
    reg.validate();
    reward.validate();
}

void CurriculumConfig::validate() const {
    if (digits < 1 || digits > 10) throw InvalidInputError("curriculum.digits must be in 1..10");
    if (letters < 2 || letters > 26) {
        throw InvalidInputError("curriculum.letters must be in 2..26");
    }
    if (suite_size < 1) throw InvalidInputError("curriculum.suite_size must be >= 1");
    if (knowledge_records < 1) {
        throw InvalidInputError("curriculum.knowledge_records must be >= 1");
    }
    if (!(variant_fraction >= 0.0 && variant_fraction <= 1.0)) {
        throw InvalidInputError("curriculum.variant_fraction must be in [0, 1]");
    }
    if (!(0.0 <= band_low && band_low < band_high && band_high <= 1.0)) {
        throw InvalidInputError("curriculum.band must satisfy 0 <= low < high <= 1");
    }
    if (measure_k < 1) throw InvalidInputError("curriculum.measure_k must be >= 1");
    if (families.empty()) throw InvalidInputError("curriculum.families must not be empty");
    for (const auto& f : families) {
        if (f != "lookup" && f != "arith") {
            throw InvalidInputError("curriculum.families: unknown family '" + f + "'");
        }
    }
}

void EvalConfig::validate() const {
    if (k < 1) throw InvalidInputError("eval.k must be >= 1");
    if (!(temperature > 0.0)) throw InvalidInputError("eval.temperature must be > 0");
    if (max_response_len < 1) throw InvalidInputError("eval.max_response_len must be >= 1");
}

std::string mode_name(RunMode m) {
    return m == RunMode::doge ? "doge" : "baseline";
}

RunMode mode_from_name(const std::string& name) {
    if (name == "doge") return RunMode::doge;
    if (name == "baseline") return RunMode::baseline;
    throw InvalidInputError("mode must be 'doge' or 'baseline', got '" + name + "'");
}

void RunConfig::validate() const {
    if (rounds < 1) throw InvalidInputError("rounds must be >= 1");
    if (warmup_steps < 0) throw InvalidInputError("warmup_steps must be >= 0");
    stage1.validate("stage1");
    stage2.validate("stage2");
    curriculum.validate();
    eval.validate();
}

RunConfig preset_config(const std::string& name) {
    RunConfig cfg;

    // Desk-scale defaults; stage shapes follow the published setup, sizes do
    // not. The lr and kl_coeff are tuned for the featurized toy policy: the
    // stronger KL pull toward the stage-start reference keeps enough entropy
    // alive that near-deterministic wrong answers can still escape their
    // zero-variance groups.
    cfg.rounds = 1;
    cfg.mode = RunMode::doge;
    cfg.seed = 1;
    cfg.warmup_steps = 15;

    cfg.stage1.steps = 100;
    cfg.stage1.batch_size = 16;
    cfg.stage1.group_size = 4;
    cfg.stage1.temperature = 0.9;
    cfg.stage1.clip = {0.2, 0.24};
    cfg.stage1.reg = {0.02, 1e-6};
    cfg.stage1.reward = {0.1, 4, 0.9};
    cfg.stage1.max_response_len = 12;
    cfg.stage1.lr = 0.05;

    cfg.stage2.steps = 150;
    cfg.stage2.batch_size = 16;
    cfg.stage2.group_size = 8;
    cfg.stage2.temperature = 1.0;
    cfg.stage2.clip = {0.2, 0.28};
    cfg.stage2.reg = {0.02, 1e-6};
    cfg.stage2.reward = {0.1, 4, 0.9};
    cfg.stage2.max_response_len = 12;
    cfg.stage2.lr = 0.05;

    if (name == "toy") return cfg;

    if (name == "paper-3b" || name == "paper-7b") {
        const bool is_7b = name == "paper-7b";
        cfg.rounds = 3;
        cfg.stage1.steps = is_7b ? 150 : 100;
        cfg.stage1.reg = {1e-3, 1e-6};
        cfg.stage2.reg = {1e-3, 1e-6};
        cfg.stage1.batch_size = is_7b ? 48 : 64;
        cfg.stage1.lr = 1e-6;
        cfg.stage1.max_response_len = 4096;
        cfg.stage2.steps = 150;
        cfg.stage2.batch_size = is_7b ? 48 : 64;
        cfg.stage2.lr = 1e-6;
        cfg.stage2.max_response_len = 4096;
        cfg.eval.max_response_len = 4096;
        return cfg;
    }
    throw InvalidInputError("unknown preset '" + name + "' (try toy, paper-3b, paper-7b)");
}

namespace {

// Strict object walker: every key must be consumed, every consumed key must
// exist with the right type. Paths in errors are dotted ("stage1.clip.eps_low").
class StrictObject {
public:
    StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw InvalidInputError(path_ + ": expected a JSON object");
    }

    ~StrictObject() = default;

    const json& get(const char* key) {
        auto it = j_.find(key);
        if (it == j_.end()) throw InvalidInputError(path_ + "." + key + ": missing");
        seen_.insert(key);
        return *it;
    }

    const json* get_optional(const char* key) {
        auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        seen_.insert(key);
        return &*it;
    }

    double number(const char* key) {
        const json& v = get(key);
        if (!v.is_number()) throw InvalidInputError(path_ + "." + key + ": expected a number");
        return v.get<double>();
    }

    int integer(const char* key) {
        const json& v = get(key);
        if (!v.is_number_integer()) {
            throw InvalidInputError(path_ + "." + key + ": expected an integer");
        }
        return v.get<int>();
    }

    std::string text(const char* key) {
        const json& v = get(key);
        if (!v.is_string()) throw InvalidInputError(path_ + "." + key + ": expected a string");
        return v.get<std::string>();
    }

    void finish() {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!seen_.count(it.key())) {
                throw InvalidInputError(path_ + "." + it.key() + ": unknown key");
            }
        }
    }

    const std::string& path() const { return path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

StageConfig parse_stage(const json& j, const std::string& path) {
    StrictObject o(j, path);
    StageConfig s;
    s.steps = o.integer("steps");
    s.batch_size = o.integer("batch_size");
    s.group_size = o.integer("group_size");
    s.temperature = o.number("temperature");
    {
        StrictObject c(o.get("clip"), path + ".clip");
        s.clip.eps_low = c.number("eps_low");
        s.clip.eps_high = c.number("eps_high");
        c.finish();
    }
    s.reg.kl_coeff = o.number("kl_coeff");
    s.reg.adv_eps = o.number("adv_eps");
    s.reward.format_bonus = o.number("format_bonus");
    s.reward.solver_samples = o.integer("solver_samples");
    s.reward.solver_temperature = o.number("solver_temperature");
    s.max_response_len = o.integer("max_response_len");
    s.lr = o.number("lr");
    o.finish();
    return s;
}

CurriculumConfig parse_curriculum(const json& j) {
    StrictObject o(j, "curriculum");
    CurriculumConfig c;
    c.digits = o.integer("digits");
    c.letters = o.integer("letters");
    c.suite_size = o.integer("suite_size");
    c.knowledge_records = o.integer("knowledge_records");
    c.variant_fraction = o.number("variant_fraction");
    {
        const json& band = o.get("band");
        if (!band.is_array() || band.size() != 2 || !band[0].is_number() ||
            !band[1].is_number()) {
            throw InvalidInputError("curriculum.band: expected [low, high]");
        }
        c.band_low = band[0].get<double>();
        c.band_high = band[1].get<double>();
    }
    c.measure_k = o.integer("measure_k");
    {
        const json& fams = o.get("families");
        if (!fams.is_array() || fams.empty()) {
            throw InvalidInputError("curriculum.families: expected a nonempty array");
        }
        c.families.clear();
        for (const auto& f : fams) {
            if (!f.is_string()) {
                throw InvalidInputError("curriculum.families: entries must be strings");
            }
            c.families.push_back(f.get<std::string>());
        }
    }
    if (const json* v = o.get_optional("seed_pool_path")) {
        if (!v->is_null()) c.seed_pool_path = v->get<std::string>();
    }
    if (const json* v = o.get_optional("generator_url")) {
        if (!v->is_null()) c.generator_url = v->get<std::string>();
    }
    o.finish();
    return c;
}

} // namespace

RunConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw InvalidInputError(std::string("config: invalid JSON: ") + e.what());
    }
    StrictObject o(j, "config");
    RunConfig cfg;
    cfg.rounds = o.integer("rounds");
    cfg.mode = mode_from_name(o.text("mode"));
    {
        const json& seed = o.get("seed");
        if (!seed.is_number_integer() && !seed.is_number_unsigned()) {
            throw InvalidInputError("config.seed: expected an integer");
        }
        cfg.seed = seed.get<uint64_t>();
    }
    cfg.warmup_steps = o.integer("warmup_steps");
    cfg.stage1 = parse_stage(o.get("stage1"), "stage1");
    cfg.stage2 = parse_stage(o.get("stage2"), "stage2");
    cfg.curriculum = parse_curriculum(o.get("curriculum"));
    {
        StrictObject e(o.get("eval"), "eval");
        cfg.eval.k = e.integer("k");
        cfg.eval.temperature = e.number("temperature");
        cfg.eval.max_response_len = e.integer("max_response_len");
        e.finish();
    }
    o.finish();
    cfg.validate();
    return cfg;
}

namespace {

json stage_to_json(const StageConfig& s) {
    json j;
    j["steps"] = s.steps;
    j["batch_size"] = s.batch_size;
    j["group_size"] = s.group_size;
    j["temperature"] = s.temperature;
    j["clip"] = {{"eps_low", s.clip.eps_low}, {"eps_high", s.clip.eps_high}};
    j["kl_coeff"] = s.reg.kl_coeff;
    j["adv_eps"] = s.reg.adv_eps;
    j["format_bonus"] = s.reward.format_bonus;
    j["solver_samples"] = s.reward.solver_samples;
    j["solver_temperature"] = s.reward.solver_temperature;
    j["max_response_len"] = s.max_response_len;
    j["lr"] = s.lr;
    return j;
}

} // namespace

std::string config_to_json(const RunConfig& cfg) {
    json j;
    j["rounds"] = cfg.rounds;
    j["mode"] = mode_name(cfg.mode);
    j["seed"] = cfg.seed;
    j["warmup_steps"] = cfg.warmup_steps;
    j["stage1"] = stage_to_json(cfg.stage1);
    j["stage2"] = stage_to_json(cfg.stage2);
    json cur;
    cur["digits"] = cfg.curriculum.digits;
    cur["letters"] = cfg.curriculum.letters;
    cur["suite_size"] = cfg.curriculum.suite_size;
    cur["knowledge_records"] = cfg.curriculum.knowledge_records;
    cur["variant_fraction"] = cfg.curriculum.variant_fraction;
    cur["band"] = {cfg.curriculum.band_low, cfg.curriculum.band_high};
    cur["measure_k"] = cfg.curriculum.measure_k;
    cur["families"] = cfg.curriculum.families;
    cur["seed_pool_path"] = cfg.curriculum.seed_pool_path.empty()
                                ? json(nullptr)
                                : json(cfg.curriculum.seed_pool_path);
    cur["generator_url"] = cfg.curriculum.generator_url.empty()
                               ? json(nullptr)
                               : json(cfg.curriculum.generator_url);
    j["curriculum"] = cur;
    j["eval"] = {{"k", cfg.eval.k},
                 {"temperature", cfg.eval.temperature},
                 {"max_response_len", cfg.eval.max_response_len}};
    return j.dump(2);
}

RunConfig load_config(const std::string& source) {
    if (source == "toy" || source == "paper-3b" || source == "paper-7b") {
        return preset_config(source);
    }
    std::ifstream in(source, std::ios::binary);
    if (!in) throw IoError("config: cannot open " + source);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return config_from_json(text);
}

} // namespace doge
