#include "doge/curriculum.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "doge/errors.hpp"
#include "doge/rewards.hpp"
#include "doge/util.hpp"

namespace doge {

using nlohmann::json;

std::string provenance_name(Provenance p) {
    switch (p) {
        case Provenance::knowledge_pool: return "knowledge_pool";
        case Provenance::variant: return "variant";
        case Provenance::external: return "external";
        case Provenance::seed_init: return "seed_init";
    }
    throw InvalidInputError("unknown provenance value");
}

Provenance provenance_from_name(const std::string& name) {
    if (name == "knowledge_pool") return Provenance::knowledge_pool;
    if (name == "variant") return Provenance::variant;
    if (name == "external") return Provenance::external;
    if (name == "seed_init") return Provenance::seed_init;
    throw InvalidInputError("unknown provenance name: " + name);
}

void PoolStore::validate_band() const {
    if (!(0.0 <= band_low && band_low < band_high && band_high <= 1.0)) {
        throw InvalidInputError("pool band must satisfy 0 <= low < high <= 1");
    }
}

std::string derive_task_id(const std::string& family, std::span<const TokenId> context,
                           std::span<const TokenId> question, std::span<const TokenId> gold) {
    uint64_t h = hash_tokens(context);
    h = fnv1a64(question.data(), question.size() * sizeof(TokenId), h);
    h = fnv1a64(gold.data(), gold.size() * sizeof(TokenId), h);
    char buf[24];
    std::snprintf(buf, sizeof(buf), "-%016llx", static_cast<unsigned long long>(h));
    return family + buf;
}

namespace {

std::string task_id(const std::string& family, const TaskInstance& t) {
    return derive_task_id(family, t.context, t.question, t.gold);
}

std::vector<TokenId> render_context(const KnowledgeRecord& record, const Vocabulary& vocab) {
    std::vector<TokenId> out;
    out.reserve(record.attrs.size() * 2);
    for (const auto& [letter, value] : record.attrs) {
        out.push_back(vocab.letter(letter));
        out.push_back(vocab.digit(value));
    }
    return out;
}

// Context grammar: alternating letter/value pairs with distinct letters.
std::optional<std::vector<std::pair<int, int>>> parse_context(std::span<const TokenId> context,
                                                              const Vocabulary& vocab) {
    if (context.empty() || context.size() % 2 != 0) return std::nullopt;
    std::vector<std::pair<int, int>> pairs;
    std::set<int> seen;
    for (size_t i = 0; i < context.size(); i += 2) {
        if (!vocab.contains(context[i]) || !vocab.is_letter(context[i])) return std::nullopt;
        if (!vocab.contains(context[i + 1]) || !vocab.is_digit(context[i + 1])) {
            return std::nullopt;
        }
        const int letter = vocab.letter_index(context[i]);
        if (!seen.insert(letter).second) return std::nullopt;
        pairs.emplace_back(letter, vocab.digit_value(context[i + 1]));
    }
    return pairs;
}

int lookup_value(const std::vector<std::pair<int, int>>& pairs, int letter) {
    for (const auto& [l, v] : pairs) {
        if (l == letter) return v;
    }
    return -1;
}

void check_record(const KnowledgeRecord& record, const Vocabulary& vocab) {
    if (record.attrs.size() < 2) {
        throw InvalidInputError("knowledge record needs at least 2 attributes");
    }
    std::set<int> seen;
    for (const auto& [letter, value] : record.attrs) {
        if (letter < 0 || letter >= vocab.letter_count() || value < 0 ||
            value >= vocab.digit_count()) {
            throw InvalidInputError("knowledge record attribute out of range");
        }
        if (!seen.insert(letter).second) {
            throw InvalidInputError("knowledge record has duplicate attribute");
        }
    }
}

} // namespace

std::vector<KnowledgeRecord> make_knowledge_pool(const Vocabulary& vocab, int count,
                                                 RngStream& rng) {
    if (count < 1) throw InvalidInputError("knowledge pool count must be >= 1");
    if (vocab.letter_count() < 2) {
        throw InvalidInputError("knowledge pool needs >= 2 letters in the vocabulary");
    }
    const int max_attrs = std::min(5, vocab.letter_count());
    std::vector<KnowledgeRecord> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        KnowledgeRecord rec;
        rec.id = "k" + std::to_string(i);
        const int n_attrs = 2 + static_cast<int>(rng.next_below(max_attrs - 1));
        // Partial Fisher-Yates for distinct attribute letters.
        std::vector<int> letters(vocab.letter_count());
        for (size_t j = 0; j < letters.size(); ++j) letters[j] = static_cast<int>(j);
        for (int j = 0; j < n_attrs; ++j) {
            const size_t pick = j + rng.next_below(letters.size() - j);
            std::swap(letters[j], letters[pick]);
            rec.attrs.emplace_back(letters[j],
                                   static_cast<int>(rng.next_below(vocab.digit_count())));
        }
        std::sort(rec.attrs.begin(), rec.attrs.end());
        out.push_back(std::move(rec));
    }
    return out;
}

KnowledgeRecord expand_record(const KnowledgeRecord& record, const Vocabulary& vocab) {
    check_record(record, vocab);
    KnowledgeRecord out = record;
    std::set<int> used;
    for (const auto& [l, v] : out.attrs) used.insert(l);
    // Derived attributes: running sums of the existing values, deterministic
    // so the same poor record always expands the same way.
    int next_letter = 0;
    while (out.attrs.size() < 3 && static_cast<int>(used.size()) < vocab.letter_count()) {
        while (used.count(next_letter)) ++next_letter;
        int sum = static_cast<int>(out.attrs.size());
        for (const auto& [l, v] : out.attrs) sum += v;
        out.attrs.emplace_back(next_letter, sum % vocab.digit_count());
        used.insert(next_letter);
    }
    std::sort(out.attrs.begin(), out.attrs.end());
    return out;
}

TaskInstance gen_family_lookup(const KnowledgeRecord& record, const Vocabulary& vocab,
                               RngStream& rng) {
    check_record(record, vocab);
    if (vocab.marker_count() < 1) throw InvalidInputError("lookup family needs the ASK marker");
    const auto& target = record.attrs[rng.next_below(record.attrs.size())];

    TaskInstance t;
    t.family = "lookup";
    t.context = render_context(record, vocab);
    t.question = {vocab.ask(), vocab.letter(target.first)};
    t.gold = {vocab.digit(target.second)};
    t.difficulty = static_cast<int>(record.attrs.size());
    t.id = task_id(t.family, t);
    return t;
}

TaskInstance gen_family_arith(const KnowledgeRecord& record, const Vocabulary& vocab,
                              RngStream& rng) {
    check_record(record, vocab);
    if (vocab.marker_count() < 3) {
        throw InvalidInputError("arith family needs the SUM and CMP markers");
    }
    const bool is_sum = rng.next_below(2) == 0;
    int operands = 2;
    if (is_sum && record.attrs.size() > 2 && rng.next_below(2) == 0) operands = 3;

    std::vector<size_t> idx(record.attrs.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (int i = 0; i < operands; ++i) {
        std::swap(idx[i], idx[i + rng.next_below(idx.size() - i)]);
    }

    TaskInstance t;
    t.family = "arith";
    t.context = render_context(record, vocab);
    t.question.push_back(is_sum ? vocab.op_sum() : vocab.op_cmp());
    int sum = 0, best = 0;
    for (int i = 0; i < operands; ++i) {
        const auto& [letter, value] = record.attrs[idx[i]];
        t.question.push_back(vocab.letter(letter));
        sum += value;
        best = std::max(best, value);
    }
    t.gold = {vocab.digit(is_sum ? sum % vocab.digit_count() : best)};
    t.difficulty = operands;
    t.id = task_id(t.family, t);
    return t;
}

std::optional<std::vector<TokenId>> family_oracle(const std::string& family,
                                                  std::span<const TokenId> context,
                                                  std::span<const TokenId> question,
                                                  const Vocabulary& vocab) {
    const auto pairs = parse_context(context, vocab);
    if (!pairs) return std::nullopt;

    if (family == "lookup") {
        if (vocab.marker_count() < 1) return std::nullopt;
        if (question.size() != 2 || question[0] != vocab.ask()) return std::nullopt;
        if (!vocab.contains(question[1]) || !vocab.is_letter(question[1])) return std::nullopt;
        const int v = lookup_value(*pairs, vocab.letter_index(question[1]));
        if (v < 0) return std::nullopt;
        return std::vector<TokenId>{vocab.digit(v)};
    }
    if (family == "arith") {
        if (vocab.marker_count() < 3) return std::nullopt;
        if (question.size() < 3) return std::nullopt;
        const bool is_sum = question[0] == vocab.op_sum();
        if (!is_sum && question[0] != vocab.op_cmp()) return std::nullopt;
        if (!is_sum && question.size() != 3) return std::nullopt;
        int sum = 0, best = 0;
        for (size_t i = 1; i < question.size(); ++i) {
            if (!vocab.contains(question[i]) || !vocab.is_letter(question[i])) {
                return std::nullopt;
            }
            const int v = lookup_value(*pairs, vocab.letter_index(question[i]));
            if (v < 0) return std::nullopt;
            sum += v;
            best = std::max(best, v);
        }
        return std::vector<TokenId>{vocab.digit(is_sum ? sum % vocab.digit_count() : best)};
    }
    return std::nullopt;
}

void check_oracle_consistency(const TaskInstance& task, const Vocabulary& vocab) {
    if (task.question.empty() || task.gold.empty()) {
        throw ContractError("task " + task.id + " has an empty question or gold");
    }
    const auto expected = family_oracle(task.family, task.context, task.question, vocab);
    if (!expected || *expected != task.gold) {
        throw ContractError("task " + task.id + " disagrees with the " + task.family +
                            " oracle");
    }
}

MaskedInput mask(const TaskInstance& task) {
    return MaskedInput{task.context};
}

TaskInstance make_variant(const TaskInstance& seed, const Vocabulary& vocab, RngStream& rng) {
    if (seed.family != "lookup" && seed.family != "arith") {
        throw InvalidInputError("make_variant: unknown family " + seed.family);
    }
    if (seed.question.empty()) throw InvalidInputError("make_variant: seed has no question");
    auto pairs = parse_context(seed.context, vocab);
    if (!pairs) throw InvalidInputError("make_variant: seed context is malformed");

    // Perturb at least one attribute value.
    const size_t which = rng.next_below(pairs->size());
    auto& [letter, value] = (*pairs)[which];
    value = static_cast<int>((value + 1 + rng.next_below(vocab.digit_count() - 1)) %
                             vocab.digit_count());

    KnowledgeRecord rec;
    rec.id = "variant";
    rec.attrs = *pairs;

    TaskInstance t;
    t.family = seed.family;
    t.context = render_context(rec, vocab);
    if (rng.next_below(2) == 0) {
        // Keep the original question against the perturbed context.
        t.question = seed.question;
    } else if (seed.family == "lookup") {
        t.question = {vocab.ask(), vocab.letter((*pairs)[rng.next_below(pairs->size())].first)};
    } else {
        const bool is_sum = seed.question[0] == vocab.op_sum();
        const int operands = std::min<int>(static_cast<int>(seed.question.size()) - 1,
                                           static_cast<int>(pairs->size()));
        std::vector<size_t> idx(pairs->size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        for (int i = 0; i < operands; ++i) {
            std::swap(idx[i], idx[i + rng.next_below(idx.size() - i)]);
        }
        t.question.push_back(is_sum ? vocab.op_sum() : vocab.op_cmp());
        for (int i = 0; i < operands; ++i) {
            t.question.push_back(vocab.letter((*pairs)[idx[i]].first));
        }
    }
    const auto gold = family_oracle(t.family, t.context, t.question, vocab);
    if (!gold) throw ContractError("make_variant produced an oracle-invalid instance");
    t.gold = *gold;
    t.difficulty = t.family == "lookup" ? static_cast<int>(pairs->size())
                                        : static_cast<int>(t.question.size()) - 1;
    t.id = task_id(t.family, t);
    return t;
}

void measure_pass_rates(const PolicySnapshot& policy, std::vector<ProblemRecord>& records, int k,
                        RngStream& rng, int max_response_len) {
    if (records.empty()) return;
    std::vector<TaskInstance> tasks;
    tasks.reserve(records.size());
    for (const auto& r : records) tasks.push_back(r.task);
    const auto result = mean_at_k(policy, tasks, k, rng, max_response_len);
    for (size_t i = 0; i < records.size(); ++i) records[i].pass_rate = result.per_task[i];
}

void update_seed_pool(PoolStore& store, const std::vector<ProblemRecord>& measured, int round) {
    store.validate_band();
    for (const auto& rec : measured) {
        if (!rec.pass_rate) {
            throw InvalidInputError("update_seed_pool: record " + rec.task.id +
                                    " has no pass_rate");
        }
        const double p = *rec.pass_rate;
        auto it = std::find_if(store.seeds.begin(), store.seeds.end(),
                               [&](const ProblemRecord& s) { return s.task.id == rec.task.id; });
        const bool in_band = store.band_low <= p && p <= store.band_high;
        if (in_band) {
            if (it == store.seeds.end()) {
                ProblemRecord kept = rec;
                kept.round_added = round;
                store.seeds.push_back(std::move(kept));
            } else {
                it->pass_rate = p;
            }
        } else if (it != store.seeds.end()) {
            store.seeds.erase(it);
        }
    }
    for (const auto& s : store.seeds) {
        if (!s.pass_rate || *s.pass_rate < store.band_low || *s.pass_rate > store.band_high) {
            throw ContractError("seed pool record " + s.task.id + " is outside the band");
        }
    }
}

namespace {

json record_to_json(const ProblemRecord& rec) {
    json j;
    j["id"] = rec.task.id;
    j["family"] = rec.task.family;
    j["context_tokens"] = rec.task.context;
    j["question_tokens"] = rec.task.question;
    j["gold_tokens"] = rec.task.gold;
    j["pass_rate"] = rec.pass_rate ? json(*rec.pass_rate) : json(nullptr);
    j["round_added"] = rec.round_added;
    j["provenance"] = provenance_name(rec.provenance);
    return j;
}

ProblemRecord record_from_json(const json& j) {
    auto need = [&](const char* key) -> const json& {
        auto it = j.find(key);
        if (it == j.end()) throw InvalidInputError(std::string("missing field '") + key + "'");
        return *it;
    };
    ProblemRecord rec;
    rec.task.id = need("id").get<std::string>();
    rec.task.family = need("family").get<std::string>();
    rec.task.context = need("context_tokens").get<std::vector<TokenId>>();
    rec.task.question = need("question_tokens").get<std::vector<TokenId>>();
    rec.task.gold = need("gold_tokens").get<std::vector<TokenId>>();
    const json& pr = need("pass_rate");
    if (!pr.is_null()) rec.pass_rate = pr.get<double>();
    rec.round_added = need("round_added").get<int>();
    rec.provenance = provenance_from_name(need("provenance").get<std::string>());
    return rec;
}

} // namespace

void save_pool(const std::vector<ProblemRecord>& records, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("pool: cannot open " + tmp + " for writing");
        for (const auto& rec : records) out << record_to_json(rec).dump() << '\n';
        if (!out.flush()) throw IoError("pool: write to " + tmp + " failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("pool: rename to " + path + " failed: " + ec.message());
}

std::vector<ProblemRecord> load_pool(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("pool: cannot open " + path);
    std::vector<ProblemRecord> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw IoError("pool: " + path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<ProblemRecord> import_pool(const std::string& path, const Vocabulary& vocab,
                                       std::vector<std::string>* rejected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("pool: cannot open " + path);
    std::vector<ProblemRecord> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            ProblemRecord rec = record_from_json(json::parse(line));
            check_oracle_consistency(rec.task, vocab);
            out.push_back(std::move(rec));
        } catch (const std::exception& e) {
            if (rejected) {
                rejected->push_back("line " + std::to_string(line_no) + ": " + e.what());
            }
        }
    }
    return out;
}

std::vector<ProblemRecord> build_task_suite(const PoolStore& store, const Vocabulary& vocab,
                                            const FeatureSpace& space,
                                            const std::vector<std::string>& families,
                                            int suite_size, double variant_fraction, int round,
                                            RngStream& rng,
                                            const std::vector<ProblemRecord>& imported) {
    if (suite_size < 1) throw InvalidInputError("suite_size must be >= 1");
    if (families.empty()) throw InvalidInputError("family list must not be empty");
    if (store.knowledge.empty()) throw InvalidInputError("knowledge pool is empty");
    if (!(variant_fraction >= 0.0 && variant_fraction <= 1.0)) {
        throw InvalidInputError("variant_fraction must be in [0, 1]");
    }

    std::vector<ProblemRecord> suite;
    std::set<std::string> used_ids;
    std::set<int> used_buckets;

    auto try_accept = [&](ProblemRecord rec) {
        std::vector<TokenId> prompt = rec.task.context;
        prompt.insert(prompt.end(), rec.task.question.begin(), rec.task.question.end());
        const int bucket = space.context_bucket(prompt);
        if (used_ids.count(rec.task.id) || used_buckets.count(bucket)) return false;
        check_oracle_consistency(rec.task, vocab);
        used_ids.insert(rec.task.id);
        used_buckets.insert(bucket);
        suite.push_back(std::move(rec));
        return true;
    };

    // Imported seeds lead the round-0 suite.
    if (round == 0) {
        for (const auto& rec : imported) {
            if (static_cast<int>(suite.size()) >= suite_size) break;
            try_accept(rec);
        }
    }

    constexpr int kMaxTries = 500;
    // Variants of banded seeds.
    if (round > 0 && !store.seeds.empty()) {
        const int want = static_cast<int>(variant_fraction * suite_size);
        int tries = 0;
        while (static_cast<int>(suite.size()) < want && tries++ < kMaxTries) {
            const auto& seed = store.seeds[rng.next_below(store.seeds.size())];
            ProblemRecord rec;
            rec.task = make_variant(seed.task, vocab, rng);
            rec.provenance = Provenance::variant;
            rec.round_added = round;
            try_accept(std::move(rec));
        }
    }

    // Fresh tasks from the knowledge pool, cycling through the families.
    size_t family_cursor = 0;
    int tries = 0;
    while (static_cast<int>(suite.size()) < suite_size) {
        if (tries++ >= kMaxTries) {
            throw InvalidInputError(
                "could not assemble a bucket-distinct suite; lower suite_size or raise "
                "context_buckets");
        }
        const auto& raw = store.knowledge[rng.next_below(store.knowledge.size())];
        const KnowledgeRecord rec = raw.attrs.size() < 3 ? expand_record(raw, vocab) : raw;
        const std::string& family = families[family_cursor % families.size()];
        ProblemRecord prob;
        if (family == "lookup") {
            prob.task = gen_family_lookup(rec, vocab, rng);
        } else if (family == "arith") {
            prob.task = gen_family_arith(rec, vocab, rng);
        } else {
            throw InvalidInputError("unknown task family: " + family);
        }
        prob.provenance = Provenance::knowledge_pool;
        prob.round_added = round;
        if (try_accept(std::move(prob))) ++family_cursor;
    }
    return suite;
}

} // namespace doge
