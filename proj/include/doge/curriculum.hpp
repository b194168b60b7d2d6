#pragma once

#include <optional>
#include <string>
#include <vector>

#include "doge/policy.hpp"
#include "doge/rng.hpp"
#include "doge/task.hpp"

namespace doge {

// Knowledge records plus the banded seed-problem pool.
struct PoolStore {
    std::vector<KnowledgeRecord> knowledge;
    std::vector<ProblemRecord> seeds;
    double band_low = 0.1;
    double band_high = 0.3;

    void validate_band() const;
};

// Synthesizes `count` attribute records: 2 to 5 distinct attributes each,
// values uniform over the digit range.
std::vector<KnowledgeRecord> make_knowledge_pool(const Vocabulary& vocab, int count,
                                                 RngStream& rng);

// Information-poor records (< 3 attributes) get derived attributes appended
// until rich, the template stand-in for an analyst pass.
KnowledgeRecord expand_record(const KnowledgeRecord& record, const Vocabulary& vocab);

// Lookup family: context lists attribute:value pairs, the question asks for
// one attribute, gold is its value. Difficulty = attribute count.
TaskInstance gen_family_lookup(const KnowledgeRecord& record, const Vocabulary& vocab,
                               RngStream& rng);

// Modular-arithmetic family: the question asks for a sum mod 10 over 2-3
// attributes or the max of 2. Difficulty = operand count.
TaskInstance gen_family_arith(const KnowledgeRecord& record, const Vocabulary& vocab,
                              RngStream& rng);

// Content-derived task id: equal (family, context, question, gold) tuples
// share an id across processes and runs.
std::string derive_task_id(const std::string& family, std::span<const TokenId> context,
                           std::span<const TokenId> question, std::span<const TokenId> gold);

// Recomputes gold from (context, question) tokens alone. Returns nullopt when
// the tokens do not form a valid instance of the family.
std::optional<std::vector<TokenId>> family_oracle(const std::string& family,
                                                  std::span<const TokenId> context,
                                                  std::span<const TokenId> question,
                                                  const Vocabulary& vocab);

// Throws ContractError if gold disagrees with the family oracle.
void check_oracle_consistency(const TaskInstance& task, const Vocabulary& vocab);

// x_tilde = Mask(x, q): the context span verbatim, no question tokens.
MaskedInput mask(const TaskInstance& task);

// Perturbs at least one attribute value (and sometimes the queried target)
// within the seed's family, recomputing gold through the oracle.
TaskInstance make_variant(const TaskInstance& seed, const Vocabulary& vocab, RngStream& rng);

// mean@k correctness per record, written into pass_rate.
void measure_pass_rates(const PolicySnapshot& policy, std::vector<ProblemRecord>& records, int k,
                        RngStream& rng, int max_response_len = 12);

// Upserts measured in-band records into store.seeds (stamping round_added for
// new entries) and evicts previously banded seeds re-measured out of band.
// Seeds absent from `measured` are left alone.
void update_seed_pool(PoolStore& store, const std::vector<ProblemRecord>& measured, int round);

// Line-delimited JSON persistence. save is atomic (temp + rename); load is
// strict and throws IoError on any malformed line.
void save_pool(const std::vector<ProblemRecord>& records, const std::string& path);
std::vector<ProblemRecord> load_pool(const std::string& path);

// Lenient import: malformed or oracle-inconsistent lines are skipped, with
// one reason string per rejected line.
std::vector<ProblemRecord> import_pool(const std::string& path, const Vocabulary& vocab,
                                       std::vector<std::string>* rejected = nullptr);

// Builds one round's training suite: imported seeds first (round 0), then
// variants of banded seeds (up to variant_fraction of the suite), topped up
// with fresh knowledge-pool tasks. Suites are deduplicated by task id and by
// policy context bucket, so each task is distinguishable by the featurized
// policy; every accepted task is oracle-checked.
std::vector<ProblemRecord> build_task_suite(const PoolStore& store, const Vocabulary& vocab,
                                            const FeatureSpace& space,
                                            const std::vector<std::string>& families,
                                            int suite_size, double variant_fraction, int round,
                                            RngStream& rng,
                                            const std::vector<ProblemRecord>& imported = {});

} // namespace doge
