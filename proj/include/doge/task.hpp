#pragma once

#include <optional>
#include <string>
#include <vector>

#include "doge/vocab.hpp"

namespace doge {

// One verifiable training triplet: structured context x, question q, gold
// answer y. The id is content-derived, so equal tasks share an id.
struct TaskInstance {
    std::string id;
    std::vector<TokenId> context;
    std::vector<TokenId> question;
    std::vector<TokenId> gold;
    std::string family;
    int difficulty = 0;
};

// The question-masked view of a task: context tokens only. The question span
// is tracked structurally (context and question are separate fields), never
// by token matching.
struct MaskedInput {
    std::vector<TokenId> tokens;
};

enum class Provenance { knowledge_pool, variant, external, seed_init };

std::string provenance_name(Provenance p);
Provenance provenance_from_name(const std::string& name);

// A task plus its curriculum bookkeeping.
struct ProblemRecord {
    TaskInstance task;
    std::optional<double> pass_rate;
    int round_added = 0;
    Provenance provenance = Provenance::knowledge_pool;
};

// Structured attribute record (the knowledge-pool entry): attribute index ->
// digit value pairs, attribute indices unique.
struct KnowledgeRecord {
    std::string id;
    std::vector<std::pair<int, int>> attrs; // (letter index, digit value)
};

} // namespace doge
