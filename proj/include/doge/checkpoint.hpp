#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "doge/grpo.hpp"
#include "doge/policy.hpp"
#include "doge/vocab.hpp"

namespace doge {

inline constexpr int kCheckpointVersion = 1;

// Everything needed to resume or evaluate a run. rng fields record the run's
// root seed and the substream scheme so a loaded checkpoint replays the same
// derived streams.
struct Checkpoint {
    int version = kCheckpointVersion;
    Vocabulary vocab = Vocabulary::make(10, 6);
    PolicyParams params;
    double temperature = 1.0;
    uint64_t rng_root = 0;
    std::string rng_scheme = "splitmix64-path";
    OptimizerState opt;
    // Where in the run this snapshot was taken (informational).
    int round = 0;
    std::string stage;
    int64_t step = 0;
};

// Serialize to the versioned JSON layout. Weights (and optimizer moments) are
// hex-float strings, so save/load round-trips every bit.
std::string checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const std::string& text);

// File variants; write goes through a temp file + rename so a crash never
// leaves a half-written checkpoint behind.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace doge
