#pragma once

#include <string>
#include <vector>

#include "doge/task.hpp"
#include "doge/vocab.hpp"

namespace doge {

// External problem generator endpoint. backoff_ms is the first retry delay
// and doubles per attempt; tests shrink it to keep loopback failures fast.
struct GenClientConfig {
    std::string base_url;
    int timeout_s = 30;
    int max_retries = 3;
    int backoff_ms = 200;
};

// POSTs {"kind", "payload", "n"} to {base_url}/generate and converts the
// returned problems into TaskInstances of `family`. Every item is validated
// against the family oracle; inconsistent or malformed items are dropped with
// a reason appended to `rejected`. A response that is not valid JSON of the
// expected shape yields zero instances (reason logged), while transport
// failures are retried up to max_retries and then raised as IoError.
std::vector<TaskInstance> fetch_external(const std::string& kind, const std::string& payload_json,
                                         int n, const std::string& family,
                                         const GenClientConfig& cfg, const Vocabulary& vocab,
                                         std::vector<std::string>* rejected = nullptr);

} // namespace doge
