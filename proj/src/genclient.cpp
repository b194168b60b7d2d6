#include "doge/genclient.hpp"

#include <chrono>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "doge/curriculum.hpp"
#include "doge/errors.hpp"

namespace doge {

using nlohmann::json;

namespace {

void note(std::vector<std::string>* rejected, std::string reason) {
    if (rejected) rejected->push_back(std::move(reason));
}

} // namespace

std::vector<TaskInstance> fetch_external(const std::string& kind, const std::string& payload_json,
                                         int n, const std::string& family,
                                         const GenClientConfig& cfg, const Vocabulary& vocab,
                                         std::vector<std::string>* rejected) {
    if (n < 1) throw InvalidInputError("fetch_external: n must be >= 1");
    if (cfg.base_url.empty()) throw InvalidInputError("fetch_external: no generator URL");

    json request;
    request["kind"] = kind;
    try {
        request["payload"] = json::parse(payload_json);
    } catch (const json::parse_error& e) {
        throw InvalidInputError(std::string("fetch_external: payload is not JSON: ") + e.what());
    }
    request["n"] = n;
    const std::string body = request.dump();

    httplib::Client client(cfg.base_url);
    client.set_connection_timeout(cfg.timeout_s, 0);
    client.set_read_timeout(cfg.timeout_s, 0);

    std::string response_body;
    bool got_response = false;
    int delay_ms = cfg.backoff_ms;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            delay_ms *= 2;
        }
        auto res = client.Post("/generate", body, "application/json");
        if (res && res->status == 200) {
            response_body = res->body;
            got_response = true;
            break;
        }
        note(rejected, "attempt " + std::to_string(attempt + 1) + ": " +
                           (res ? "HTTP " + std::to_string(res->status)
                                : "transport error: " + httplib::to_string(res.error())));
    }
    if (!got_response) {
        throw IoError("fetch_external: " + cfg.base_url + "/generate unreachable after " +
                      std::to_string(cfg.max_retries + 1) + " attempts");
    }

    json doc;
    try {
        doc = json::parse(response_body);
    } catch (const json::parse_error& e) {
        note(rejected, std::string("malformed response JSON: ") + e.what());
        return {};
    }
    if (!doc.is_object() || !doc.contains("problems") || !doc["problems"].is_array()) {
        note(rejected, "response missing 'problems' array");
        return {};
    }

    std::vector<TaskInstance> out;
    int item_no = 0;
    for (const auto& item : doc["problems"]) {
        ++item_no;
        if (static_cast<int>(out.size()) >= n) break;
        try {
            if (!item.is_object()) throw InvalidInputError("item is not an object");
            TaskInstance t;
            t.family = family;
            t.context = item.at("context").get<std::vector<TokenId>>();
            t.question = item.at("question").get<std::vector<TokenId>>();
            t.gold = item.at("answer").get<std::vector<TokenId>>();
            for (TokenId tok : t.context) {
                if (!vocab.contains(tok)) throw InvalidInputError("context token out of range");
            }
            const auto expected = family_oracle(t.family, t.context, t.question, vocab);
            if (!expected) throw InvalidInputError("not a valid " + family + " instance");
            if (*expected != t.gold) throw InvalidInputError("answer disagrees with the oracle");
            t.difficulty = static_cast<int>(t.context.size() / 2);
            t.id = derive_task_id(t.family, t.context, t.question, t.gold);
            out.push_back(std::move(t));
        } catch (const std::exception& e) {
            note(rejected, "item " + std::to_string(item_no) + " rejected: " + e.what());
        }
    }
    return out;
}

} // namespace doge
