#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "doge/curriculum.hpp"
#include "doge/errors.hpp"
#include "doge/genclient.hpp"

using namespace doge;
using nlohmann::json;

namespace {

const Vocabulary kVocab = Vocabulary::make(10, 6);

// Loopback stub generator; handler swapped per test case.
struct StubServer {
    httplib::Server svr;
    int port = 0;
    std::thread thread;

    explicit StubServer(httplib::Server::Handler handler) {
        svr.Post("/generate", std::move(handler));
        port = svr.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { svr.listen_after_bind(); });
        svr.wait_until_ready();
    }

    ~StubServer() {
        svr.stop();
        thread.join();
    }

    GenClientConfig config() const {
        GenClientConfig cfg;
        cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
        cfg.timeout_s = 5;
        cfg.max_retries = 2;
        cfg.backoff_ms = 1;
        return cfg;
    }
};

json valid_problem() {
    // lookup: context {A:3, B:7}, question B, answer 7.
    json p;
    p["context"] = {kVocab.letter(0), kVocab.digit(3), kVocab.letter(1), kVocab.digit(7)};
    p["question"] = {kVocab.ask(), kVocab.letter(1)};
    p["answer"] = {kVocab.digit(7)};
    return p;
}

} // namespace

TEST_CASE("fetch_external: stub echoes one valid problem") {
    std::string captured_body;
    StubServer stub([&](const httplib::Request& req, httplib::Response& res) {
        captured_body = req.body;
        json out;
        out["problems"] = {valid_problem()};
        res.set_content(out.dump(), "application/json");
    });

    std::vector<std::string> rejected;
    const auto tasks =
        fetch_external("from_knowledge", R"({"records": 1})", 1, "lookup", stub.config(),
                       kVocab, &rejected);
    REQUIRE(tasks.size() == 1);
    CHECK(rejected.empty());
    CHECK(tasks[0].family == "lookup");
    CHECK(tasks[0].gold == std::vector<TokenId>{kVocab.digit(7)});
    CHECK(tasks[0].id ==
          derive_task_id("lookup", tasks[0].context, tasks[0].question, tasks[0].gold));

    // Wire request shape: {"kind", "payload", "n"}.
    const json req = json::parse(captured_body);
    CHECK(req.at("kind") == "from_knowledge");
    CHECK(req.at("payload").at("records") == 1);
    CHECK(req.at("n") == 1);
}

TEST_CASE("fetch_external: malformed body and schema violations") {
    SUBCASE("body is not JSON") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) {
            res.set_content("{ nope", "application/json");
        });
        std::vector<std::string> rejected;
        const auto tasks =
            fetch_external("variant", "{}", 2, "lookup", stub.config(), kVocab, &rejected);
        CHECK(tasks.empty());
        REQUIRE(rejected.size() == 1);
        CHECK(rejected[0].find("malformed") != std::string::npos);
    }

    SUBCASE("missing problems array") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"items": []})", "application/json");
        });
        std::vector<std::string> rejected;
        const auto tasks =
            fetch_external("variant", "{}", 2, "lookup", stub.config(), kVocab, &rejected);
        CHECK(tasks.empty());
        REQUIRE(rejected.size() == 1);
        CHECK(rejected[0].find("problems") != std::string::npos);
    }

    SUBCASE("bad items rejected one by one, good ones kept") {
        StubServer stub([](const httplib::Request&, httplib::Response& res) {
            json out;
            auto wrong_answer = valid_problem();
            wrong_answer["answer"] = {kVocab.digit(2)};
            auto bad_token = valid_problem();
            bad_token["context"][0] = 9999;
            auto not_a_task = json::object();
            out["problems"] = {valid_problem(), wrong_answer, bad_token, not_a_task};
            res.set_content(out.dump(), "application/json");
        });
        std::vector<std::string> rejected;
        const auto tasks =
            fetch_external("variant", "{}", 5, "lookup", stub.config(), kVocab, &rejected);
        REQUIRE(tasks.size() == 1);
        CHECK(rejected.size() == 3);
        CHECK(rejected[0].find("item 2") != std::string::npos);
    }
}

TEST_CASE("fetch_external: n caps the accepted instances") {
    StubServer stub([](const httplib::Request&, httplib::Response& res) {
        json out;
        out["problems"] = json::array();
        for (int d = 0; d < 7; ++d) {
            json p;
            p["context"] = {kVocab.letter(0), kVocab.digit(d), kVocab.letter(1),
                            kVocab.digit(9 - d)};
            p["question"] = {kVocab.ask(), kVocab.letter(0)};
            p["answer"] = {kVocab.digit(d)};
            out["problems"].push_back(p);
        }
        res.set_content(out.dump(), "application/json");
    });
    const auto tasks = fetch_external("variant", "{}", 5, "lookup", stub.config(), kVocab);
    CHECK(tasks.size() == 5);
}

TEST_CASE("fetch_external: retries transient failures with backoff") {
    std::atomic<int> hits{0};
    StubServer stub([&](const httplib::Request&, httplib::Response& res) {
        if (hits++ == 0) {
            res.status = 500;
            return;
        }
        json out;
        out["problems"] = {valid_problem()};
        res.set_content(out.dump(), "application/json");
    });
    std::vector<std::string> rejected;
    const auto tasks =
        fetch_external("variant", "{}", 1, "lookup", stub.config(), kVocab, &rejected);
    REQUIRE(tasks.size() == 1);
    CHECK(hits == 2);
    REQUIRE(rejected.size() == 1); // the failed first attempt is logged
    CHECK(rejected[0].find("HTTP 500") != std::string::npos);
}

TEST_CASE("fetch_external: unreachable endpoint raises after retries") {
    GenClientConfig cfg;
    cfg.base_url = "http://127.0.0.1:1"; // nothing listens on port 1
    cfg.timeout_s = 1;
    cfg.max_retries = 2;
    cfg.backoff_ms = 1;
    std::vector<std::string> rejected;
    CHECK_THROWS_AS(fetch_external("variant", "{}", 1, "lookup", cfg, kVocab, &rejected),
                    IoError);
    CHECK(rejected.size() == 3); // one note per attempt
}

TEST_CASE("fetch_external: input validation") {
    GenClientConfig cfg;
    cfg.base_url = "http://127.0.0.1:1";
    CHECK_THROWS_AS(fetch_external("variant", "{}", 0, "lookup", cfg, kVocab),
                    InvalidInputError);
    CHECK_THROWS_AS(fetch_external("variant", "not json", 1, "lookup", cfg, kVocab),
                    InvalidInputError);
    GenClientConfig no_url;
    CHECK_THROWS_AS(fetch_external("variant", "{}", 1, "lookup", no_url, kVocab),
                    InvalidInputError);
}
