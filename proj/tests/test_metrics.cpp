#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "doge/config.hpp"
#include "doge/errors.hpp"
#include "doge/metrics.hpp"
#include "doge/rng.hpp"
#include "doge/util.hpp"

using namespace doge;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) {
        path = (std::filesystem::temp_directory_path() / name).string();
        std::filesystem::remove(path);
        std::filesystem::remove(path + ".tmp");
    }
    ~TempFile() {
        std::filesystem::remove(path);
        std::filesystem::remove(path + ".tmp");
    }
};

MetricsRow train_row(int round, Stage stage, int step, double entropy) {
    MetricsRow r;
    r.round = round;
    r.stage = stage;
    r.step = step;
    r.mean_reward = 0.5;
    r.mean_entropy = entropy;
    r.kl_value = 0.001;
    r.clipped_fraction = 0.0;
    r.grad_norm = 1.25;
    r.wall_ms = 17;
    return r;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("metrics header is pinned") {
    CHECK(std::string(kMetricsHeader) ==
          "round,stage,step,mean_reward,mean_entropy,kl_value,clipped_fraction,grad_norm,"
          "pass_rate_eval,wall_ms");
}

TEST_CASE("stage names") {
    CHECK(stage_name(Stage::warmup) == "warmup");
    CHECK(stage_name(Stage::stage1) == "stage1");
    CHECK(stage_name(Stage::stage2) == "stage2");
    CHECK(stage_name(Stage::eval) == "eval");
    for (auto s : {Stage::warmup, Stage::stage1, Stage::stage2, Stage::eval}) {
        CHECK(stage_from_name(stage_name(s)) == s);
    }
    CHECK_THROWS_AS(stage_from_name("stage3"), InvalidInputError);
}

TEST_CASE("metrics writer: atomic rename and faithful round-trip") {
    TempFile file("doge_metrics.csv");
    {
        MetricsWriter w(file.path);
        CHECK(std::filesystem::exists(file.path + ".tmp"));
        CHECK_FALSE(std::filesystem::exists(file.path));

        w.append(train_row(1, Stage::warmup, 1, 1.75));
        auto r2 = train_row(1, Stage::stage1, 1, 0.5);
        r2.grad_norm.reset();
        w.append(r2);
        MetricsRow eval_row;
        eval_row.round = 1;
        eval_row.stage = Stage::eval;
        eval_row.step = 1;
        eval_row.pass_rate_eval = 0.25;
        eval_row.wall_ms = 3;
        w.append(eval_row);
        w.finalize();
        CHECK(std::filesystem::exists(file.path));
        CHECK_FALSE(std::filesystem::exists(file.path + ".tmp"));
    }

    const auto content = slurp(file.path);
    CHECK(content.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);

    const auto rows = read_metrics(file.path);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].stage == Stage::warmup);
    CHECK(rows[0].mean_entropy == 1.75);
    CHECK(rows[0].wall_ms == 17);
    CHECK(rows[1].stage == Stage::stage1);
    CHECK_FALSE(rows[1].grad_norm.has_value());
    CHECK(rows[1].mean_reward == 0.5);
    CHECK(rows[2].stage == Stage::eval);
    CHECK(rows[2].pass_rate_eval == 0.25);
    CHECK_FALSE(rows[2].mean_reward.has_value());

    // Gnarly doubles survive the decimal round-trip bit-exactly.
    TempFile file2("doge_metrics2.csv");
    {
        MetricsWriter w(file2.path);
        auto r = train_row(0, Stage::stage2, 5, 1.0 / 3.0);
        r.mean_reward = 0.1 + 0.2;
        w.append(r);
        w.finalize();
    }
    const auto rows2 = read_metrics(file2.path);
    CHECK(*rows2[0].mean_entropy == 1.0 / 3.0);
    CHECK(*rows2[0].mean_reward == 0.1 + 0.2);
}

TEST_CASE("metrics writer enforces strict (round, stage, step) order") {
    TempFile file("doge_metrics3.csv");
    MetricsWriter w(file.path);
    w.append(train_row(1, Stage::stage1, 1, 1.0));
    w.append(train_row(1, Stage::stage1, 2, 1.0));
    CHECK_THROWS_AS(w.append(train_row(1, Stage::stage1, 2, 1.0)), ContractError); // equal
    CHECK_THROWS_AS(w.append(train_row(1, Stage::stage1, 1, 1.0)), ContractError); // backward
    CHECK_THROWS_AS(w.append(train_row(1, Stage::warmup, 9, 1.0)), ContractError); // stage back
    w.append(train_row(1, Stage::stage2, 1, 1.0)); // next stage resets step
    w.append(train_row(2, Stage::warmup, 1, 1.0)); // next round resets stage
    w.finalize();
    CHECK(read_metrics(file.path).size() == 4);
}

TEST_CASE("metrics writer misuse") {
    TempFile file("doge_metrics4.csv");
    MetricsWriter w(file.path);
    w.append(train_row(1, Stage::stage1, 1, 1.0));
    w.finalize();
    CHECK_THROWS_AS(w.append(train_row(1, Stage::stage1, 2, 1.0)), ContractError);
    w.finalize(); // idempotent

    CHECK_THROWS_AS(MetricsWriter("/nonexistent-dir/x.csv"), IoError);
}

TEST_CASE("read_metrics rejects foreign files") {
    TempFile file("doge_metrics5.csv");
    {
        std::ofstream out(file.path);
        out << "step,loss\n1,2\n";
    }
    CHECK_THROWS_AS(read_metrics(file.path), IoError);
    {
        std::ofstream out(file.path, std::ios::trunc);
        out << kMetricsHeader << "\n1,stage1,1,,,,,,\n"; // 9 columns
    }
    CHECK_THROWS_AS(read_metrics(file.path), IoError);
    CHECK_THROWS_AS(read_metrics("/nonexistent/m.csv"), IoError);
}

TEST_CASE("ema_series") {
    SUBCASE("hand example") {
        const auto s = ema_series({0.0, 1.0}, 0.5);
        REQUIRE(s.size() == 2);
        CHECK(s[0] == 0.0);
        CHECK(s[1] == 0.5);
    }
    SUBCASE("alpha 1 is the identity") {
        const std::vector<double> xs{3.0, 1.0, 4.0, 1.0, 5.0};
        CHECK(ema_series(xs, 1.0) == xs);
    }
    SUBCASE("recurrence re-derivation") {
        RngStream rng(13);
        std::vector<double> xs(64);
        for (double& x : xs) x = rng.next_double();
        const double alpha = 0.1;
        const auto s = ema_series(xs, alpha);
        double expect = xs[0];
        CHECK(s[0] == expect);
        for (size_t t = 1; t < xs.size(); ++t) {
            expect = alpha * xs[t] + (1.0 - alpha) * expect;
            CHECK(std::abs(s[t] - expect) < 1e-12);
        }
    }
    SUBCASE("bad alpha") {
        CHECK_THROWS_AS(ema_series({1.0}, 0.0), InvalidInputError);
        CHECK_THROWS_AS(ema_series({1.0}, 1.5), InvalidInputError);
    }
    SUBCASE("empty input") {
        CHECK(ema_series({}, 0.5).empty());
    }
}

TEST_CASE("manifest JSON") {
    TempFile file("doge_manifest.json");
    RunManifest m;
    m.config_json = config_to_json(preset_config("toy"));
    m.seed = 42;
    m.code_version = kCodeVersion;
    m.vocab_digest = 0xdeadbeefULL;
    m.start_time = "2024-05-01T00:00:00Z";
    save_manifest(m, file.path);
    CHECK_FALSE(std::filesystem::exists(file.path + ".tmp"));

    auto j = nlohmann::json::parse(slurp(file.path));
    CHECK(j.at("seed") == 42);
    CHECK(j.at("code_version") == kCodeVersion);
    CHECK(j.at("vocab_digest") == 0xdeadbeefULL);
    CHECK(j.at("end_time").is_null());
    CHECK(j.at("config").at("rounds") == 1);

    m.end_time = "2024-05-01T00:05:00Z";
    save_manifest(m, file.path);
    j = nlohmann::json::parse(slurp(file.path));
    CHECK(j.at("end_time") == "2024-05-01T00:05:00Z");
}

TEST_CASE("write_report_ema") {
    TempFile run_a("doge_run_a.csv");
    TempFile run_b("doge_run_b.csv");
    TempFile out("doge_report.csv");
    TempFile out_r0("doge_report.csv.run0.csv");
    TempFile out_r1("doge_report.csv.run1.csv");

    // Run A: two rounds over the same (stage, step) grid; the report averages
    // them. Run B: single round.
    {
        MetricsWriter w(run_a.path);
        w.append(train_row(1, Stage::stage2, 1, 1.0));
        w.append(train_row(1, Stage::stage2, 2, 0.8));
        w.append(train_row(2, Stage::stage2, 1, 0.6));
        w.append(train_row(2, Stage::stage2, 2, 0.4));
        w.finalize();
    }
    {
        MetricsWriter w(run_b.path);
        w.append(train_row(1, Stage::stage2, 1, 0.2));
        w.append(train_row(1, Stage::stage2, 2, 0.0));
        w.finalize();
    }

    // Parses "step,raw_mean,ema" rows into triples.
    auto parse_report = [&](const std::string& path) {
        std::ifstream in(path);
        REQUIRE(in);
        std::string line;
        REQUIRE(std::getline(in, line));
        REQUIRE(line == "step,raw_mean,ema");
        std::vector<std::array<double, 3>> rows;
        while (std::getline(in, line)) {
            std::array<double, 3> row{};
            REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf", &row[0], &row[1], &row[2]) == 3);
            rows.push_back(row);
        }
        return rows;
    };
    auto near = [](double a, double b) { return std::abs(a - b) < 1e-12; };

    SUBCASE("aligned runs") {
        std::vector<std::string> warnings;
        write_report_ema({run_a.path, run_b.path}, 0.5, out.path, &warnings);
        CHECK(warnings.empty());

        // run A grid: step1 (1.0+0.6)/2=0.8, step2 (0.8+0.4)/2=0.6;
        // cross-run means: (0.8+0.2)/2=0.5, (0.6+0.0)/2=0.3; EMA: 0.5, 0.4.
        const auto rows = parse_report(out.path);
        REQUIRE(rows.size() == 2);
        CHECK(rows[0][0] == 0.0);
        CHECK(rows[1][0] == 1.0); // flat 0-based step index
        CHECK(near(rows[0][1], 0.5));
        CHECK(near(rows[1][1], 0.3));
        CHECK(near(rows[0][2], 0.5));
        CHECK(near(rows[1][2], 0.4));

        const auto r0 = parse_report(out_r0.path);
        CHECK(near(r0[0][1], 0.8));
        CHECK(near(r0[1][1], 0.6));
        CHECK(near(r0[1][2], 0.7));
        const auto r1 = parse_report(out_r1.path);
        CHECK(near(r1[0][1], 0.2));
        CHECK(near(r1[1][1], 0.0));
        CHECK(near(r1[1][2], 0.1));
    }

    SUBCASE("misaligned runs reduce to the intersection with a warning") {
        TempFile run_c("doge_run_c.csv");
        {
            MetricsWriter w(run_c.path);
            w.append(train_row(1, Stage::stage2, 1, 0.9));
            w.append(train_row(1, Stage::stage2, 2, 0.7));
            w.append(train_row(1, Stage::stage2, 3, 0.5)); // extra point
            w.finalize();
        }
        std::vector<std::string> warnings;
        write_report_ema({run_b.path, run_c.path}, 1.0, out.path, &warnings);
        REQUIRE(warnings.size() == 1);
        CHECK(warnings[0].find(run_c.path) != std::string::npos);
        // Intersection is steps 1 and 2: means (0.2+0.9)/2 and (0.0+0.7)/2.
        const auto rows = parse_report(out.path);
        REQUIRE(rows.size() == 2);
        CHECK(near(rows[0][1], 0.55));
        CHECK(near(rows[1][1], 0.35));
    }

    SUBCASE("input validation") {
        CHECK_THROWS_AS(write_report_ema({}, 0.5, out.path, nullptr), InvalidInputError);
        CHECK_THROWS_AS(write_report_ema({run_a.path}, 0.0, out.path, nullptr),
                        InvalidInputError);
        TempFile empty_run("doge_run_empty.csv");
        {
            MetricsWriter w(empty_run.path);
            MetricsRow r;
            r.round = 1;
            r.stage = Stage::eval;
            r.step = 1;
            r.pass_rate_eval = 0.5;
            w.append(r);
            w.finalize();
        }
        CHECK_THROWS_AS(write_report_ema({empty_run.path}, 0.5, out.path, nullptr),
                        InvalidInputError);
    }
}
