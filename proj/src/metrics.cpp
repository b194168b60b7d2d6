#include "doge/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include <json.hpp>

#include "doge/errors.hpp"
#include "doge/util.hpp"

namespace doge {

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::warmup: return "warmup";
        case Stage::stage1: return "stage1";
        case Stage::stage2: return "stage2";
        case Stage::eval: return "eval";
    }
    throw InvalidInputError("unknown stage value");
}

Stage stage_from_name(const std::string& name) {
    if (name == "warmup") return Stage::warmup;
    if (name == "stage1") return Stage::stage1;
    if (name == "stage2") return Stage::stage2;
    if (name == "eval") return Stage::eval;
    throw InvalidInputError("unknown stage name: " + name);
}

namespace {

std::string cell(const std::optional<double>& v) {
    return v ? double_to_string(*v) : std::string();
}

std::optional<double> parse_cell(const std::string& s) {
    if (s.empty()) return std::nullopt;
    size_t pos = 0;
    const double x = std::stod(s, &pos);
    if (pos != s.size()) throw IoError("metrics: bad numeric cell '" + s + "'");
    return x;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

} // namespace

MetricsWriter::MetricsWriter(std::string path) : path_(std::move(path)) {
    out_.open(path_ + ".tmp", std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("metrics: cannot open " + path_ + ".tmp");
    out_ << kMetricsHeader << '\n';
}

MetricsWriter::~MetricsWriter() {
    // An unfinalized writer leaves only the .tmp file behind.
    if (out_.is_open()) out_.close();
}

void MetricsWriter::append(const MetricsRow& row) {
    if (finalized_) throw ContractError("metrics: append after finalize");
    const int stage_ord = static_cast<int>(row.stage);
    if (have_last_) {
        const auto prev = std::make_tuple(last_round_, last_stage_, last_step_);
        const auto cur = std::make_tuple(row.round, stage_ord, row.step);
        if (cur <= prev) {
            throw ContractError("metrics: rows must be strictly increasing in "
                                "(round, stage, step)");
        }
    }
    have_last_ = true;
    last_round_ = row.round;
    last_stage_ = stage_ord;
    last_step_ = row.step;

    out_ << row.round << ',' << stage_name(row.stage) << ',' << row.step << ','
         << cell(row.mean_reward) << ',' << cell(row.mean_entropy) << ',' << cell(row.kl_value)
         << ',' << cell(row.clipped_fraction) << ',' << cell(row.grad_norm) << ','
         << cell(row.pass_rate_eval) << ',' << row.wall_ms << '\n';
    if (!out_) throw IoError("metrics: write failed");
    out_.flush();
}

void MetricsWriter::finalize() {
    if (finalized_) return;
    out_.close();
    std::error_code ec;
    std::filesystem::rename(path_ + ".tmp", path_, ec);
    if (ec) throw IoError("metrics: rename to " + path_ + " failed: " + ec.message());
    finalized_ = true;
}

std::vector<MetricsRow> read_metrics(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("metrics: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("metrics: empty file " + path);
    if (line != kMetricsHeader) throw IoError("metrics: unexpected header in " + path);

    std::vector<MetricsRow> rows;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != 10) {
            throw IoError("metrics: " + path + ":" + std::to_string(line_no) +
                          ": expected 10 columns");
        }
        MetricsRow row;
        row.round = std::stoi(fields[0]);
        row.stage = stage_from_name(fields[1]);
        row.step = std::stoll(fields[2]);
        row.mean_reward = parse_cell(fields[3]);
        row.mean_entropy = parse_cell(fields[4]);
        row.kl_value = parse_cell(fields[5]);
        row.clipped_fraction = parse_cell(fields[6]);
        row.grad_norm = parse_cell(fields[7]);
        row.pass_rate_eval = parse_cell(fields[8]);
        row.wall_ms = std::stoll(fields[9]);
        rows.push_back(row);
    }
    return rows;
}

void save_manifest(const RunManifest& manifest, const std::string& path) {
    nlohmann::json j;
    j["config"] = nlohmann::json::parse(manifest.config_json);
    j["seed"] = manifest.seed;
    j["code_version"] = manifest.code_version;
    j["vocab_digest"] = manifest.vocab_digest;
    j["start_time"] = manifest.start_time;
    j["end_time"] = manifest.end_time.empty() ? nlohmann::json(nullptr)
                                              : nlohmann::json(manifest.end_time);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("manifest: cannot open " + tmp);
        out << j.dump(2) << '\n';
        if (!out.flush()) throw IoError("manifest: write failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("manifest: rename failed: " + ec.message());
}

std::vector<double> ema_series(const std::vector<double>& xs, double alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInputError("ema alpha must be in (0, 1]");
    std::vector<double> out;
    out.reserve(xs.size());
    double s = 0.0;
    for (size_t i = 0; i < xs.size(); ++i) {
        s = i == 0 ? xs[0] : alpha * xs[i] + (1.0 - alpha) * s;
        out.push_back(s);
    }
    return out;
}

namespace {

// A run's entropy curve keyed by (stage, step), averaged over rounds: the
// per-iteration curves collapse onto one stage-relative grid.
std::map<std::pair<int, int64_t>, double> entropy_grid(const std::vector<MetricsRow>& rows) {
    std::map<std::pair<int, int64_t>, std::pair<double, int>> acc;
    for (const auto& row : rows) {
        if (!row.mean_entropy) continue;
        auto& slot = acc[{static_cast<int>(row.stage), row.step}];
        slot.first += *row.mean_entropy;
        slot.second += 1;
    }
    std::map<std::pair<int, int64_t>, double> out;
    for (const auto& [key, slot] : acc) out[key] = slot.first / slot.second;
    return out;
}

void write_ema_csv(const std::string& path, const std::vector<double>& raw, double alpha) {
    const auto ema = ema_series(raw, alpha);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("report: cannot open " + tmp);
        out << "step,raw_mean,ema\n";
        for (size_t i = 0; i < raw.size(); ++i) {
            out << i << ',' << double_to_string(raw[i]) << ',' << double_to_string(ema[i])
                << '\n';
        }
        if (!out.flush()) throw IoError("report: write failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("report: rename failed: " + ec.message());
}

} // namespace

void write_report_ema(const std::vector<std::string>& metric_paths, double alpha,
                      const std::string& out_path, std::vector<std::string>* warnings) {
    if (metric_paths.empty()) throw InvalidInputError("report: no input runs");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidInputError("report: alpha must be in (0,1]");

    std::vector<std::map<std::pair<int, int64_t>, double>> grids;
    for (const auto& path : metric_paths) {
        auto grid = entropy_grid(read_metrics(path));
        if (grid.empty()) throw InvalidInputError("report: " + path + " has no entropy rows");
        grids.push_back(std::move(grid));
    }

    // Intersection of the (stage, step) grids.
    std::vector<std::pair<int, int64_t>> keys;
    for (const auto& [key, value] : grids[0]) {
        bool everywhere = true;
        for (size_t i = 1; i < grids.size(); ++i) {
            if (!grids[i].count(key)) {
                everywhere = false;
                break;
            }
        }
        if (everywhere) keys.push_back(key);
    }
    if (keys.empty()) throw InvalidInputError("report: runs share no (stage, step) points");
    for (size_t i = 0; i < grids.size(); ++i) {
        if (grids[i].size() != keys.size() && warnings) {
            warnings->push_back(metric_paths[i] + ": grid misaligned, using intersection of " +
                                std::to_string(keys.size()) + " points");
        }
    }

    std::vector<double> cross(keys.size(), 0.0);
    for (size_t r = 0; r < grids.size(); ++r) {
        std::vector<double> raw;
        raw.reserve(keys.size());
        for (size_t i = 0; i < keys.size(); ++i) {
            const double x = grids[r].at(keys[i]);
            raw.push_back(x);
            cross[i] += x;
        }
        write_ema_csv(out_path + ".run" + std::to_string(r) + ".csv", raw, alpha);
    }
    for (double& x : cross) x /= static_cast<double>(grids.size());
    write_ema_csv(out_path, cross, alpha);
}

} // namespace doge
