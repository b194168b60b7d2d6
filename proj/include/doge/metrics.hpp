#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace doge {

inline constexpr const char* kMetricsHeader =
    "round,stage,step,mean_reward,mean_entropy,kl_value,clipped_fraction,grad_norm,"
    "pass_rate_eval,wall_ms";

// Stage ordering defines the (round, stage, step) monotonicity of the stream.
enum class Stage { warmup = 0, stage1 = 1, stage2 = 2, eval = 3 };

std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

// One metrics line. Training rows leave pass_rate_eval empty; eval rows leave
// the training columns empty. wall_ms is the only nondeterministic column.
struct MetricsRow {
    int round = 0;
    Stage stage = Stage::warmup;
    int64_t step = 0;
    std::optional<double> mean_reward;
    std::optional<double> mean_entropy;
    std::optional<double> kl_value;
    std::optional<double> clipped_fraction;
    std::optional<double> grad_norm;
    std::optional<double> pass_rate_eval;
    int64_t wall_ms = 0;
};

// Streams rows to <path>.tmp and renames to <path> on finalize, so an aborted
// run never leaves a file that looks complete. Enforces strict (round, stage,
// step) monotonicity on append.
class MetricsWriter {
public:
    explicit MetricsWriter(std::string path);
    ~MetricsWriter();

    void append(const MetricsRow& row);
    void finalize();

private:
    std::string path_;
    std::ofstream out_;
    bool finalized_ = false;
    bool have_last_ = false;
    int last_round_ = 0;
    int last_stage_ = 0;
    int64_t last_step_ = 0;
};

std::vector<MetricsRow> read_metrics(const std::string& path);

// Run provenance written next to the metrics: config snapshot, seed, code
// version, vocabulary digest, timestamps. Written at run start (end_time
// null) and rewritten whole at success.
struct RunManifest {
    std::string config_json;
    uint64_t seed = 0;
    std::string code_version;
    uint64_t vocab_digest = 0;
    std::string start_time;
    std::string end_time; // empty until the run completes
};

void save_manifest(const RunManifest& manifest, const std::string& path);

// EMA report over mean_entropy: aligns runs by (stage, step), averaging
// across rounds within each run and then across runs, and writes CSV columns
// step,raw_mean,ema to out_path plus per-run files <out_path>.runN.csv.
// Misaligned grids reduce to the intersection, with a warning per run
// appended to `warnings`. The step column is a flat 0-based index over the
// ordered (stage, step) grid.
void write_report_ema(const std::vector<std::string>& metric_paths, double alpha,
                      const std::string& out_path,
                      std::vector<std::string>* warnings = nullptr);

// The recurrence s_0 = x_0, s_t = alpha * x_t + (1 - alpha) * s_{t-1}.
std::vector<double> ema_series(const std::vector<double>& xs, double alpha);

} // namespace doge
