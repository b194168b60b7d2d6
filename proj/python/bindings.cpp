#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "doge/checkpoint.hpp"
#include "doge/config.hpp"
#include "doge/curriculum.hpp"
#include "doge/errors.hpp"
#include "doge/gradcheck.hpp"
#include "doge/grpo.hpp"
#include "doge/metrics.hpp"
#include "doge/orchestrator.hpp"
#include "doge/policy.hpp"
#include "doge/rewards.hpp"
#include "doge/rng.hpp"

namespace py = pybind11;
using namespace doge;

namespace {

py::object opt(const std::optional<double>& v) {
    return v ? py::cast(*v) : py::object(py::none());
}

py::dict row_to_dict(const MetricsRow& row) {
    py::dict d;
    d["round"] = row.round;
    d["stage"] = stage_name(row.stage);
    d["step"] = row.step;
    d["mean_reward"] = opt(row.mean_reward);
    d["mean_entropy"] = opt(row.mean_entropy);
    d["kl_value"] = opt(row.kl_value);
    d["clipped_fraction"] = opt(row.clipped_fraction);
    d["grad_norm"] = opt(row.grad_norm);
    d["pass_rate_eval"] = opt(row.pass_rate_eval);
    d["wall_ms"] = row.wall_ms;
    return d;
}

py::dict train_py(const RunConfig& cfg, const std::string& out_dir) {
    const RunResult res = [&] {
        py::gil_scoped_release release;
        return run(cfg, out_dir);
    }();

    py::dict d;
    d["out_dir"] = out_dir;
    d["vocab_size"] = res.vocab.size();
    d["final_digest"] = res.final_params.digest();
    d["final_eval"] = res.final_eval.aggregate;
    py::list rows;
    for (const auto& row : res.rows) rows.append(row_to_dict(row));
    d["rows"] = rows;
    py::list handoffs;
    for (const auto& h : res.handoffs) {
        py::dict hd;
        hd["round"] = h.round;
        hd["base"] = h.base_digest;
        hd["thinker_start"] = h.thinker_start_digest;
        hd["solver_start"] = h.solver_start_digest;
        hd["solver_end"] = h.solver_end_digest;
        hd["stage1_end"] = h.stage1_end_digest;
        hd["stage2_start"] = h.stage2_start_digest;
        hd["stage2_end"] = h.stage2_end_digest;
        handoffs.append(hd);
    }
    d["handoffs"] = handoffs;
    d["stage2_task_ids"] = res.stage2_task_ids;
    return d;
}

py::dict eval_checkpoint_py(const std::string& checkpoint, const std::string& tasks_path, int k,
                            double temperature, uint64_t seed, int max_response_len) {
    if (k < 1) throw InvalidInputError("eval k must be >= 1");
    const Checkpoint ckpt = load_checkpoint(checkpoint);
    const auto records = load_pool(tasks_path);
    if (records.empty()) throw InvalidInputError("eval task pool is empty");
    std::vector<TaskInstance> tasks;
    tasks.reserve(records.size());
    for (const auto& rec : records) {
        check_oracle_consistency(rec.task, ckpt.vocab);
        tasks.push_back(rec.task);
    }

    const PolicySnapshot policy(ckpt.vocab, ckpt.params, SnapshotRole::current, temperature);
    RngStream rng(seed);
    const MeanAtK mk = [&] {
        py::gil_scoped_release release;
        return mean_at_k(policy, tasks, k, rng, max_response_len);
    }();

    std::map<std::string, std::pair<double, int>> by_family;
    for (size_t i = 0; i < tasks.size(); ++i) {
        auto& acc = by_family[tasks[i].family];
        acc.first += mk.per_task[i];
        acc.second += 1;
    }
    py::dict d;
    d["aggregate"] = mk.aggregate;
    d["k"] = k;
    d["tasks"] = tasks.size();
    py::dict fam;
    for (const auto& [family, acc] : by_family) {
        fam[py::str(family)] = acc.first / acc.second;
    }
    d["per_family"] = fam;
    return d;
}

py::dict gradcheck_py(int trials, uint64_t seed) {
    GradCheckOptions opts;
    opts.trials = trials;
    opts.seed = seed;
    const GradCheckResult res = [&] {
        py::gil_scoped_release release;
        return run_gradcheck(opts);
    }();
    py::dict d;
    d["max_rel_err"] = res.max_rel_err;
    d["instances"] = res.instances;
    d["flat_tokens"] = res.flat_tokens;
    d["slope_tokens"] = res.slope_tokens;
    d["worst_instance"] = res.worst_instance_json;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Two-stage decoupled GRPO trainer on synthetic verifiable tasks";

    py::register_exception<InvalidInputError>(m, "InvalidInputError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_RuntimeError);

    py::class_<RunConfig>(m, "RunConfig")
        .def_static("preset", &preset_config, py::arg("name"),
                    "Built-in presets: toy, paper-3b, paper-7b.")
        .def_static("from_json", &config_from_json, py::arg("text"),
                    "Strict parse; unknown or missing keys raise ValueError.")
        .def("to_json", &config_to_json)
        .def_readwrite("seed", &RunConfig::seed)
        .def_readwrite("rounds", &RunConfig::rounds)
        .def_readwrite("warmup_steps", &RunConfig::warmup_steps)
        .def_property(
            "mode", [](const RunConfig& c) { return mode_name(c.mode); },
            [](RunConfig& c, const std::string& name) { c.mode = mode_from_name(name); });

    m.def("train", &train_py, py::arg("config"), py::arg("out_dir"),
          "Full training run; writes metrics.csv, checkpoints and pools into out_dir and "
          "returns rows, handoff digests and the final evaluation.");

    m.def("eval_checkpoint", &eval_checkpoint_py, py::arg("checkpoint"), py::arg("tasks"),
          py::arg("k") = 4, py::arg("temperature") = 0.7, py::arg("seed") = 1,
          py::arg("max_response_len") = 12,
          "mean@k of a saved checkpoint over an LDJSON task pool.");

    m.def("normalize_advantages", &normalize_advantages, py::arg("rewards"),
          py::arg("adv_eps") = 1e-6,
          "Group-relative advantages: (r - mean) / (population std + adv_eps).");

    m.def("gradcheck", &gradcheck_py, py::arg("trials") = 200, py::arg("seed") = 2024,
          "Analytic surrogate gradient vs central finite differences on random instances.");
}
