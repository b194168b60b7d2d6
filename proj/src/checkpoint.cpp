#include "doge/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "doge/errors.hpp"
#include "doge/util.hpp"

namespace doge {

using nlohmann::json;

namespace {

json encode_doubles(const std::vector<double>& xs) {
    json arr = json::array();
    for (double x : xs) arr.push_back(double_to_hex(x));
    return arr;
}

std::vector<double> decode_doubles(const json& arr, const char* what) {
    if (!arr.is_array()) throw IoError(std::string("checkpoint: ") + what + " must be an array");
    std::vector<double> out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_string()) {
            throw IoError(std::string("checkpoint: ") + what + " entries must be hex strings");
        }
        out.push_back(hex_to_double(v.get<std::string>()));
    }
    return out;
}

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw IoError(std::string("checkpoint: missing field '") + key + "'");
    return *it;
}

} // namespace

std::string checkpoint_to_json(const Checkpoint& ckpt) {
    json j;
    j["version"] = ckpt.version;
    j["vocab"] = {{"digits", ckpt.vocab.digit_count()},
                  {"letters", ckpt.vocab.letter_count()},
                  {"markers", ckpt.vocab.marker_count()}};
    j["feature_dims"] = {{"vocab_size", ckpt.params.space.vocab_size},
                         {"position_buckets", ckpt.params.space.position_buckets},
                         {"context_buckets", ckpt.params.space.context_buckets},
                         {"dim", ckpt.params.space.dim()}};
    j["weights"] = {{"encoding", "hex-float"},
                    {"rows", ckpt.params.weights.rows},
                    {"cols", ckpt.params.weights.cols},
                    {"data", encode_doubles(ckpt.params.weights.data)}};
    j["temperature"] = ckpt.temperature;
    j["rng_state"] = {{"root_seed", std::to_string(ckpt.rng_root)}, {"scheme", ckpt.rng_scheme}};
    json opt;
    opt["t"] = ckpt.opt.t;
    opt["m"] = encode_doubles(ckpt.opt.m);
    opt["v"] = encode_doubles(ckpt.opt.v);
    j["optimizer_state"] = opt;
    j["position"] = {{"round", ckpt.round}, {"stage", ckpt.stage}, {"step", ckpt.step}};
    return j.dump(2);
}

Checkpoint checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("checkpoint: invalid JSON: ") + e.what());
    }
    const int version = require(j, "version").get<int>();
    if (version != kCheckpointVersion) {
        throw IoError("checkpoint: unsupported version " + std::to_string(version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
    }

    Checkpoint ckpt;
    ckpt.version = version;
    const json& jv = require(j, "vocab");
    ckpt.vocab = Vocabulary::make(require(jv, "digits").get<int>(),
                                  require(jv, "letters").get<int>(),
                                  require(jv, "markers").get<int>());

    const json& jd = require(j, "feature_dims");
    FeatureSpace space;
    space.vocab_size = require(jd, "vocab_size").get<int>();
    space.position_buckets = require(jd, "position_buckets").get<int>();
    space.context_buckets = require(jd, "context_buckets").get<int>();
    if (space.vocab_size != ckpt.vocab.size()) {
        throw IoError("checkpoint: feature_dims.vocab_size disagrees with vocab");
    }
    if (require(jd, "dim").get<int>() != space.dim()) {
        throw IoError("checkpoint: feature_dims.dim disagrees with bucket counts");
    }

    const json& jw = require(j, "weights");
    if (require(jw, "encoding").get<std::string>() != "hex-float") {
        throw IoError("checkpoint: unknown weight encoding");
    }
    const int rows = require(jw, "rows").get<int>();
    const int cols = require(jw, "cols").get<int>();
    if (rows != space.dim() || cols != space.vocab_size) {
        throw IoError("checkpoint: weight shape disagrees with feature_dims");
    }
    ckpt.params.space = space;
    ckpt.params.weights.rows = rows;
    ckpt.params.weights.cols = cols;
    ckpt.params.weights.data = decode_doubles(require(jw, "data"), "weights.data");
    if (ckpt.params.weights.data.size() != static_cast<size_t>(rows) * cols) {
        throw IoError("checkpoint: weight count disagrees with shape");
    }

    ckpt.temperature = require(j, "temperature").get<double>();
    const json& jr = require(j, "rng_state");
    ckpt.rng_root = std::stoull(require(jr, "root_seed").get<std::string>());
    ckpt.rng_scheme = require(jr, "scheme").get<std::string>();

    const json& jo = require(j, "optimizer_state");
    ckpt.opt.t = require(jo, "t").get<int64_t>();
    ckpt.opt.m = decode_doubles(require(jo, "m"), "optimizer_state.m");
    ckpt.opt.v = decode_doubles(require(jo, "v"), "optimizer_state.v");
    if (!ckpt.opt.empty() &&
        (ckpt.opt.m.size() != ckpt.params.weights.data.size() ||
         ckpt.opt.v.size() != ckpt.params.weights.data.size())) {
        throw IoError("checkpoint: optimizer state size disagrees with weights");
    }

    if (j.contains("position")) {
        const json& jp = j["position"];
        ckpt.round = require(jp, "round").get<int>();
        ckpt.stage = require(jp, "stage").get<std::string>();
        ckpt.step = require(jp, "step").get<int64_t>();
    }
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string payload = checkpoint_to_json(ckpt);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("checkpoint: cannot open " + tmp + " for writing");
        out << payload << '\n';
        if (!out.flush()) throw IoError("checkpoint: write to " + tmp + " failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("checkpoint: rename to " + path + " failed: " + ec.message());
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return checkpoint_from_json(text);
}

} // namespace doge
