#include "wagcn/config.hpp"

#include <fstream>
#include <set>

#include "wagcn/errors.hpp"

using nlohmann::json;

namespace wagcn {

void TrainConfig::validate() const {
    if (t == 0) throw validation_error("config: t must be >= 1");
    if (batch_size == 0) throw validation_error("config: batch_size must be >= 1");
    if (lr < 0.0) throw validation_error("config: lr must be >= 0");
    if (weight_decay < 0.0) throw validation_error("config: weight_decay must be >= 0");
    if (dropout < 0.0 || dropout >= 1.0)
        throw validation_error("config: dropout must be in [0, 1)");
    if (eval_every == 0) throw validation_error("config: eval_every must be >= 1");
    if (precision != "double" && precision != "single")
        throw validation_error("config: precision must be \"double\" or \"single\", got \"" +
                               precision + "\"");
    // dims chain and the rest are validated through ModelSpec
    to_model_spec(1).validate();
}

ModelSpec TrainConfig::to_model_spec(std::size_t input_dim) const {
    ModelSpec spec;
    spec.input_dim = input_dim;
    spec.dims = dims;
    spec.embed_dim = embed_dim;
    spec.variant = variant;
    spec.mode = mode;
    spec.residual = residual;
    spec.dropout = dropout;
    spec.train_t = t;
    return spec;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw format_error(path + ": invalid JSON: " + e.what());
    }
}

void save_json_file(const std::string& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out << j.dump(2) << "\n";
    if (!out) throw io_error("write failed for " + path);
}

namespace {

void require_object(const json& j, const char* what) {
    if (!j.is_object())
        throw validation_error(std::string(what) + ": expected a JSON object");
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* what) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw validation_error(std::string(what) + ": unknown key \"" + it.key() + "\"");
}

template <typename T>
void get_to(const json& j, const char* key, T& out, const char* what) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        throw validation_error(std::string(what) + ": bad value for \"" + key + "\": " +
                               e.what());
    }
}

} // namespace

TrainConfig train_config_from_json(const json& j) {
    require_object(j, "train config");
    static const std::set<std::string> known = {
        "t",     "epochs",  "batch_size", "lr",   "weight_decay", "dropout",   "dims",
        "embed_dim", "variant", "mode",   "residual", "seed",     "eval_every", "precision"};
    reject_unknown(j, known, "train config");

    TrainConfig cfg;
    get_to(j, "t", cfg.t, "train config");
    get_to(j, "epochs", cfg.epochs, "train config");
    get_to(j, "batch_size", cfg.batch_size, "train config");
    get_to(j, "lr", cfg.lr, "train config");
    get_to(j, "weight_decay", cfg.weight_decay, "train config");
    get_to(j, "dropout", cfg.dropout, "train config");
    get_to(j, "dims", cfg.dims, "train config");
    get_to(j, "embed_dim", cfg.embed_dim, "train config");
    if (j.contains("variant")) cfg.variant = graph_variant_from_string(j.at("variant"));
    if (j.contains("mode")) cfg.mode = graph_mode_from_string(j.at("mode"));
    get_to(j, "residual", cfg.residual, "train config");
    get_to(j, "seed", cfg.seed, "train config");
    get_to(j, "eval_every", cfg.eval_every, "train config");
    get_to(j, "precision", cfg.precision, "train config");
    cfg.validate();
    return cfg;
}

json train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["t"] = cfg.t;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["lr"] = cfg.lr;
    j["weight_decay"] = cfg.weight_decay;
    j["dropout"] = cfg.dropout;
    j["dims"] = cfg.dims;
    j["embed_dim"] = cfg.embed_dim;
    j["variant"] = to_string(cfg.variant);
    j["mode"] = to_string(cfg.mode);
    j["residual"] = cfg.residual;
    j["seed"] = cfg.seed;
    j["eval_every"] = cfg.eval_every;
    j["precision"] = cfg.precision;
    return j;
}

SynthConfig synth_config_from_json(const json& j) {
    require_object(j, "synth config");
    static const std::set<std::string> known = {
        "num_normal", "num_abnormal", "test_normal", "test_abnormal", "d",
        "segments_min", "segments_max", "burst_min", "burst_max", "delta", "sigma", "seed"};
    reject_unknown(j, known, "synth config");

    SynthConfig cfg;
    get_to(j, "num_normal", cfg.num_normal, "synth config");
    get_to(j, "num_abnormal", cfg.num_abnormal, "synth config");
    get_to(j, "test_normal", cfg.test_normal, "synth config");
    get_to(j, "test_abnormal", cfg.test_abnormal, "synth config");
    get_to(j, "d", cfg.d, "synth config");
    get_to(j, "segments_min", cfg.segments_min, "synth config");
    get_to(j, "segments_max", cfg.segments_max, "synth config");
    get_to(j, "burst_min", cfg.burst_min, "synth config");
    get_to(j, "burst_max", cfg.burst_max, "synth config");
    get_to(j, "delta", cfg.delta, "synth config");
    get_to(j, "sigma", cfg.sigma, "synth config");
    get_to(j, "seed", cfg.seed, "synth config");
    cfg.validate();
    return cfg;
}

json synth_config_to_json(const SynthConfig& cfg) {
    json j;
    j["num_normal"] = cfg.num_normal;
    j["num_abnormal"] = cfg.num_abnormal;
    j["test_normal"] = cfg.test_normal;
    j["test_abnormal"] = cfg.test_abnormal;
    j["d"] = cfg.d;
    j["segments_min"] = cfg.segments_min;
    j["segments_max"] = cfg.segments_max;
    j["burst_min"] = cfg.burst_min;
    j["burst_max"] = cfg.burst_max;
    j["delta"] = cfg.delta;
    j["sigma"] = cfg.sigma;
    j["seed"] = cfg.seed;
    return j;
}

GradcheckConfig gradcheck_config_from_json(const json& j) {
    require_object(j, "gradcheck config");
    static const std::set<std::string> known = {"t",    "d",      "dims",      "embed_dim",
                                                "variant", "mode", "residual", "dropout",
                                                "seed", "h",      "tolerance"};
    reject_unknown(j, known, "gradcheck config");

    GradcheckConfig cfg;
    get_to(j, "t", cfg.t, "gradcheck config");
    get_to(j, "d", cfg.d, "gradcheck config");
    get_to(j, "dims", cfg.dims, "gradcheck config");
    get_to(j, "embed_dim", cfg.embed_dim, "gradcheck config");
    if (j.contains("variant")) cfg.variant = graph_variant_from_string(j.at("variant"));
    if (j.contains("mode")) cfg.mode = graph_mode_from_string(j.at("mode"));
    get_to(j, "residual", cfg.residual, "gradcheck config");
    get_to(j, "dropout", cfg.dropout, "gradcheck config");
    get_to(j, "seed", cfg.seed, "gradcheck config");
    get_to(j, "h", cfg.h, "gradcheck config");
    get_to(j, "tolerance", cfg.tolerance, "gradcheck config");
    if (cfg.t > 16 || cfg.d > 32)
        throw validation_error(
            "gradcheck config: keep t <= 16 and d <= 32 so finite differencing stays tractable");
    if (!(cfg.h > 0.0)) throw validation_error("gradcheck config: h must be > 0");
    if (cfg.tolerance < 0.0)
        throw validation_error("gradcheck config: tolerance must be >= 0");
    cfg.to_model_spec().validate();
    return cfg;
}

json gradcheck_config_to_json(const GradcheckConfig& cfg) {
    json j;
    j["t"] = cfg.t;
    j["d"] = cfg.d;
    j["dims"] = cfg.dims;
    j["embed_dim"] = cfg.embed_dim;
    j["variant"] = to_string(cfg.variant);
    j["mode"] = to_string(cfg.mode);
    j["residual"] = cfg.residual;
    j["dropout"] = cfg.dropout;
    j["seed"] = cfg.seed;
    j["h"] = cfg.h;
    j["tolerance"] = cfg.tolerance;
    return j;
}

json model_spec_to_json(const ModelSpec& spec) {
    json j;
    j["input_dim"] = spec.input_dim;
    j["dims"] = spec.dims;
    j["embed_dim"] = spec.embed_dim;
    j["variant"] = to_string(spec.variant);
    j["mode"] = to_string(spec.mode);
    j["residual"] = spec.residual;
    j["dropout"] = spec.dropout;
    j["train_t"] = spec.train_t;
    return j;
}

ModelSpec model_spec_from_json(const json& j) {
    require_object(j, "model spec");
    static const std::set<std::string> known = {"input_dim", "dims",     "embed_dim", "variant",
                                                "mode",      "residual", "dropout",   "train_t"};
    reject_unknown(j, known, "model spec");
    for (const auto& k : known)
        if (!j.contains(k))
            throw validation_error("model spec: missing key \"" + std::string(k) + "\"");

    ModelSpec spec;
    get_to(j, "input_dim", spec.input_dim, "model spec");
    get_to(j, "dims", spec.dims, "model spec");
    get_to(j, "embed_dim", spec.embed_dim, "model spec");
    spec.variant = graph_variant_from_string(j.at("variant"));
    spec.mode = graph_mode_from_string(j.at("mode"));
    get_to(j, "residual", spec.residual, "model spec");
    get_to(j, "dropout", spec.dropout, "model spec");
    get_to(j, "train_t", spec.train_t, "model spec");
    spec.validate();
    return spec;
}

void apply_override(json& doc, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw validation_error("override \"" + assignment + "\" is not of the form key=value");
    const std::string dotted = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw; // not valid JSON: treat as a plain string
    }

    json* node = &doc;
    std::size_t pos = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', pos);
        const std::string key = dotted.substr(pos, dot - pos);
        if (key.empty())
            throw validation_error("override \"" + assignment + "\" has an empty key segment");
        if (!node->is_object() || !node->contains(key))
            throw validation_error("override targets unknown key \"" + dotted + "\"");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

} // namespace wagcn
