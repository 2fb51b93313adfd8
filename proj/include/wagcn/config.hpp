#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "wagcn/data.hpp"
#include "wagcn/gradcheck.hpp"
#include "wagcn/model.hpp"

namespace wagcn {

// Everything a training run needs besides the dataset paths. input_dim is
// inferred from the feature files, not configured.
struct TrainConfig {
    std::size_t t = 150;
    std::size_t epochs = 100;
    std::size_t batch_size = 64;
    double lr = 0.001;
    double weight_decay = 0.0005;
    double dropout = 0.6;
    std::vector<std::size_t> dims = {512, 128, 32, 1};
    std::size_t embed_dim = 512;
    GraphVariant variant = GraphVariant::DynA1;
    GraphMode mode = GraphMode::Global;
    bool residual = true;
    std::uint64_t seed = 0;
    std::size_t eval_every = 10;
    std::string precision = "double"; // or "single"

    void validate() const;
    ModelSpec to_model_spec(std::size_t input_dim) const; // mode as configured
};

nlohmann::json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const nlohmann::json& j);

// from_json parsers reject unknown keys and type mismatches with messages
// naming the offending key.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

SynthConfig synth_config_from_json(const nlohmann::json& j);
nlohmann::json synth_config_to_json(const SynthConfig& cfg);

GradcheckConfig gradcheck_config_from_json(const nlohmann::json& j);
nlohmann::json gradcheck_config_to_json(const GradcheckConfig& cfg);

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// Dotted-key override "a.b=value"; the value is parsed as JSON when possible,
// else taken as a string. The key must already exist in the document.
void apply_override(nlohmann::json& doc, const std::string& assignment);

} // namespace wagcn
