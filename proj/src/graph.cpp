#include "wagcn/graph.hpp"

namespace wagcn {

std::string to_string(GraphVariant v) {
    switch (v) {
        case GraphVariant::DynA1: return "dyn_a1";
        case GraphVariant::DynA2: return "dyn_a2";
        case GraphVariant::ParaA: return "para_a";
        case GraphVariant::CsimA: return "csim_a";
        case GraphVariant::JsimA: return "jsim_a";
    }
    return "?";
}

std::string to_string(GraphMode m) {
    switch (m) {
        case GraphMode::Global: return "global";
        case GraphMode::FeatureOnly: return "feature_only";
        case GraphMode::TemporalOnly: return "temporal_only";
        case GraphMode::LateFusion: return "late_fusion";
    }
    return "?";
}

GraphVariant graph_variant_from_string(const std::string& s) {
    if (s == "dyn_a1") return GraphVariant::DynA1;
    if (s == "dyn_a2") return GraphVariant::DynA2;
    if (s == "para_a") return GraphVariant::ParaA;
    if (s == "csim_a") return GraphVariant::CsimA;
    if (s == "jsim_a") return GraphVariant::JsimA;
    throw validation_error("unknown graph variant '" + s +
                           "' (expected dyn_a1|dyn_a2|para_a|csim_a|jsim_a)");
}

GraphMode graph_mode_from_string(const std::string& s) {
    if (s == "global") return GraphMode::Global;
    if (s == "feature_only") return GraphMode::FeatureOnly;
    if (s == "temporal_only") return GraphMode::TemporalOnly;
    if (s == "late_fusion") return GraphMode::LateFusion;
    throw validation_error("unknown graph mode '" + s +
                           "' (expected global|feature_only|temporal_only|late_fusion)");
}

} // namespace wagcn
