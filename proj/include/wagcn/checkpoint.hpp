#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wagcn/data.hpp"
#include "wagcn/model.hpp"

namespace wagcn {

// Checkpoint container ("FCKP"):
//   magic "FCKP" | version u32 LE | meta_len u64 LE | meta JSON |
//   entry_count u32 LE | entries
// Each entry is name_len u16 LE + name + an embedded tensor blob (the same
// binary layout as standalone tensor files). Entry names are "b<k>.<param>",
// one branch for single-graph training, two for late fusion.

struct CheckpointMeta {
    std::string precision; // "double" or "single"
    std::uint64_t seed = 0;
    std::vector<ModelSpec> branch_specs;
};

// Reads only the header + metadata; used to dispatch on precision before
// loading tensors.
CheckpointMeta read_checkpoint_meta(const std::string& path);

template <typename T>
void save_checkpoint(const std::string& path, const std::vector<ModelParams<T>>& branches,
                     std::uint64_t seed);

template <typename T>
std::vector<ModelParams<T>> load_checkpoint(const std::string& path);

} // namespace wagcn
