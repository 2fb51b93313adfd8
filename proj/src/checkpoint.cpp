#include "wagcn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"

#include "wagcn/config.hpp"
#include "wagcn/errors.hpp"

using nlohmann::json;

namespace wagcn {

namespace {

constexpr char kMagic[4] = {'F', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::ostream& out, std::uint16_t v) {
    char b[2] = {char(v & 0xFF), char((v >> 8) & 0xFF)};
    out.write(b, 2);
}

void put_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = char((v >> (8 * i)) & 0xFF);
    out.write(b, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = char((v >> (8 * i)) & 0xFF);
    out.write(b, 8);
}

void read_exact(std::istream& in, void* dst, std::size_t n, const std::string& path,
                const char* what) {
    in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw format_error(path + ": truncated checkpoint while reading " + what);
}

std::uint16_t get_u16(std::istream& in, const std::string& path, const char* what) {
    unsigned char b[2];
    read_exact(in, b, 2, path, what);
    return std::uint16_t(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& in, const std::string& path, const char* what) {
    unsigned char b[4];
    read_exact(in, b, 4, path, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(std::istream& in, const std::string& path, const char* what) {
    unsigned char b[8];
    read_exact(in, b, 8, path, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

json read_meta_json(std::istream& in, const std::string& path) {
    char magic[4];
    read_exact(in, magic, 4, path, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw format_error(path + ": not a checkpoint file (bad magic at offset 0)");
    const std::uint32_t version = get_u32(in, path, "version");
    if (version != kVersion)
        throw format_error(path + ": unsupported checkpoint version " + std::to_string(version));
    const std::uint64_t meta_len = get_u64(in, path, "meta length");
    if (meta_len > (1u << 20))
        throw format_error(path + ": implausible metadata length " + std::to_string(meta_len));
    std::string meta(static_cast<std::size_t>(meta_len), '\0');
    read_exact(in, meta.data(), meta.size(), path, "metadata");
    try {
        return json::parse(meta);
    } catch (const json::exception& e) {
        throw format_error(path + ": corrupt checkpoint metadata: " + e.what());
    }
}

CheckpointMeta meta_from_json(const json& j, const std::string& path) {
    try {
        CheckpointMeta meta;
        meta.precision = j.at("precision").get<std::string>();
        meta.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& spec : j.at("branch_specs"))
            meta.branch_specs.push_back(model_spec_from_json(spec));
        if (meta.branch_specs.empty())
            throw format_error(path + ": checkpoint has no branches");
        if (meta.precision != "double" && meta.precision != "single")
            throw format_error(path + ": unknown precision \"" + meta.precision + "\"");
        return meta;
    } catch (const json::exception& e) {
        throw format_error(path + ": bad checkpoint metadata: " + e.what());
    }
}

template <typename T>
constexpr const char* precision_name() {
    return sizeof(T) == 4 ? "single" : "double";
}

} // namespace

CheckpointMeta read_checkpoint_meta(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint " + path);
    return meta_from_json(read_meta_json(in, path), path);
}

template <typename T>
void save_checkpoint(const std::string& path, const std::vector<ModelParams<T>>& branches,
                     std::uint64_t seed) {
    if (branches.empty()) throw validation_error("save_checkpoint: no branches");

    json meta;
    meta["format_version"] = kVersion;
    meta["precision"] = precision_name<T>();
    meta["seed"] = seed;
    json specs = json::array();
    for (const auto& b : branches) specs.push_back(model_spec_to_json(b.spec));
    meta["branch_specs"] = specs;
    const std::string meta_str = meta.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open " + path + " for writing");
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u64(out, meta_str.size());
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

    const Dtype dtype = sizeof(T) == 4 ? Dtype::Single : Dtype::Double;
    std::size_t entry_count = 0;
    for (const auto& b : branches) entry_count += b.named_tensors().size();
    put_u32(out, static_cast<std::uint32_t>(entry_count));

    for (std::size_t k = 0; k < branches.size(); ++k) {
        for (const auto& [name, tensor] : branches[k].named_tensors()) {
            const std::string full = "b" + std::to_string(k) + "." + name;
            if (full.size() > UINT16_MAX)
                throw validation_error("save_checkpoint: parameter name too long");
            put_u16(out, static_cast<std::uint16_t>(full.size()));
            out.write(full.data(), static_cast<std::streamsize>(full.size()));
            write_tensor(out, TensorData::from_matrix(*tensor, dtype), path + ":" + full);
        }
    }
    if (!out) throw io_error("write failed for checkpoint " + path);
}

template <typename T>
std::vector<ModelParams<T>> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open checkpoint " + path);

    const CheckpointMeta meta = meta_from_json(read_meta_json(in, path), path);
    if (meta.precision != precision_name<T>())
        throw validation_error(path + ": checkpoint precision is " + meta.precision +
                               ", loader instantiated for " + precision_name<T>());

    const std::uint32_t entry_count = get_u32(in, path, "entry count");
    std::map<std::string, TensorData> entries;
    for (std::uint32_t i = 0; i < entry_count; ++i) {
        const std::uint16_t name_len = get_u16(in, path, "entry name length");
        std::string name(name_len, '\0');
        read_exact(in, name.data(), name.size(), path, "entry name");
        if (!entries.emplace(name, read_tensor(in, path + ":" + name)).second)
            throw format_error(path + ": duplicate checkpoint entry " + name);
    }

    std::vector<ModelParams<T>> branches;
    for (std::size_t k = 0; k < meta.branch_specs.size(); ++k) {
        ModelParams<T> params = make_params_shell<T>(meta.branch_specs[k]);
        for (auto& [name, tensor] : params.named_tensors()) {
            const std::string full = "b" + std::to_string(k) + "." + name;
            auto it = entries.find(full);
            if (it == entries.end())
                throw format_error(path + ": checkpoint is missing entry " + full);
            const TensorData& td = it->second;
            if (td.dims.size() != 2 || td.dims[0] != tensor->rows() ||
                td.dims[1] != tensor->cols())
                throw format_error(path + ": entry " + full + " has wrong shape");
            *tensor = td.matrix<T>();
            entries.erase(it);
        }
        branches.push_back(std::move(params));
    }
    if (!entries.empty())
        throw format_error(path + ": checkpoint holds unexpected entry " +
                           entries.begin()->first);
    return branches;
}

template void save_checkpoint<float>(const std::string&, const std::vector<ModelParams<float>>&,
                                     std::uint64_t);
template void save_checkpoint<double>(const std::string&,
                                      const std::vector<ModelParams<double>>&, std::uint64_t);
template std::vector<ModelParams<float>> load_checkpoint<float>(const std::string&);
template std::vector<ModelParams<double>> load_checkpoint<double>(const std::string&);

} // namespace wagcn
