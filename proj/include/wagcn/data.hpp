#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "wagcn/errors.hpp"
#include "wagcn/tensor.hpp"

namespace wagcn {

// A segment is 16 consecutive frames; scores and ground truth expand by this
// factor when moving from segment to frame granularity.
inline constexpr std::size_t kFramesPerSegment = 16;

// ============================================================================
// Tensor files
// ============================================================================
//
// Binary layout (all multi-byte integers little-endian):
//   offset 0   magic   "FTNS"
//   offset 4   version u32, currently 1
//   offset 8   dtype   u8, 0 = single, 1 = double
//   offset 9   ndim    u8
//   offset 10  dims    ndim x u64
//   then       payload, row-major, little-endian

enum class Dtype : std::uint8_t { Single = 0, Double = 1 };

inline std::size_t dtype_size(Dtype d) { return d == Dtype::Single ? 4 : 8; }

// In-memory tensor: canonical double storage plus the on-disk dtype tag.
// Single-precision payloads round trip bitwise because every float is exactly
// representable as a double.
struct TensorData {
    Dtype dtype = Dtype::Double;
    std::vector<std::uint64_t> dims;
    std::vector<double> values; // row-major

    std::size_t element_count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= static_cast<std::size_t>(d);
        return n;
    }

    template <typename T>
    Tensor2<T> matrix() const {
        if (dims.size() != 2)
            throw validation_error("tensor: expected 2 dims, got " +
                                   std::to_string(dims.size()));
        Tensor2<T> m(static_cast<std::size_t>(dims[0]), static_cast<std::size_t>(dims[1]));
        for (std::size_t i = 0; i < m.size(); ++i) m.at(i) = static_cast<T>(values[i]);
        return m;
    }

    template <typename T>
    static TensorData from_matrix(const Tensor2<T>& m, Dtype dtype) {
        TensorData td;
        td.dtype = dtype;
        td.dims = {m.rows(), m.cols()};
        td.values.resize(m.size());
        for (std::size_t i = 0; i < m.size(); ++i) {
            // stage through the storage dtype so values == what a round trip yields
            td.values[i] = dtype == Dtype::Single
                               ? static_cast<double>(static_cast<float>(m.at(i)))
                               : static_cast<double>(m.at(i));
        }
        return td;
    }
};

// Stream forms are used for embedding tensors inside checkpoint containers;
// `context` names the source in error messages.
TensorData read_tensor(std::istream& in, const std::string& context);
void write_tensor(std::ostream& out, const TensorData& t, const std::string& context);
TensorData read_tensor(const std::string& path);
void write_tensor(const std::string& path, const TensorData& t);

// ============================================================================
// Dataset manifests (JSON-Lines, one video per line)
// ============================================================================

struct VideoRecord {
    std::string id;
    int label = 0; // 1 = anomalous
    std::string feature_path; // relative paths resolve against the manifest dir
    std::size_t frame_count = 0;
    std::vector<std::pair<std::size_t, std::size_t>> anomaly_intervals; // [start, end)
    std::size_t crops = 1;

    void validate() const; // everything except feature-file existence
};

struct DatasetManifest {
    std::string base_dir; // directory of the manifest file, for relative paths
    std::vector<VideoRecord> records;

    const VideoRecord* find(const std::string& id) const {
        for (const auto& r : records)
            if (r.id == id) return &r;
        return nullptr;
    }
    std::string resolve_feature_path(const VideoRecord& rec) const;
};

// `check_features`: also require every referenced feature file to exist.
DatasetManifest load_manifest(const std::string& path, bool check_features = true);
void save_manifest(const std::string& path, const DatasetManifest& manifest);

// Feature files hold one video as {crops, segments, dim} (or {segments, dim}
// for a single crop). Returns one segments x dim matrix per crop.
template <typename T>
std::vector<Tensor2<T>> load_video_crops(const DatasetManifest& manifest,
                                         const VideoRecord& rec);

// ============================================================================
// Uniform segment sampling
// ============================================================================

// idx_i = floor(i * t_full / t) for i in [0, t): "equal intervals" selection.
// When t_full < t indices repeat, so short videos still yield t rows.
std::vector<std::size_t> uniform_sample_indices(std::size_t t_full, std::size_t t);

// ============================================================================
// Synthetic datasets
// ============================================================================

// Normal segments are N(0, sigma^2 I). Each abnormal video carries one
// contiguous burst of segments shifted by delta * sigma along a fixed random
// unit direction shared across the whole dataset.
struct SynthConfig {
    std::size_t num_normal = 40;
    std::size_t num_abnormal = 40;
    std::size_t test_normal = 20;
    std::size_t test_abnormal = 20;
    std::size_t d = 64;
    std::size_t segments_min = 60;
    std::size_t segments_max = 200;
    std::size_t burst_min = 10;
    std::size_t burst_max = 30;
    double delta = 3.0;
    double sigma = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SynthResult {
    std::string train_manifest; // <out_dir>/train.jsonl
    std::string test_manifest;  // <out_dir>/test.jsonl, empty if no test videos
    // the unit direction used for bursts; lets tests run oracle separability checks
    std::vector<double> direction;
};

SynthResult synth_generate(const SynthConfig& cfg, const std::string& out_dir);

} // namespace wagcn
