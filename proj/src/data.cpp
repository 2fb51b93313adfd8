#include "wagcn/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "wagcn/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace wagcn {

// ============================================================================
// TensorFile
// ============================================================================

namespace {

constexpr char kMagic[4] = {'F', 'T', 'N', 'S'};
constexpr std::uint32_t kTensorVersion = 1;
constexpr std::size_t kMaxNdim = 8;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

// Reader that tracks the byte offset for error messages.
struct Cursor {
    std::istream& in;
    const std::string& ctx;
    std::size_t offset = 0;

    void read(void* dst, std::size_t n, const char* what) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        const std::size_t got = static_cast<std::size_t>(in.gcount());
        if (got != n)
            throw format_error(ctx + ": truncated " + what + " at offset " +
                               std::to_string(offset + got) + " (wanted " + std::to_string(n) +
                               " bytes, got " + std::to_string(got) + ")");
        offset += n;
    }

    std::uint32_t u32(const char* what) {
        unsigned char b[4];
        read(b, 4, what);
        return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
               std::uint32_t(b[3]) << 24;
    }

    std::uint64_t u64(const char* what) {
        unsigned char b[8];
        read(b, 8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
        return v;
    }
};

} // namespace

TensorData read_tensor(std::istream& in, const std::string& context) {
    Cursor cur{in, context};

    char magic[4];
    cur.read(magic, 4, "magic");
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw format_error(context + ": bad magic at offset 0, expected \"FTNS\"");

    const std::uint32_t version = cur.u32("version");
    if (version != kTensorVersion)
        throw format_error(context + ": unsupported version " + std::to_string(version) +
                           " at offset 4, expected " + std::to_string(kTensorVersion));

    unsigned char dtype_code;
    cur.read(&dtype_code, 1, "dtype");
    if (dtype_code > 1)
        throw format_error(context + ": invalid dtype code " + std::to_string(int(dtype_code)) +
                           " at offset 8 (0=single, 1=double)");

    unsigned char ndim;
    cur.read(&ndim, 1, "ndim");
    if (ndim < 1 || ndim > kMaxNdim)
        throw format_error(context + ": invalid ndim " + std::to_string(int(ndim)) +
                           " at offset 9 (expected 1.." + std::to_string(kMaxNdim) + ")");

    TensorData t;
    t.dtype = static_cast<Dtype>(dtype_code);
    t.dims.resize(ndim);
    std::uint64_t count = 1;
    for (std::size_t i = 0; i < ndim; ++i) {
        t.dims[i] = cur.u64("dims");
        if (t.dims[i] != 0 && count > UINT64_MAX / std::max<std::uint64_t>(t.dims[i], 1))
            throw format_error(context + ": dims overflow at offset " +
                               std::to_string(10 + 8 * i));
        count *= t.dims[i];
    }
    if (count > (std::uint64_t(1) << 40))
        throw format_error(context + ": payload of " + std::to_string(count) +
                           " elements is implausibly large");

    const std::size_t n = static_cast<std::size_t>(count);
    t.values.resize(n);
    if (t.dtype == Dtype::Single) {
        std::vector<float> buf(n);
        if (n > 0) cur.read(buf.data(), n * 4, "payload");
        for (std::size_t i = 0; i < n; ++i) t.values[i] = static_cast<double>(buf[i]);
    } else {
        if (n > 0) cur.read(t.values.data(), n * 8, "payload");
    }
    return t;
}

void write_tensor(std::ostream& out, const TensorData& t, const std::string& context) {
    if (t.dims.empty() || t.dims.size() > kMaxNdim)
        throw validation_error(context + ": tensor must have 1.." + std::to_string(kMaxNdim) +
                               " dims, got " + std::to_string(t.dims.size()));
    if (t.values.size() != t.element_count())
        throw validation_error(context + ": value count " + std::to_string(t.values.size()) +
                               " does not match dims product " +
                               std::to_string(t.element_count()));

    std::string header;
    header.append(kMagic, 4);
    put_u32(header, kTensorVersion);
    header.push_back(static_cast<char>(t.dtype));
    header.push_back(static_cast<char>(t.dims.size()));
    for (auto d : t.dims) put_u64(header, d);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));

    if (t.dtype == Dtype::Single) {
        std::vector<float> buf(t.values.size());
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(t.values[i]);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * 4));
    } else {
        out.write(reinterpret_cast<const char*>(t.values.data()),
                  static_cast<std::streamsize>(t.values.size() * 8));
    }
    if (!out) throw io_error(context + ": write failed");
}

TensorData read_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open tensor file " + path);
    return read_tensor(in, path);
}

void write_tensor(const std::string& path, const TensorData& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open " + path + " for writing");
    write_tensor(out, t, path);
}

// ============================================================================
// Manifests
// ============================================================================

void VideoRecord::validate() const {
    if (id.empty()) throw validation_error("video record: empty id");
    if (label != 0 && label != 1)
        throw validation_error("video " + id + ": label must be 0 or 1, got " +
                               std::to_string(label));
    if (feature_path.empty()) throw validation_error("video " + id + ": empty feature_path");
    if (frame_count == 0) throw validation_error("video " + id + ": frame_count must be >= 1");
    if (crops == 0) throw validation_error("video " + id + ": crops must be >= 1");
    if (label == 0 && !anomaly_intervals.empty())
        throw validation_error("video " + id +
                               ": normal video (label 0) must have empty anomaly_intervals");

    std::size_t prev_end = 0;
    bool first = true;
    for (const auto& [start, end] : anomaly_intervals) {
        if (start >= end)
            throw validation_error("video " + id + ": zero-length or inverted interval [" +
                                   std::to_string(start) + ", " + std::to_string(end) + ")");
        if (end > frame_count)
            throw validation_error("video " + id + ": interval [" + std::to_string(start) +
                                   ", " + std::to_string(end) + ") exceeds frame_count " +
                                   std::to_string(frame_count));
        if (!first && start < prev_end)
            throw validation_error("video " + id + ": intervals overlap or are unsorted at [" +
                                   std::to_string(start) + ", " + std::to_string(end) + ")");
        prev_end = end;
        first = false;
    }
}

std::string DatasetManifest::resolve_feature_path(const VideoRecord& rec) const {
    fs::path p(rec.feature_path);
    if (p.is_absolute() || base_dir.empty()) return p.string();
    return (fs::path(base_dir) / p).string();
}

namespace {

VideoRecord record_from_json(const json& j, std::size_t line_no) {
    static const std::set<std::string> known = {"id",          "label",
                                               "feature_path", "frame_count",
                                               "anomaly_intervals", "crops"};
    const std::string where = "manifest line " + std::to_string(line_no);
    if (!j.is_object()) throw validation_error(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw validation_error(where + ": unknown key \"" + it.key() + "\"");
    for (const auto& k : known)
        if (!j.contains(k)) throw validation_error(where + ": missing key \"" + k + "\"");

    VideoRecord rec;
    try {
        rec.id = j.at("id").get<std::string>();
        rec.label = j.at("label").get<int>();
        rec.feature_path = j.at("feature_path").get<std::string>();
        rec.frame_count = j.at("frame_count").get<std::size_t>();
        rec.crops = j.at("crops").get<std::size_t>();
        for (const auto& iv : j.at("anomaly_intervals")) {
            if (!iv.is_array() || iv.size() != 2)
                throw validation_error(where + ": each interval must be [start, end)");
            rec.anomaly_intervals.emplace_back(iv[0].get<std::size_t>(),
                                               iv[1].get<std::size_t>());
        }
    } catch (const json::exception& e) {
        throw validation_error(where + ": " + e.what());
    }
    try {
        rec.validate();
    } catch (const validation_error& e) {
        throw validation_error(where + ": " + e.what());
    }
    return rec;
}

} // namespace

DatasetManifest load_manifest(const std::string& path, bool check_features) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open manifest " + path);

    DatasetManifest man;
    man.base_dir = fs::path(path).parent_path().string();

    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw format_error("manifest line " + std::to_string(line_no) + " of " + path +
                               ": invalid JSON: " + e.what());
        }
        VideoRecord rec = record_from_json(j, line_no);
        if (!seen.insert(rec.id).second)
            throw validation_error("manifest line " + std::to_string(line_no) +
                                   ": duplicate id \"" + rec.id + "\"");
        if (check_features) {
            const std::string fp = man.resolve_feature_path(rec);
            if (!fs::exists(fp))
                throw validation_error("manifest line " + std::to_string(line_no) + ": video " +
                                       rec.id + " references missing feature file " + fp);
        }
        man.records.push_back(std::move(rec));
    }
    return man;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot open " + path + " for writing");
    for (const auto& rec : manifest.records) {
        ordered_json j;
        j["id"] = rec.id;
        j["label"] = rec.label;
        j["feature_path"] = rec.feature_path;
        j["frame_count"] = rec.frame_count;
        json ivs = json::array();
        for (const auto& [s, e] : rec.anomaly_intervals) ivs.push_back({s, e});
        j["anomaly_intervals"] = ivs;
        j["crops"] = rec.crops;
        out << j.dump() << "\n";
    }
    if (!out) throw io_error("write failed for manifest " + path);
}

template <typename T>
std::vector<Tensor2<T>> load_video_crops(const DatasetManifest& manifest,
                                         const VideoRecord& rec) {
    const std::string path = manifest.resolve_feature_path(rec);
    TensorData td = read_tensor(path);

    std::size_t crops, segs, dim;
    if (td.dims.size() == 3) {
        crops = static_cast<std::size_t>(td.dims[0]);
        segs = static_cast<std::size_t>(td.dims[1]);
        dim = static_cast<std::size_t>(td.dims[2]);
    } else if (td.dims.size() == 2) {
        crops = 1;
        segs = static_cast<std::size_t>(td.dims[0]);
        dim = static_cast<std::size_t>(td.dims[1]);
    } else {
        throw validation_error("video " + rec.id + ": feature file " + path + " has " +
                               std::to_string(td.dims.size()) + " dims, expected 2 or 3");
    }
    if (crops != rec.crops)
        throw validation_error("video " + rec.id + ": manifest says " +
                               std::to_string(rec.crops) + " crops but " + path + " holds " +
                               std::to_string(crops));
    if (segs == 0 || dim == 0)
        throw validation_error("video " + rec.id + ": feature file " + path +
                               " has an empty crop (" + std::to_string(segs) + "x" +
                               std::to_string(dim) + ")");

    std::vector<Tensor2<T>> out;
    out.reserve(crops);
    for (std::size_t c = 0; c < crops; ++c) {
        Tensor2<T> m(segs, dim);
        const double* src = td.values.data() + c * segs * dim;
        for (std::size_t i = 0; i < segs * dim; ++i) m.at(i) = static_cast<T>(src[i]);
        out.push_back(std::move(m));
    }
    return out;
}

template std::vector<Tensor2<float>> load_video_crops<float>(const DatasetManifest&,
                                                             const VideoRecord&);
template std::vector<Tensor2<double>> load_video_crops<double>(const DatasetManifest&,
                                                               const VideoRecord&);

// ============================================================================
// Sampling
// ============================================================================

std::vector<std::size_t> uniform_sample_indices(std::size_t t_full, std::size_t t) {
    if (t_full == 0) throw validation_error("uniform_sample: t_full must be >= 1");
    if (t == 0) throw validation_error("uniform_sample: t must be >= 1");
    std::vector<std::size_t> idx(t);
    for (std::size_t i = 0; i < t; ++i) idx[i] = i * t_full / t;
    return idx;
}

std::vector<std::size_t> nearest_sample_map(const std::vector<std::size_t>& sampled_indices,
                                            std::size_t t_full) {
    if (sampled_indices.empty())
        throw validation_error("nearest_sample_map: no sampled indices");
    if (t_full == 0) throw validation_error("nearest_sample_map: t_full must be >= 1");

    std::vector<std::size_t> map(t_full);
    for (std::size_t j = 0; j < t_full; ++j) {
        auto it = std::lower_bound(sampled_indices.begin(), sampled_indices.end(), j);
        std::size_t best;
        if (it == sampled_indices.begin()) {
            best = 0;
        } else if (it == sampled_indices.end()) {
            best = sampled_indices.size() - 1;
        } else {
            const std::size_t hi = static_cast<std::size_t>(it - sampled_indices.begin());
            const std::size_t lo = hi - 1;
            const std::size_t d_lo = j - sampled_indices[lo];
            const std::size_t d_hi = sampled_indices[hi] - j;
            best = d_hi < d_lo ? hi : lo; // tie -> lower sampled position
        }
        map[j] = best;
    }
    return map;
}

// ============================================================================
// Synthetic generator
// ============================================================================

void SynthConfig::validate() const {
    if (d == 0) throw validation_error("synth: d must be >= 1");
    if (segments_min == 0 || segments_min > segments_max)
        throw validation_error("synth: need 1 <= segments_min <= segments_max");
    if (burst_min == 0 || burst_min > burst_max)
        throw validation_error("synth: need 1 <= burst_min <= burst_max");
    if (burst_max > segments_min)
        throw validation_error("synth: burst_max " + std::to_string(burst_max) +
                               " must fit the shortest video (segments_min " +
                               std::to_string(segments_min) + ")");
    if (delta < 0.0) throw validation_error("synth: delta must be >= 0");
    if (!(sigma > 0.0)) throw validation_error("synth: sigma must be > 0");
}

namespace {

std::string video_id(const char* role, const char* cls, std::size_t i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%s_%03zu", role, cls, i);
    return buf;
}

VideoRecord synth_one(const SynthConfig& cfg, RandomStream& rng, const std::vector<double>& u,
                      const std::string& id, bool abnormal, const std::string& features_dir) {
    const auto segs = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(cfg.segments_min),
                        static_cast<std::int64_t>(cfg.segments_max)));

    TensorData td;
    td.dtype = Dtype::Single;
    td.dims = {1, segs, cfg.d};
    td.values.resize(segs * cfg.d);
    for (double& v : td.values)
        v = static_cast<double>(static_cast<float>(cfg.sigma * rng.gaussian()));

    VideoRecord rec;
    rec.id = id;
    rec.label = abnormal ? 1 : 0;
    rec.crops = 1;
    rec.frame_count = segs * kFramesPerSegment;
    rec.feature_path = "features/" + id + ".ftns";

    if (abnormal) {
        const auto drawn = static_cast<std::size_t>(rng.uniform_int(
            static_cast<std::int64_t>(cfg.burst_min), static_cast<std::int64_t>(cfg.burst_max)));
        const std::size_t len = std::min(drawn, segs);
        const auto start = static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(segs - len)));
        for (std::size_t s = start; s < start + len; ++s)
            for (std::size_t c = 0; c < cfg.d; ++c) {
                const double shifted =
                    td.values[s * cfg.d + c] + cfg.delta * cfg.sigma * u[c];
                td.values[s * cfg.d + c] = static_cast<double>(static_cast<float>(shifted));
            }
        rec.anomaly_intervals.emplace_back(start * kFramesPerSegment,
                                           (start + len) * kFramesPerSegment);
    }

    write_tensor(features_dir + "/" + id + ".ftns", td);
    return rec;
}

} // namespace

SynthResult synth_generate(const SynthConfig& cfg, const std::string& out_dir) {
    cfg.validate();

    const std::string features_dir = (fs::path(out_dir) / "features").string();
    std::error_code ec;
    fs::create_directories(features_dir, ec);
    if (ec) throw io_error("cannot create output directory " + features_dir + ": " + ec.message());

    // One burst direction for the whole dataset, independent of video counts.
    RandomStream dir_rng(derive_seed(cfg.seed, 1));
    std::vector<double> u(cfg.d);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& v : u) {
            v = dir_rng.gaussian();
            norm += v * v;
        }
        norm = std::sqrt(norm);
    } while (norm == 0.0);
    for (double& v : u) v /= norm;

    RandomStream rng(derive_seed(cfg.seed, 2));

    SynthResult res;
    res.direction = u;

    DatasetManifest train;
    train.base_dir = out_dir;
    for (std::size_t i = 0; i < cfg.num_normal; ++i)
        train.records.push_back(
            synth_one(cfg, rng, u, video_id("train", "normal", i), false, features_dir));
    for (std::size_t i = 0; i < cfg.num_abnormal; ++i)
        train.records.push_back(
            synth_one(cfg, rng, u, video_id("train", "abnormal", i), true, features_dir));
    res.train_manifest = (fs::path(out_dir) / "train.jsonl").string();
    save_manifest(res.train_manifest, train);

    if (cfg.test_normal + cfg.test_abnormal > 0) {
        DatasetManifest test;
        test.base_dir = out_dir;
        for (std::size_t i = 0; i < cfg.test_normal; ++i)
            test.records.push_back(
                synth_one(cfg, rng, u, video_id("test", "normal", i), false, features_dir));
        for (std::size_t i = 0; i < cfg.test_abnormal; ++i)
            test.records.push_back(
                synth_one(cfg, rng, u, video_id("test", "abnormal", i), true, features_dir));
        res.test_manifest = (fs::path(out_dir) / "test.jsonl").string();
        save_manifest(res.test_manifest, test);
    }
    return res;
}

} // namespace wagcn
