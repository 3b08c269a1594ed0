#pragma once

// On-disk stream format: binary frame tensors plus a JSON manifest.
//
// Tensor file layout (little-endian):
//   bytes 0-3   magic "TMSG"
//   bytes 4-5   version (u16, currently 1)
//   bytes 6-7   ndim (u16, 1..3)
//   bytes 8-19  dims (3 x u32, unused trailing dims = 1)
//   bytes 20-   row-major float32 payload
// Label frames use the same layout with integral values and ndim = 2.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellstab/common.hpp"

namespace cellstab {

static_assert(std::endian::native == std::endian::little, "tensor I/O assumes a little-endian host");

inline constexpr char kTensorMagic[4] = {'T', 'M', 'S', 'G'};
inline constexpr uint16_t kTensorVersion = 1;
inline constexpr std::size_t kTensorHeaderBytes = 20;

struct Tensor {
    uint16_t ndim = 2;
    std::array<uint32_t, 3> dims{1, 1, 1};
    std::vector<float> values;

    std::size_t element_count() const { return std::size_t{dims[0]} * dims[1] * dims[2]; }
    std::vector<uint32_t> shape() const { return {dims.begin(), dims.begin() + ndim}; }
};

inline Tensor make_tensor(const std::vector<uint32_t>& shape, std::vector<float> values = {}) {
    if (shape.empty() || shape.size() > 3) throw Error("tensor: ndim must be 1..3");
    Tensor t;
    t.ndim = static_cast<uint16_t>(shape.size());
    for (std::size_t i = 0; i < shape.size(); ++i) t.dims[i] = shape[i];
    if (values.empty()) values.assign(t.element_count(), 0.0f);
    if (values.size() != t.element_count()) throw Error("tensor: value count does not match shape");
    t.values = std::move(values);
    return t;
}

inline std::uintmax_t tensor_file_bytes(const std::vector<uint32_t>& shape) {
    std::uintmax_t n = 1;
    for (auto d : shape) n *= d;
    return kTensorHeaderBytes + n * sizeof(float);
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& t) {
    if (t.values.size() != t.element_count()) throw Error("write_tensor: value count does not match shape");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("write_tensor: cannot open " + path.string());
    std::array<char, kTensorHeaderBytes> header{};
    std::memcpy(header.data(), kTensorMagic, 4);
    std::memcpy(header.data() + 4, &kTensorVersion, 2);
    std::memcpy(header.data() + 6, &t.ndim, 2);
    std::memcpy(header.data() + 8, t.dims.data(), 12);
    out.write(header.data(), header.size());
    out.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    if (!out) throw Error("write_tensor: write failed for " + path.string());
}

namespace detail {

inline Tensor read_tensor_header(std::ifstream& in, const std::filesystem::path& path) {
    std::array<char, kTensorHeaderBytes> header{};
    if (!in.read(header.data(), header.size())) throw Error("read_tensor: truncated header in " + path.string());
    if (std::memcmp(header.data(), kTensorMagic, 4) != 0) throw Error("read_tensor: bad magic in " + path.string());
    Tensor t;
    uint16_t version = 0;
    std::memcpy(&version, header.data() + 4, 2);
    std::memcpy(&t.ndim, header.data() + 6, 2);
    std::memcpy(t.dims.data(), header.data() + 8, 12);
    if (version != kTensorVersion) throw Error("read_tensor: unsupported version in " + path.string());
    if (t.ndim < 1 || t.ndim > 3) throw Error("read_tensor: bad ndim in " + path.string());
    for (int i = t.ndim; i < 3; ++i) {
        if (t.dims[i] != 1) throw Error("read_tensor: unused dims must be 1 in " + path.string());
    }
    return t;
}

inline std::string shape_string(const std::vector<uint32_t>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + ")";
}

}  // namespace detail

/// Validates header and byte length against expected_shape without reading the payload.
inline void check_tensor_file(const std::filesystem::path& path, const std::vector<uint32_t>& expected_shape) {
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) throw Error("missing tensor file: " + path.string());
    const auto bytes = std::filesystem::file_size(path, ec);
    if (ec || bytes != tensor_file_bytes(expected_shape)) {
        throw Error("shape mismatch: " + path.string() + " has " + std::to_string(bytes) + " bytes, expected " +
                    std::to_string(tensor_file_bytes(expected_shape)) + " for shape " +
                    detail::shape_string(expected_shape));
    }
    std::ifstream in(path, std::ios::binary);
    Tensor t = detail::read_tensor_header(in, path);
    if (t.shape() != expected_shape) {
        throw Error("shape mismatch: " + path.string() + " declares " + detail::shape_string(t.shape()) +
                    ", expected " + detail::shape_string(expected_shape));
    }
}

inline Tensor read_tensor(const std::filesystem::path& path,
                          const std::optional<std::vector<uint32_t>>& expected_shape = std::nullopt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("read_tensor: cannot open " + path.string());
    Tensor t = detail::read_tensor_header(in, path);
    if (expected_shape && t.shape() != *expected_shape) {
        throw Error("shape mismatch: " + path.string() + " declares " + detail::shape_string(t.shape()) +
                    ", expected " + detail::shape_string(*expected_shape));
    }
    const auto bytes = std::filesystem::file_size(path);
    if (bytes != tensor_file_bytes(t.shape())) {
        throw Error("shape mismatch: " + path.string() + " payload is " + std::to_string(bytes) +
                    " bytes, header implies " + std::to_string(tensor_file_bytes(t.shape())));
    }
    t.values.resize(t.element_count());
    in.read(reinterpret_cast<char*>(t.values.data()), static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    if (!in) throw Error("read_tensor: truncated payload in " + path.string());
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        if (!std::isfinite(t.values[i])) {
            throw Error("read_tensor: non-finite value at index " + std::to_string(i) + " in " + path.string());
        }
    }
    return t;
}

inline Tensor label_tensor(const LabelFrame& labels) {
    Tensor t = make_tensor({static_cast<uint32_t>(labels.rows()), static_cast<uint32_t>(labels.cols())});
    std::transform(labels.data().begin(), labels.data().end(), t.values.begin(),
                   [](int32_t v) { return static_cast<float>(v); });
    return t;
}

inline LabelFrame labels_from_tensor(const Tensor& t, int num_classes) {
    if (t.ndim != 2) throw Error("label tensor must be 2-D");
    LabelFrame labels(static_cast<int>(t.dims[0]), static_cast<int>(t.dims[1]));
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        const float v = t.values[i];
        if (v != std::floor(v) || v < 0 || v >= static_cast<float>(num_classes)) {
            throw Error("label tensor: value " + std::to_string(v) + " at index " + std::to_string(i) +
                        " is not a class in [0," + std::to_string(num_classes) + ")");
        }
        labels.data()[i] = static_cast<int32_t>(v);
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Manifest

struct FramePaths {
    std::string softmax;
    std::string cell_states;                     // reduced (H, W, l) stack
    std::vector<std::string> cell_state_blocks;  // or l raw (H, W, F) tensors
    std::string ground_truth;
};

struct StreamManifest {
    int height = 0;
    int width = 0;
    int num_classes = 0;
    int num_blocks = 0;
    int num_frames = 0;
    int num_features = 0;  // F for raw cell-state blocks; 0 when pre-reduced
    std::vector<std::string> class_names;
    std::vector<FramePaths> frames;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
    std::filesystem::path directory;

    std::filesystem::path resolve(const std::string& rel) const { return directory / rel; }
    std::vector<uint32_t> softmax_shape() const {
        return {uint32_t(height), uint32_t(width), uint32_t(num_classes)};
    }
    std::vector<uint32_t> label_shape() const { return {uint32_t(height), uint32_t(width)}; }
    std::vector<uint32_t> cell_state_shape() const {
        return {uint32_t(height), uint32_t(width), uint32_t(num_blocks)};
    }
    std::vector<uint32_t> raw_block_shape() const {
        return {uint32_t(height), uint32_t(width), uint32_t(num_features)};
    }
};

inline void validate_manifest(const StreamManifest& m, bool check_files = true) {
    if (m.height < 3) throw Error("manifest: height < 3");
    if (m.width < 3) throw Error("manifest: width < 3");
    if (m.num_classes < 2) throw Error("manifest: num_classes < 2");
    if (m.num_blocks < 2) throw Error("manifest: num_blocks < 2");
    if (m.num_frames < 1) throw Error("manifest: num_frames < 1");
    if (m.num_features < 0) throw Error("manifest: num_features < 0");
    if (static_cast<int>(m.frames.size()) != m.num_frames) {
        throw Error("manifest: frames has " + std::to_string(m.frames.size()) + " entries, num_frames is " +
                    std::to_string(m.num_frames));
    }
    if (!m.class_names.empty() && static_cast<int>(m.class_names.size()) != m.num_classes) {
        throw Error("manifest: class_names length differs from num_classes");
    }
    for (std::size_t i = 0; i < m.frames.size(); ++i) {
        const auto& f = m.frames[i];
        const std::string where = "manifest: frames[" + std::to_string(i) + "]";
        if (f.softmax.empty()) throw Error(where + ".softmax missing");
        if (f.ground_truth.empty()) throw Error(where + ".ground_truth missing");
        const bool reduced = !f.cell_states.empty();
        const bool raw = !f.cell_state_blocks.empty();
        if (reduced == raw) throw Error(where + ": exactly one of cell_states / cell_state_blocks required");
        if (raw && static_cast<int>(f.cell_state_blocks.size()) != m.num_blocks) {
            throw Error(where + ".cell_state_blocks length differs from num_blocks");
        }
        if (raw && m.num_features < 1) throw Error("manifest: num_features required for raw cell-state blocks");
        if (!check_files) continue;
        check_tensor_file(m.resolve(f.softmax), m.softmax_shape());
        check_tensor_file(m.resolve(f.ground_truth), m.label_shape());
        if (reduced) {
            check_tensor_file(m.resolve(f.cell_states), m.cell_state_shape());
        } else {
            for (const auto& b : f.cell_state_blocks) check_tensor_file(m.resolve(b), m.raw_block_shape());
        }
    }
}

inline nlohmann::ordered_json manifest_to_json(const StreamManifest& m) {
    nlohmann::ordered_json j;
    j["format"] = "cellstab-stream";
    j["version"] = 1;
    j["height"] = m.height;
    j["width"] = m.width;
    j["num_classes"] = m.num_classes;
    j["num_blocks"] = m.num_blocks;
    j["num_frames"] = m.num_frames;
    if (m.num_features > 0) j["num_features"] = m.num_features;
    if (!m.class_names.empty()) j["class_names"] = m.class_names;
    auto frames = nlohmann::ordered_json::array();
    for (const auto& f : m.frames) {
        nlohmann::ordered_json fj;
        fj["softmax"] = f.softmax;
        if (!f.cell_states.empty()) {
            fj["cell_states"] = f.cell_states;
        } else {
            fj["cell_state_blocks"] = f.cell_state_blocks;
        }
        fj["ground_truth"] = f.ground_truth;
        frames.push_back(std::move(fj));
    }
    j["frames"] = std::move(frames);
    for (const auto& [k, v] : m.extra.items()) j[k] = v;
    return j;
}

inline void write_manifest(const std::filesystem::path& path, const StreamManifest& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("write_manifest: cannot open " + path.string());
    out << manifest_to_json(m).dump(2) << '\n';
}

inline StreamManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("read_manifest: missing file " + path.string());
    nlohmann::ordered_json j;
    try {
        j = nlohmann::ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error("read_manifest: invalid JSON in " + path.string() + ": " + e.what());
    }
    auto require_int = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_number_integer()) {
            throw Error(std::string("manifest: field '") + key + "' missing or not an integer");
        }
        return j[key].get<int>();
    };
    auto require_str = [](const nlohmann::ordered_json& o, const char* key, const std::string& where) {
        if (!o.contains(key) || !o[key].is_string()) {
            throw Error(where + "." + key + " missing or not a string");
        }
        return o[key].get<std::string>();
    };
    if (!j.is_object()) throw Error("manifest: top level must be an object");
    if (j.value("format", std::string{}) != "cellstab-stream") throw Error("manifest: field 'format' must be 'cellstab-stream'");
    if (j.value("version", 0) != 1) throw Error("manifest: unsupported version");

    StreamManifest m;
    m.directory = path.parent_path();
    m.height = require_int("height");
    m.width = require_int("width");
    m.num_classes = require_int("num_classes");
    m.num_blocks = require_int("num_blocks");
    m.num_frames = require_int("num_frames");
    if (j.contains("num_features")) m.num_features = require_int("num_features");
    if (j.contains("class_names")) {
        if (!j["class_names"].is_array()) throw Error("manifest: field 'class_names' must be an array");
        m.class_names = j["class_names"].get<std::vector<std::string>>();
    }
    if (!j.contains("frames") || !j["frames"].is_array()) throw Error("manifest: field 'frames' missing or not an array");
    for (std::size_t i = 0; i < j["frames"].size(); ++i) {
        const auto& fj = j["frames"][i];
        const std::string where = "manifest: frames[" + std::to_string(i) + "]";
        if (!fj.is_object()) throw Error(where + " must be an object");
        FramePaths f;
        f.softmax = require_str(fj, "softmax", where);
        f.ground_truth = require_str(fj, "ground_truth", where);
        if (fj.contains("cell_states")) f.cell_states = require_str(fj, "cell_states", where);
        if (fj.contains("cell_state_blocks")) {
            if (!fj["cell_state_blocks"].is_array()) throw Error(where + ".cell_state_blocks must be an array");
            f.cell_state_blocks = fj["cell_state_blocks"].get<std::vector<std::string>>();
        }
        m.frames.push_back(std::move(f));
    }
    static const std::array<std::string, 9> known = {"format",      "version",    "height",      "width", "num_classes",
                                                     "num_blocks",  "num_frames", "num_features", "class_names"};
    for (const auto& [k, v] : j.items()) {
        if (k != "frames" && std::find(known.begin(), known.end(), k) == known.end()) m.extra[k] = v;
    }
    validate_manifest(m);
    return m;
}

// ---------------------------------------------------------------------------
// Ground-truth smoothing

/// Box-filters each class's one-hot mask with a normalized kernel_size^2 kernel
/// (zero padding at the border) and relabels every pixel with the argmax,
/// ties to the lowest class index.
inline LabelFrame smooth_labels(const LabelFrame& labels, int kernel_size) {
    if (kernel_size < 1 || kernel_size % 2 == 0) {
        throw Error("smooth_labels: kernel size must be odd and positive, got " + std::to_string(kernel_size));
    }
    if (kernel_size == 1) return labels;
    const int rows = labels.rows();
    const int cols = labels.cols();
    const int half = kernel_size / 2;
    int32_t max_label = -1;
    for (auto v : labels.data()) {
        if (v < 0) throw Error("smooth_labels: negative label");
        max_label = std::max(max_label, v);
    }
    std::vector<int32_t> present;
    {
        std::vector<bool> seen(static_cast<std::size_t>(max_label) + 1, false);
        for (auto v : labels.data()) seen[v] = true;
        for (int32_t c = 0; c <= max_label; ++c)
            if (seen[c]) present.push_back(c);
    }

    // Window counts; dividing by kernel_size^2 does not change the argmax.
    LabelFrame out(rows, cols);
    Grid<int32_t> best_count(rows, cols, -1);
    Grid<int32_t> integral(rows + 1, cols + 1);
    for (int32_t cls : present) {
        for (int r = 0; r < rows; ++r) {
            int32_t run = 0;
            for (int c = 0; c < cols; ++c) {
                run += labels(r, c) == cls ? 1 : 0;
                integral(r + 1, c + 1) = integral(r, c + 1) + run;
            }
        }
        for (int r = 0; r < rows; ++r) {
            const int r0 = std::max(0, r - half);
            const int r1 = std::min(rows, r + half + 1);
            for (int c = 0; c < cols; ++c) {
                const int c0 = std::max(0, c - half);
                const int c1 = std::min(cols, c + half + 1);
                const int32_t count = integral(r1, c1) - integral(r0, c1) - integral(r1, c0) + integral(r0, c0);
                if (count > best_count(r, c)) {
                    best_count(r, c) = count;
                    out(r, c) = cls;
                }
            }
        }
    }
    return out;
}

}  // namespace cellstab
