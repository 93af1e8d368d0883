#ifndef ELITE_LAB_IO_CHECKPOINT_HPP
#define ELITE_LAB_IO_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "elite_lab/diffcore/nn.hpp"
#include "elite_lab/io/config.hpp"

// Checkpoints: <stem>.json manifest plus <stem>.bin holding little-endian
// float32 tensors back to back in manifest order.
namespace elite::io {

struct TensorEntry {
    std::string name;
    diff::Shape shape;
    std::size_t offset = 0;  // bytes into the blob
};

struct Checkpoint {
    std::vector<TensorEntry> entries;
    std::vector<float> blob;
    Json config;
    std::vector<std::string> stages;

    bool has_stage(const std::string& s) const {
        for (const auto& x : stages)
            if (x == s) return true;
        return false;
    }
};

inline std::filesystem::path manifest_path(const std::filesystem::path& stem) { return stem.string() + ".json"; }
inline std::filesystem::path blob_path(const std::filesystem::path& stem) { return stem.string() + ".bin"; }

namespace detail {

inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw ConfigError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::filesystem::path& stem, const diff::ParamList<T>& params, const RunConfig& config,
                     const std::vector<std::string>& stages) {
    if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
    Json manifest = Json::object();
    manifest["format"] = "elite-lab-checkpoint";
    manifest["dtype"] = "float32";
    manifest["byte_order"] = "little";
    manifest["stages"] = stages;
    manifest["config"] = to_json(config);
    Json tensors = Json::array();
    std::string bytes;
    for (const auto& [name, t] : params) {
        tensors.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "float32"}, {"offset", bytes.size()}});
        for (T v : t.data()) {
            const auto f = static_cast<float>(v);
            const auto le = detail::to_le(std::bit_cast<std::uint32_t>(f));
            char b[4];
            std::memcpy(b, &le, 4);
            bytes.append(b, 4);
        }
    }
    manifest["tensors"] = tensors;
    manifest["blob_bytes"] = bytes.size();
    detail::write_atomic(blob_path(stem), bytes);
    detail::write_atomic(manifest_path(stem), manifest.dump(1) + "\n");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& stem) {
    if (!std::filesystem::exists(manifest_path(stem)))
        throw ConfigError("missing checkpoint " + manifest_path(stem).string());
    Json m;
    try {
        m = Json::parse(detail::read_file(manifest_path(stem)));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("corrupt checkpoint manifest " + manifest_path(stem).string() + ": " + e.what());
    }
    const std::string raw = detail::read_file(blob_path(stem));
    if (raw.size() % 4) throw ConfigError("checkpoint blob size is not a multiple of 4");
    Checkpoint ck;
    ck.config = m.at("config");
    ck.stages = m.at("stages").get<std::vector<std::string>>();
    ck.blob.resize(raw.size() / 4);
    for (std::size_t i = 0; i < ck.blob.size(); ++i) {
        std::uint32_t le;
        std::memcpy(&le, raw.data() + 4 * i, 4);
        ck.blob[i] = std::bit_cast<float>(detail::to_le(le));
    }
    for (const auto& e : m.at("tensors")) {
        TensorEntry te{e.at("name").get<std::string>(), e.at("shape").get<diff::Shape>(), e.at("offset").get<std::size_t>()};
        const std::size_t bytes = diff::shape_numel(te.shape) * 4;
        if (te.offset % 4 || te.offset + bytes > raw.size())
            throw ConfigError("checkpoint entry " + te.name + " exceeds the blob");
        ck.entries.push_back(std::move(te));
    }
    return ck;
}

// Copies every named tensor of `params` out of the checkpoint. Missing
// names or shape changes are configuration errors.
template <class T>
void restore(const Checkpoint& ck, const diff::ParamList<T>& params) {
    std::map<std::string, const TensorEntry*> by_name;
    for (const auto& e : ck.entries) by_name[e.name] = &e;
    for (const auto& [name, t] : params) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ConfigError("checkpoint lacks tensor " + name);
        if (it->second->shape != t.shape())
            throw ConfigError("checkpoint tensor " + name + " has shape " + diff::shape_str(it->second->shape) +
                              ", model expects " + diff::shape_str(t.shape()));
        diff::Tensor<T> h = t;
        auto dst = h.data();
        const float* src = ck.blob.data() + it->second->offset / 4;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
    }
}

}  // namespace elite::io

#endif  // ELITE_LAB_IO_CHECKPOINT_HPP
