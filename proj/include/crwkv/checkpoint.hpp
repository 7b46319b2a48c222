#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "crwkv/model.hpp"

namespace crwkv {

// Checkpoint layout: 8-byte magic, u64 little-endian manifest length, JSON
// manifest, then all tensors back to back as little-endian float32. The
// manifest records name, shape and byte offset per tensor plus free-form
// metadata (model config, seed, iteration, rng state), so files are
// self-describing and language portable.
inline constexpr char kCheckpointMagic[8] = {'C', 'R', 'W', 'K', 'V', 'C', 'P', '1'};

struct Checkpoint {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor<float>>> tensors;

    const Tensor<float>* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

namespace detail_ckpt {

inline void host_endianness_guard() {
    const std::uint32_t probe = 1;
    unsigned char b;
    std::memcpy(&b, &probe, 1);
    if (b != 1) throw IoError("checkpoint i/o requires a little-endian host");
}

}  // namespace detail_ckpt

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    detail_ckpt::host_endianness_guard();
    nlohmann::json manifest;
    manifest["format"] = "crwkv-checkpoint-v1";
    manifest["dtype"] = "f32";
    manifest["meta"] = ckpt.meta;
    nlohmann::json tens = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : ckpt.tensors) {
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t.shape();
        e["offset"] = offset;
        tens.push_back(e);
        offset += static_cast<std::uint64_t>(t.numel()) * 4;
    }
    manifest["tensors"] = tens;
    const std::string js = manifest.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write checkpoint '" + path + "'");
    f.write(kCheckpointMagic, 8);
    std::uint64_t len = js.size();
    f.write(reinterpret_cast<const char*>(&len), 8);
    f.write(js.data(), static_cast<std::streamsize>(js.size()));
    for (const auto& [name, t] : ckpt.tensors)
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.numel() * 4));
    if (!f) throw IoError("short write to checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    detail_ckpt::host_endianness_guard();
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint '" + path + "'");
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw IoError("'" + path + "' is not a crwkv checkpoint");
    std::uint64_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 8);
    std::string js(len, '\0');
    f.read(js.data(), static_cast<std::streamsize>(len));
    if (!f) throw IoError("checkpoint '" + path + "': truncated manifest");
    nlohmann::json manifest = nlohmann::json::parse(js, nullptr, false);
    if (manifest.is_discarded() || manifest.value("format", "") != "crwkv-checkpoint-v1")
        throw IoError("checkpoint '" + path + "': bad manifest");

    Checkpoint out;
    out.meta = manifest["meta"];
    for (const auto& e : manifest["tensors"]) {
        std::vector<std::int64_t> shape = e["shape"].get<std::vector<std::int64_t>>();
        Tensor<float> t(shape);
        f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * 4));
        if (!f) throw IoError("checkpoint '" + path + "': truncated tensor data");
        out.tensors.emplace_back(e["name"].get<std::string>(), std::move(t));
    }
    return out;
}

// model <-> checkpoint bridging (parameters stored as f32 regardless of T)

template <typename T>
void snapshot_model(CrwkvModel<T>& model, Checkpoint& ckpt) {
    for (auto* p : model.parameters())
        ckpt.tensors.emplace_back(p->name, p->value.template cast<float>());
    KvConfig cfg;
    model.config().to_config(cfg);
    ckpt.meta["model_config"] = cfg.canonical();
    ckpt.meta["config_hash"] = model.config().hash();
}

template <typename T>
void restore_model(CrwkvModel<T>& model, const Checkpoint& ckpt) {
    if (ckpt.meta.contains("config_hash")) {
        const std::uint64_t have = ckpt.meta["config_hash"].get<std::uint64_t>();
        if (have != model.config().hash())
            throw ConfigError("checkpoint config hash " + std::to_string(have) +
                              " does not match model config hash " +
                              std::to_string(model.config().hash()));
    }
    for (auto* p : model.parameters()) {
        const Tensor<float>* t = ckpt.find(p->name);
        if (!t) throw IoError("checkpoint is missing tensor '" + p->name + "'");
        if (t->shape() != p->value.shape())
            throw ShapeError("checkpoint tensor '" + p->name + "' has shape " + t->shape_str() +
                             ", expected " + p->value.shape_str());
        p->value = t->template cast<T>();
    }
}

// construct a model straight from a checkpoint's embedded config
template <typename T>
CrwkvModel<T> model_from_checkpoint(const Checkpoint& ckpt) {
    if (!ckpt.meta.contains("model_config"))
        throw IoError("checkpoint has no embedded model config");
    auto cfg = ModelConfig::from_config(
        KvConfig::parse_string(ckpt.meta["model_config"].get<std::string>()));
    CrwkvModel<T> model(cfg, 0);
    restore_model(model, ckpt);
    return model;
}

}  // namespace crwkv
