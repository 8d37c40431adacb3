#ifndef UDASEG_IO_CHECKPOINT_HPP
#define UDASEG_IO_CHECKPOINT_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "udaseg/io/json_util.hpp"
#include "udaseg/nn/layers.hpp"

namespace udaseg {

/// Checkpoint archive: 8-byte magic, u32 format version, u32 JSON header
/// length, JSON header, then raw little-endian doubles for every declared
/// tensor. The header carries the model config, component tag, epoch counter
/// and seeds, so a checkpoint is self-describing.
namespace ckpt {

constexpr char kMagic[8] = {'U', 'D', 'A', 'S', 'E', 'G', 'C', 'K'};
constexpr uint32_t kVersion = 1;

struct Meta {
    std::string component;  // "vae" | "segmentation"
    Json config;
    int64_t epoch = 0;
    Json extra;  // seeds, selection metric, code version
};

namespace detail {

inline void write_u32(std::ofstream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

inline uint32_t read_u32(std::ifstream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

} // namespace detail

inline void save(const std::string& path, const Meta& meta, const std::vector<nn::Param*>& params,
                 const std::vector<Tensor>* optimizer_state = nullptr) {
    Json header;
    header["component"] = meta.component;
    header["config"] = meta.config;
    header["epoch"] = meta.epoch;
    header["extra"] = meta.extra;
    Json tensors = Json::array();
    for (const nn::Param* p : params) {
        tensors.push_back(Json{{"name", p->name}, {"shape", p->value.shape()}});
    }
    header["tensors"] = tensors;
    header["optimizer_state_count"] = optimizer_state ? optimizer_state->size() : 0;

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, 8);
    detail::write_u32(os, kVersion);
    const std::string hs = header.dump();
    detail::write_u32(os, static_cast<uint32_t>(hs.size()));
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const nn::Param* p : params) {
        os.write(reinterpret_cast<const char*>(p->value.data()),
                 static_cast<std::streamsize>(p->value.numel() * sizeof(double)));
    }
    if (optimizer_state) {
        for (const Tensor& t : *optimizer_state) {
            os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
        }
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

inline Meta read_meta(std::ifstream& is, const std::string& path) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint archive");
    }
    const uint32_t version = detail::read_u32(is);
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: '" + path + "' has format version " + std::to_string(version) +
                                 ", expected " + std::to_string(kVersion));
    }
    const uint32_t len = detail::read_u32(is);
    std::string hs(len, '\0');
    is.read(hs.data(), len);
    if (!is) throw std::runtime_error("checkpoint: truncated header in '" + path + "'");
    Json header = Json::parse(hs);
    Meta meta;
    meta.component = header.at("component").get<std::string>();
    meta.config = header.at("config");
    meta.epoch = header.at("epoch").get<int64_t>();
    meta.extra = header.value("extra", Json::object());
    return meta;
}

inline Meta load_meta(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    return read_meta(is, path);
}

/// Load parameter tensors (and optional optimizer state) into an already
/// constructed model. Component tag and every tensor shape must match.
inline Meta load(const std::string& path, const std::string& expected_component,
                 const std::vector<nn::Param*>& params, std::vector<Tensor>* optimizer_state = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint archive");
    }
    const uint32_t version = detail::read_u32(is);
    if (version != kVersion) {
        throw std::runtime_error("checkpoint: '" + path + "' has format version " + std::to_string(version) +
                                 ", expected " + std::to_string(kVersion));
    }
    const uint32_t len = detail::read_u32(is);
    std::string hs(len, '\0');
    is.read(hs.data(), len);
    if (!is) throw std::runtime_error("checkpoint: truncated header in '" + path + "'");
    const Json header = Json::parse(hs);

    Meta meta;
    meta.component = header.at("component").get<std::string>();
    meta.config = header.at("config");
    meta.epoch = header.at("epoch").get<int64_t>();
    meta.extra = header.value("extra", Json::object());
    if (meta.component != expected_component) {
        throw std::runtime_error("checkpoint: '" + path + "' holds component '" + meta.component + "', expected '" +
                                 expected_component + "'");
    }
    const Json& tensors = header.at("tensors");
    if (tensors.size() != params.size()) {
        throw std::runtime_error("checkpoint: '" + path + "' declares " + std::to_string(tensors.size()) +
                                 " tensors, model has " + std::to_string(params.size()));
    }
    for (size_t i = 0; i < params.size(); ++i) {
        const auto shape = tensors[i].at("shape").get<std::vector<int64_t>>();
        const auto name = tensors[i].at("name").get<std::string>();
        if (shape != params[i]->value.shape() || name != params[i]->name) {
            throw std::runtime_error("checkpoint: tensor '" + name + "' in '" + path +
                                     "' is incompatible with model parameter '" + params[i]->name + "'");
        }
        is.read(reinterpret_cast<char*>(params[i]->value.data()),
                static_cast<std::streamsize>(params[i]->value.numel() * sizeof(double)));
    }
    if (optimizer_state) {
        const size_t n = header.value("optimizer_state_count", size_t{0});
        if (n != optimizer_state->size()) {
            throw std::runtime_error("checkpoint: optimizer state count mismatch in '" + path + "'");
        }
        for (Tensor& t : *optimizer_state) {
            is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(double)));
        }
    }
    if (!is) throw std::runtime_error("checkpoint: truncated tensor data in '" + path + "'");
    return meta;
}

} // namespace ckpt

} // namespace udaseg

#endif // UDASEG_IO_CHECKPOINT_HPP
