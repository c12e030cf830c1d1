#pragma once

#include "mmrf/core.hpp"
#include "mmrf/field.hpp"
#include "mmrf/modality.hpp"
#include "mmrf/renderer.hpp"
#include "mmrf/serialize.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

// Versioned binary checkpoint: a JSON header describing grid configs, the
// modality slice registry and the parameter directory, followed by raw
// little-endian float arrays. Loading validates the registry against the
// requesting configuration.

namespace mmrf {

struct CheckpointError : Error {
    explicit CheckpointError(const std::string& m) : Error(m) {}
};

inline void save_checkpoint(const std::string& path, RenderModel& model,
                            const nlohmann::json& extra = {}) {
    nlohmann::json header;
    header["format"] = "mmrf-checkpoint";
    header["version"] = 1;
    header["grid_config"] = serialize::grid_config_json(model.sdf.grid_config);
    header["c_total"] = model.c_total;
    nlohmann::json mods = nlohmann::json::array();
    for (const auto& m : model.modalities) mods.push_back(serialize::modality_json(m));
    header["modalities"] = mods;
    if (!extra.is_null() && !extra.empty()) header["extra"] = extra;

    nlohmann::json dir = nlohmann::json::array();
    std::size_t offset = 0;
    auto params = model.all_parameters();
    for (auto* p : params) {
        dir.push_back({{"name", p->name}, {"offset", offset}, {"size", p->size()}});
        offset += p->size();
    }
    header["arrays"] = dir;

    const std::string hs = header.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open for write: " + path);
    const char magic[8] = {'M', 'M', 'R', 'F', 'C', 'K', '0', '1'};
    f.write(magic, 8);
    const std::uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), 8);
    f.write(hs.data(), std::streamsize(hs.size()));
    for (auto* p : params)
        f.write(reinterpret_cast<const char*>(p->value.data()),
                std::streamsize(p->size() * 4));
    if (!f) throw CheckpointError("write failed: " + path);
}

// Reads the header only; used to reconstruct the model configuration.
inline nlohmann::json read_checkpoint_header(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open: " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "MMRFCK01", 8) != 0)
        throw CheckpointError("bad checkpoint magic: " + path);
    std::uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), 8);
    std::string hs(hlen, '\0');
    f.read(hs.data(), std::streamsize(hlen));
    if (!f) throw CheckpointError("truncated checkpoint header: " + path);
    return nlohmann::json::parse(hs);
}

// Loads parameters into an already-initialized model; validates that the
// stored registry and grid config match the requesting configuration.
inline nlohmann::json load_checkpoint(const std::string& path, RenderModel& model) {
    const nlohmann::json header = read_checkpoint_header(path);
    if (header.at("c_total") != model.c_total)
        throw CheckpointError("checkpoint output width mismatch");
    const auto& mods = header.at("modalities");
    if (mods.size() != model.modalities.size())
        throw CheckpointError("checkpoint modality count mismatch");
    for (std::size_t i = 0; i < mods.size(); ++i) {
        const ModalitySpec m = serialize::modality_from_json(mods[i]);
        const ModalitySpec& want = model.modalities[i];
        if (m.name != want.name || m.slice_begin != want.slice_begin ||
            m.slice_end != want.slice_end || m.kind != want.kind)
            throw CheckpointError("checkpoint registry mismatch at " + want.name);
    }
    const HashGridConfig gc = serialize::grid_config_from_json(header.at("grid_config"));
    if (gc.levels != model.sdf.grid_config.levels ||
        gc.table_size_log2 != model.sdf.grid_config.table_size_log2 ||
        gc.features_per_level != model.sdf.grid_config.features_per_level ||
        gc.base_resolution != model.sdf.grid_config.base_resolution)
        throw CheckpointError("checkpoint grid config mismatch");

    std::ifstream f(path, std::ios::binary);
    std::uint64_t hlen = 0;
    f.seekg(8);
    f.read(reinterpret_cast<char*>(&hlen), 8);
    const std::size_t data_begin = 16 + hlen;
    auto params = model.all_parameters();
    const auto& dir = header.at("arrays");
    if (dir.size() != params.size()) throw CheckpointError("checkpoint array count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (dir[i].at("name") != params[i]->name ||
            std::size_t(dir[i].at("size")) != params[i]->size())
            throw CheckpointError("checkpoint array mismatch at " + params[i]->name);
        f.seekg(std::streamoff(data_begin + std::size_t(dir[i].at("offset")) * 4));
        f.read(reinterpret_cast<char*>(params[i]->value.data()),
               std::streamsize(params[i]->size() * 4));
    }
    if (!f) throw CheckpointError("truncated checkpoint data: " + path);
    return header;
}

// Rebuilds a model purely from a checkpoint (configuration + weights).
inline RenderModel model_from_checkpoint(const std::string& path) {
    const nlohmann::json header = read_checkpoint_header(path);
    std::vector<ModalitySpec> mods;
    for (const auto& mj : header.at("modalities")) {
        ModalitySpec m = serialize::modality_from_json(mj);
        m.slice_begin = m.slice_end = 0;  // reassigned in order
        mods.push_back(m);
    }
    RenderModel model;
    model.init(std::move(mods), serialize::grid_config_from_json(header.at("grid_config")), 0);
    load_checkpoint(path, model);
    return model;
}

}  // namespace mmrf
