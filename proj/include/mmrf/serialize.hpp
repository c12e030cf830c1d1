#pragma once

#include "mmrf/core.hpp"
#include "mmrf/field.hpp"
#include "mmrf/geometry.hpp"
#include "mmrf/modality.hpp"

#include <nlohmann/json.hpp>

#include <vector>

// JSON converters shared by the dataset manifest and checkpoint formats.

namespace mmrf::serialize {

inline nlohmann::json grid_config_json(const HashGridConfig& c) {
    return {{"levels", c.levels},
            {"base_resolution", c.base_resolution},
            {"growth", c.growth},
            {"features_per_level", c.features_per_level},
            {"table_size_log2", c.table_size_log2}};
}

inline HashGridConfig grid_config_from_json(const nlohmann::json& j) {
    HashGridConfig c;
    c.levels = j.at("levels");
    c.base_resolution = j.at("base_resolution");
    c.growth = j.at("growth");
    c.features_per_level = j.at("features_per_level");
    c.table_size_log2 = j.at("table_size_log2");
    return c;
}

inline nlohmann::json modality_json(const ModalitySpec& m) {
    nlohmann::json j;
    j["name"] = m.name;
    j["kind"] = m.kind == ModalityKind::Polarization ? "polarization" : "radiance";
    j["bit_depth"] = m.bit_depth;
    j["slice"] = {m.slice_begin, m.slice_end};
    nlohmann::json chans = nlohmann::json::array();
    for (const auto& c : m.channels) {
        nlohmann::json cj;
        cj["name"] = c.name;
        if (c.wavelength_nm) cj["wavelength_nm"] = *c.wavelength_nm;
        if (c.filter_angle_deg) cj["filter_angle_deg"] = *c.filter_angle_deg;
        chans.push_back(cj);
    }
    j["channels"] = chans;
    if (m.pattern) {
        j["pattern"] = {{"tile_rows", m.pattern->tile_rows},
                        {"tile_cols", m.pattern->tile_cols},
                        {"cells", m.pattern->cell_channel}};
    }
    return j;
}

inline ModalitySpec modality_from_json(const nlohmann::json& j) {
    ModalitySpec m;
    m.name = j.at("name");
    m.kind = j.at("kind") == "polarization" ? ModalityKind::Polarization
                                            : ModalityKind::Radiance;
    m.bit_depth = j.at("bit_depth");
    if (j.contains("slice")) {
        m.slice_begin = j["slice"][0];
        m.slice_end = j["slice"][1];
    }
    for (const auto& cj : j.at("channels")) {
        ChannelDesc c;
        c.name = cj.at("name");
        if (cj.contains("wavelength_nm")) c.wavelength_nm = double(cj["wavelength_nm"]);
        if (cj.contains("filter_angle_deg")) c.filter_angle_deg = double(cj["filter_angle_deg"]);
        m.channels.push_back(c);
    }
    if (j.contains("pattern")) {
        MosaickPattern p;
        p.tile_rows = j["pattern"].at("tile_rows");
        p.tile_cols = j["pattern"].at("tile_cols");
        p.cell_channel = j["pattern"].at("cells").get<std::vector<std::vector<int>>>();
        m.pattern = p;
    }
    return m;
}

inline nlohmann::json pose_json(const Pose& p) {
    nlohmann::json rot = nlohmann::json::array();
    for (int r = 0; r < 3; ++r)
        rot.push_back({p.rotation(r, 0), p.rotation(r, 1), p.rotation(r, 2)});
    return {{"rotation", rot},
            {"translation", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

inline Pose pose_from_json(const nlohmann::json& j) {
    Pose p;
    const auto& rot = j.at("rotation");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) p.rotation(r, c) = rot[r][c];
    const auto& t = j.at("translation");
    p.translation = Vec3(t[0], t[1], t[2]);
    return p;
}

inline nlohmann::json intrinsics_json(const Intrinsics& i) {
    return {{"fx", i.fx}, {"fy", i.fy}, {"cx", i.cx}, {"cy", i.cy},
            {"width", i.width}, {"height", i.height}};
}

inline Intrinsics intrinsics_from_json(const nlohmann::json& j) {
    Intrinsics i;
    i.fx = j.at("fx");
    i.fy = j.at("fy");
    i.cx = j.at("cx");
    i.cy = j.at("cy");
    i.width = j.at("width");
    i.height = j.at("height");
    return i;
}

inline nlohmann::json distortion_json(const DistortionCoefficients& d) {
    return {{"k1", d.k1}, {"k2", d.k2}, {"p1", d.p1}, {"p2", d.p2}};
}

inline DistortionCoefficients distortion_from_json(const nlohmann::json& j) {
    DistortionCoefficients d;
    d.k1 = j.at("k1");
    d.k2 = j.at("k2");
    d.p1 = j.at("p1");
    d.p2 = j.at("p2");
    return d;
}

}  // namespace mmrf::serialize
