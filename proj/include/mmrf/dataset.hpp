#pragma once

#include "mmrf/core.hpp"
#include "mmrf/geometry.hpp"
#include "mmrf/modality.hpp"
#include "mmrf/png_io.hpp"
#include "mmrf/serialize.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

// On-disk scene format: a JSON manifest plus 16-bit grayscale PNG frames
// holding raw mosaicked values right-aligned in the low bits, and optional
// 8-bit masks. Layout relative to the manifest:
//   scene/manifest.json
//   scene/frames/<modality>/<view:03>.png
//   scene/masks/<modality>/<view:03>.png

namespace mmrf {

struct MissingFrame : Error {
    explicit MissingFrame(const std::string& m) : Error(m) {}
};
struct BitDepthMismatch : Error {
    explicit BitDepthMismatch(const std::string& m) : Error(m) {}
};
struct PoseCompositionError : Error {
    explicit PoseCompositionError(const std::string& m) : Error(m) {}
};
struct BudgetTooLarge : Error {
    explicit BudgetTooLarge(const std::string& m) : Error(m) {}
};
struct ManifestError : Error {
    explicit ManifestError(const std::string& m) : Error(m) {}
};

struct CameraEntry {
    ModalitySpec modality;
    Intrinsics intrinsics;
    DistortionCoefficients distortion;
    Pose stereo_extrinsic;  // identity for the reference camera
};

struct ViewEntry {
    int index = 0;
    Pose reference_pose;  // reference camera, camera-to-world, raw world
    std::map<std::string, std::string> frame_paths;  // modality -> relative path
};

struct SceneManifest {
    std::string scene_name;
    std::string reference_camera;
    Vec3 object_center = Vec3::Zero();
    double object_radius = 0.5;
    std::vector<CameraEntry> cameras;
    std::vector<ViewEntry> views;
    std::vector<int> test_views;
};

struct Split {
    std::vector<int> train;
    std::vector<int> test;
};

inline const std::vector<int>& default_test_views() {
    static const std::vector<int> v = {9, 19, 29, 39, 49};
    return v;
}

inline nlohmann::json manifest_json(const SceneManifest& m) {
    nlohmann::json j;
    j["scene"] = m.scene_name;
    j["reference_camera"] = m.reference_camera;
    j["object_sphere"] = {{"center", {m.object_center.x(), m.object_center.y(), m.object_center.z()}},
                          {"radius", m.object_radius}};
    nlohmann::json cams = nlohmann::json::array();
    for (const auto& c : m.cameras)
        cams.push_back({{"modality", serialize::modality_json(c.modality)},
                        {"intrinsics", serialize::intrinsics_json(c.intrinsics)},
                        {"distortion", serialize::distortion_json(c.distortion)},
                        {"stereo_extrinsic", serialize::pose_json(c.stereo_extrinsic)}});
    j["cameras"] = cams;
    nlohmann::json views = nlohmann::json::array();
    for (const auto& v : m.views) {
        nlohmann::json vj;
        vj["index"] = v.index;
        vj["reference_pose"] = serialize::pose_json(v.reference_pose);
        vj["frames"] = v.frame_paths;
        views.push_back(vj);
    }
    j["views"] = views;
    j["split"] = {{"test", m.test_views}};
    return j;
}

inline SceneManifest manifest_from_json(const nlohmann::json& j) {
    SceneManifest m;
    m.scene_name = j.at("scene");
    m.reference_camera = j.at("reference_camera");
    const auto& os = j.at("object_sphere");
    m.object_center = Vec3(os.at("center")[0], os.at("center")[1], os.at("center")[2]);
    m.object_radius = os.at("radius");
    for (const auto& cj : j.at("cameras")) {
        CameraEntry c;
        c.modality = serialize::modality_from_json(cj.at("modality"));
        c.intrinsics = serialize::intrinsics_from_json(cj.at("intrinsics"));
        c.distortion = serialize::distortion_from_json(cj.at("distortion"));
        c.stereo_extrinsic = serialize::pose_from_json(cj.at("stereo_extrinsic"));
        m.cameras.push_back(c);
    }
    for (const auto& vj : j.at("views")) {
        ViewEntry v;
        v.index = vj.at("index");
        v.reference_pose = serialize::pose_from_json(vj.at("reference_pose"));
        if (vj.contains("frames"))
            v.frame_paths = vj["frames"].get<std::map<std::string, std::string>>();
        m.views.push_back(v);
    }
    if (j.contains("split") && j["split"].contains("test"))
        m.test_views = j["split"]["test"].get<std::vector<int>>();
    else
        m.test_views = default_test_views();
    // drop defaulted test indices absent from this manifest
    std::erase_if(m.test_views, [&](int t) {
        for (const auto& v : m.views)
            if (v.index == t) return false;
        return true;
    });
    return m;
}

inline SceneManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ManifestError("cannot open manifest: " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError("manifest parse error: " + std::string(e.what()));
    }
    return manifest_from_json(j);
}

// A loaded, normalized scene. Frames are normalized to [0,1] by
// 2^bit_depth - 1; camera world poses are composed via the star topology
// and rescaled so the declared object sphere sits strictly inside the unit
// ROI.
struct SceneDataset {
    SceneManifest manifest;
    std::filesystem::path root;
    std::vector<ModalitySpec> modalities;  // slice-assigned, camera order
    int c_total = 0;
    Split split;
    double world_scale = 1.0;

    // frames[modality][view_slot]: normalized values, row-major
    std::map<std::string, std::vector<std::vector<float>>> frames;
    std::map<std::string, std::vector<std::optional<Image8>>> masks;
    // cameras[modality][view_slot]: world camera (normalized frame)
    std::map<std::string, std::vector<CameraModel>> cameras;
    std::map<std::string, int> frame_width, frame_height;

    int view_count() const { return int(manifest.views.size()); }

    int view_slot(int view_index) const {
        for (std::size_t i = 0; i < manifest.views.size(); ++i)
            if (manifest.views[i].index == view_index) return int(i);
        throw ManifestError("unknown view index " + std::to_string(view_index));
    }

    const ModalitySpec& modality(const std::string& name) const {
        for (const auto& m : modalities)
            if (m.name == name) return m;
        throw RegistryError("modality not in scene: " + name);
    }

    float frame_value(const std::string& mod, int slot, int row, int col) const {
        const auto& img = frames.at(mod)[slot];
        return img[std::size_t(row) * frame_width.at(mod) + col];
    }
};

inline SceneDataset load_scene(const std::filesystem::path& manifest_path) {
    SceneDataset ds;
    ds.manifest = read_manifest(manifest_path);
    ds.root = manifest_path.parent_path();
    const SceneManifest& m = ds.manifest;

    for (const auto& c : m.cameras) ds.modalities.push_back(c.modality);
    ds.c_total = assign_slices(ds.modalities);

    for (int t : m.test_views) ds.split.test.push_back(t);
    for (const auto& v : m.views)
        if (std::find(ds.split.test.begin(), ds.split.test.end(), v.index) ==
            ds.split.test.end())
            ds.split.train.push_back(v.index);

    // normalization: declared object sphere -> strictly inside unit ROI
    const double margin = 1.1;
    ds.world_scale = 1.0 / (m.object_radius * margin);

    for (std::size_t ci = 0; ci < m.cameras.size(); ++ci) {
        const CameraEntry& cam = m.cameras[ci];
        const std::string& name = ds.modalities[ci].name;
        cam.intrinsics.validate();
        cam.distortion.validate();
        try {
            cam.stereo_extrinsic.validate();
        } catch (const Error& e) {
            throw PoseCompositionError(name + ": " + e.what());
        }
        auto& cam_list = ds.cameras[name];
        auto& frame_list = ds.frames[name];
        auto& mask_list = ds.masks[name];
        for (const auto& v : m.views) {
            try {
                v.reference_pose.validate();
            } catch (const Error& e) {
                throw PoseCompositionError("view " + std::to_string(v.index) + ": " + e.what());
            }
            Pose world = compose_star_pose(v.reference_pose, cam.stereo_extrinsic);
            world.translation = (world.translation - m.object_center) * ds.world_scale;
            CameraModel model{cam.intrinsics, cam.distortion, world};
            cam_list.push_back(model);

            auto it = v.frame_paths.find(name);
            if (it == v.frame_paths.end())
                throw MissingFrame(name + ": view " + std::to_string(v.index) +
                                   " has no frame entry");
            const std::filesystem::path fp = ds.root / it->second;
            if (!std::filesystem::exists(fp))
                throw MissingFrame("missing frame file: " + fp.string());
            Image16 img = read_png16(fp.string());
            if (img.width != cam.intrinsics.width || img.height != cam.intrinsics.height)
                throw BitDepthMismatch(fp.string() + ": resolution mismatch");
            const std::uint32_t max_allowed = (1u << ds.modalities[ci].bit_depth) - 1u;
            std::vector<float> norm(img.data.size());
            for (std::size_t i = 0; i < img.data.size(); ++i) {
                if (img.data[i] > max_allowed)
                    throw BitDepthMismatch(fp.string() + ": value exceeds declared bit depth");
                norm[i] = float(img.data[i]) / float(max_allowed);
            }
            frame_list.push_back(std::move(norm));

            const std::filesystem::path mp = ds.root / "masks" / name / fp.filename();
            if (std::filesystem::exists(mp))
                mask_list.push_back(read_png8(mp.string()));
            else
                mask_list.push_back(std::nullopt);
        }
        ds.frame_width[name] = cam.intrinsics.width;
        ds.frame_height[name] = cam.intrinsics.height;
    }
    return ds;
}

// Report-only manifest validation.
inline std::vector<std::string> validate(const SceneManifest& m,
                                         const std::filesystem::path& root) {
    std::vector<std::string> report;
    // slice partition (when slices are declared)
    std::vector<ModalitySpec> mods;
    for (const auto& c : m.cameras) mods.push_back(c.modality);
    bool declared = false;
    for (const auto& s : mods)
        if (s.slice_end > s.slice_begin) declared = true;
    if (declared) {
        try {
            check_slice_partition(mods);
        } catch (const Error& e) {
            report.push_back(std::string("SliceOverlap: ") + e.what());
        }
    }
    for (const auto& c : m.cameras) {
        try {
            ModalitySpec s = c.modality;
            s.slice_begin = s.slice_end = 0;
            s.validate();
        } catch (const Error& e) {
            report.push_back(std::string("ModalityError: ") + e.what());
        }
        try {
            c.intrinsics.validate();
            c.distortion.validate();
        } catch (const Error& e) {
            report.push_back(std::string("CameraError: ") + e.what());
        }
        try {
            c.stereo_extrinsic.validate();
        } catch (const Error& e) {
            report.push_back(std::string("PoseError: ") + std::string(e.what()) + " (" +
                             c.modality.name + ")");
        }
    }
    std::vector<int> seen;
    for (const auto& v : m.views) {
        if (std::find(seen.begin(), seen.end(), v.index) != seen.end())
            report.push_back("DuplicateView: index " + std::to_string(v.index));
        seen.push_back(v.index);
        try {
            v.reference_pose.validate();
        } catch (const Error& e) {
            report.push_back("PoseError: view " + std::to_string(v.index) + ": " + e.what());
        }
        for (const auto& [mod, rel] : v.frame_paths)
            if (!std::filesystem::exists(root / rel))
                report.push_back("MissingFrame: " + (root / rel).string());
    }
    for (int t : m.test_views)
        if (std::find(seen.begin(), seen.end(), t) == seen.end())
            report.push_back("SplitError: test view " + std::to_string(t) + " not in views");
    return report;
}

// Per-(modality) usable training view indices.
struct ViewBudget {
    std::map<std::string, std::vector<int>> views;  // modality -> view indices

    const std::vector<int>& for_modality(const std::string& name) const {
        return views.at(name);
    }
};

inline ViewBudget full_budget(const SceneDataset& ds) {
    ViewBudget b;
    for (const auto& m : ds.modalities) b.views[m.name] = ds.split.train;
    return b;
}

// Deterministic subset of the train split for one modality; all views for
// the others.
inline ViewBudget unbalanced_budget(const SceneDataset& ds, const std::string& modality,
                                    int n_views, std::uint64_t seed) {
    if (n_views > int(ds.split.train.size()))
        throw BudgetTooLarge("requested " + std::to_string(n_views) + " of " +
                             std::to_string(ds.split.train.size()) + " train views");
    ViewBudget b = full_budget(ds);
    std::vector<int> pool = ds.split.train;
    Rng rng = make_rng(seed, 21);
    for (std::size_t i = pool.size(); i > 1; --i)
        std::swap(pool[i - 1], pool[uniform_int(rng, 0, int(i) - 1)]);
    pool.resize(n_views);
    std::sort(pool.begin(), pool.end());
    b.views[ds.modality(modality).name] = pool;
    return b;
}

}  // namespace mmrf
