#pragma once

#include "mmrf/core.hpp"
#include "mmrf/dataset.hpp"
#include "mmrf/geometry.hpp"
#include "mmrf/modality.hpp"
#include "mmrf/png_io.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

// Analytic multimodal scene generator and oracle. Known SDF geometry with
// per-band albedo spectra and analytic polarization, traced through the
// same camera models as the engine, produces ground-truth raw frames and
// silhouette masks for the desk-scale test scenes.
//
// Scenes are authored directly in the normalized world (object inside the
// unit ROI sphere); the manifest declares the matching bounding sphere so
// loading is scale-free.

namespace mmrf {

enum class PrimitiveKind { Sphere, Box, Torus };
enum class AolpMode { FixedAngle, NormalAzimuth };

struct Material {
    // smooth spectral curve anchors; channel albedos derive from these so
    // modalities share information
    double r = 0.5, g = 0.5, b = 0.5;
    double nir = -1.0;   // < 0: derived from rgb
    double dolp = 0.0;   // [0,1]
    AolpMode aolp_mode = AolpMode::FixedAngle;
    double aolp_deg = 30.0;

    double nir_albedo() const { return nir >= 0 ? nir : std::min(0.25 * r + 0.5 * g + 0.25 * b + 0.15, 1.0); }

    // Gaussian RGB mixture; clipped to [0,1].
    double albedo_at(double wavelength_nm) const {
        if (wavelength_nm >= 750.0) return nir_albedo();
        auto gauss = [](double x, double mu, double sigma) {
            const double d = (x - mu) / sigma;
            return std::exp(-0.5 * d * d);
        };
        const double v = r * gauss(wavelength_nm, 610, 55) + g * gauss(wavelength_nm, 550, 55) +
                         b * gauss(wavelength_nm, 465, 55);
        return std::min(std::max(v, 0.0), 1.0);
    }
};

struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Sphere;
    Vec3 center = Vec3::Zero();
    Vec3 size = Vec3(0.5, 0.5, 0.5);  // sphere: x=radius; torus: x=major, y=minor
    int material = 0;
};

struct AnalyticScene {
    std::vector<Primitive> primitives;
    std::vector<Material> materials;
    Material background;  // ambient constant background color per channel

    void validate() const {
        for (const auto& p : primitives) {
            const double extent = p.center.norm() + p.size.maxCoeff();
            if (extent > 1.0)
                throw Error("synth scene: primitive extends outside the unit sphere");
            if (p.material < 0 || p.material >= int(materials.size()))
                throw Error("synth scene: material id out of range");
        }
        for (const auto& m : materials)
            if (m.dolp < 0 || m.dolp > 1) throw Error("synth scene: DoLP outside [0,1]");
    }
};

inline double primitive_sdf(const Primitive& p, const Vec3& pos) {
    const Vec3 q = pos - p.center;
    switch (p.kind) {
        case PrimitiveKind::Sphere:
            return q.norm() - p.size.x();
        case PrimitiveKind::Box: {
            const Vec3 d = q.cwiseAbs() - p.size;
            const Vec3 dmax = d.cwiseMax(0.0);
            return dmax.norm() + std::min(d.maxCoeff(), 0.0);
        }
        case PrimitiveKind::Torus: {
            const double lx = std::sqrt(q.x() * q.x() + q.z() * q.z()) - p.size.x();
            return std::sqrt(lx * lx + q.y() * q.y()) - p.size.y();
        }
    }
    return 1e9;
}

// Exact signed distance for single primitives; min-union for multiples
// (approximate distance, exact sign).
inline double analytic_sdf(const AnalyticScene& scene, const Vec3& pos) {
    double d = 1e9;
    for (const auto& p : scene.primitives) d = std::min(d, primitive_sdf(p, pos));
    return d;
}

inline int nearest_primitive(const AnalyticScene& scene, const Vec3& pos) {
    double best = 1e9;
    int idx = -1;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        const double d = primitive_sdf(scene.primitives[i], pos);
        if (d < best) {
            best = d;
            idx = int(i);
        }
    }
    return idx;
}

inline Vec3 analytic_normal(const AnalyticScene& scene, const Vec3& pos, double h = 1e-5) {
    Vec3 n;
    for (int a = 0; a < 3; ++a) {
        Vec3 hi = pos, lo = pos;
        hi[a] += h;
        lo[a] -= h;
        n[a] = analytic_sdf(scene, hi) - analytic_sdf(scene, lo);
    }
    return n.normalized();
}

struct TraceHit {
    bool hit = false;
    double t = 0;
    Vec3 point = Vec3::Zero();
    int primitive = -1;
};

inline TraceHit sphere_trace(const AnalyticScene& scene, const Vec3& origin, const Vec3& dir,
                             double t_max = 8.0, int max_steps = 256, double eps = 1e-6) {
    TraceHit out;
    double t = 0.0;
    for (int i = 0; i < max_steps; ++i) {
        const Vec3 p = origin + t * dir;
        const double d = analytic_sdf(scene, p);
        if (d < eps) {
            out.hit = true;
            out.t = t;
            out.point = p;
            out.primitive = nearest_primitive(scene, p);
            return out;
        }
        t += std::max(d, 1e-5);
        if (t > t_max) break;
    }
    return out;
}

// Channel wavelength fallback when a channel has none (mono-style sensors).
inline double channel_wavelength(const ModalitySpec& spec, int channel) {
    const auto& c = spec.channels[channel];
    return c.wavelength_nm ? *c.wavelength_nm : 550.0;
}

// Stokes vector of the surface at a hit point: S0 = albedo (ambient
// Lambertian, view-independent), linear components from the material's DoLP
// and AoLP in the fixed world reference frame.
inline StokesVector surface_stokes(const AnalyticScene& scene, const Material& mat,
                                   const Vec3& hit_point, const Vec3& view_dir) {
    const double s0 = mat.albedo_at(550.0);
    double aolp = mat.aolp_deg;
    if (mat.aolp_mode == AolpMode::NormalAzimuth) {
        const Vec3 n = analytic_normal(scene, hit_point);
        // azimuth of the projected normal in the plane orthogonal to the view
        const Vec3 d = view_dir.normalized();
        Vec3 ref = Vec3::UnitX() - d * d.dot(Vec3::UnitX());
        if (ref.norm() < 1e-9) ref = Vec3::UnitY() - d * d.dot(Vec3::UnitY());
        ref.normalize();
        const Vec3 np = n - d * d.dot(n);
        if (np.norm() > 1e-9)
            aolp = rad_to_deg(std::atan2(d.dot(ref.cross(np.normalized())), ref.dot(np.normalized())));
        if (aolp < 0) aolp += 180.0;
    }
    const double two_a = 2.0 * deg_to_rad(aolp);
    return {s0, s0 * mat.dolp * std::cos(two_a), s0 * mat.dolp * std::sin(two_a)};
}

inline std::uint16_t quantize(double v, int bit_depth) {
    const double maxv = double((1u << bit_depth) - 1u);
    const double q = std::round(std::min(std::max(v, 0.0), 1.0) * maxv);
    return std::uint16_t(q);
}

// Ground-truth raw mosaicked frame through one camera. Misses produce the
// background color. Pixel values quantized to the modality bit depth.
inline Image16 trace_ground_truth(const AnalyticScene& scene, const CameraModel& cam,
                                  const ModalitySpec& spec) {
    Image16 img;
    img.width = cam.intrinsics.width;
    img.height = cam.intrinsics.height;
    img.channels = 1;
    img.data.assign(std::size_t(img.width) * img.height, 0);
    const bool pol = spec.kind == ModalityKind::Polarization;
#pragma omp parallel for schedule(static)
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            const Ray ray = pixel_to_ray(cam, c, r);
            const int ch = spec.pattern ? channel_at(*spec.pattern, r, c) : 0;
            const TraceHit hit = sphere_trace(scene, ray.origin, ray.direction);
            const Material& mat =
                hit.hit ? scene.materials[scene.primitives[hit.primitive].material]
                        : scene.background;
            double value;
            if (pol) {
                StokesVector s;
                if (hit.hit) {
                    s = surface_stokes(scene, mat, hit.point, ray.direction);
                } else {
                    s = {mat.albedo_at(550.0), 0.0, 0.0};  // unpolarized background
                }
                const double roll = camera_roll_about_ray_safe(cam.pose, ray.direction);
                value = stokes_to_intensity(s, *spec.channels[ch].filter_angle_deg, roll);
            } else {
                value = mat.albedo_at(channel_wavelength(spec, ch));
            }
            img.at(r, c) = quantize(value, spec.bit_depth);
        }
    }
    return img;
}

inline Image8 silhouette_mask(const AnalyticScene& scene, const CameraModel& cam) {
    Image8 img;
    img.width = cam.intrinsics.width;
    img.height = cam.intrinsics.height;
    img.data.assign(std::size_t(img.width) * img.height, 0);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            const Ray ray = pixel_to_ray(cam, c, r);
            img.at(r, c) = sphere_trace(scene, ray.origin, ray.direction).hit ? 255 : 0;
        }
    return img;
}

// --- scene spec file --------------------------------------------------------

inline nlohmann::json material_json(const Material& m) {
    nlohmann::json j = {{"rgb", {m.r, m.g, m.b}}, {"dolp", m.dolp}, {"aolp_deg", m.aolp_deg},
                        {"aolp_mode", m.aolp_mode == AolpMode::NormalAzimuth ? "normal_azimuth"
                                                                             : "fixed"}};
    if (m.nir >= 0) j["nir"] = m.nir;
    return j;
}

inline Material material_from_json(const nlohmann::json& j) {
    Material m;
    m.r = j.at("rgb")[0];
    m.g = j.at("rgb")[1];
    m.b = j.at("rgb")[2];
    if (j.contains("nir")) m.nir = j["nir"];
    if (j.contains("dolp")) m.dolp = j["dolp"];
    if (j.contains("aolp_deg")) m.aolp_deg = j["aolp_deg"];
    if (j.contains("aolp_mode") && j["aolp_mode"] == "normal_azimuth")
        m.aolp_mode = AolpMode::NormalAzimuth;
    return m;
}

inline nlohmann::json scene_spec_json(const AnalyticScene& s) {
    nlohmann::json j;
    j["primitives"] = nlohmann::json::array();
    for (const auto& p : s.primitives) {
        const char* kind = p.kind == PrimitiveKind::Sphere ? "sphere"
                           : p.kind == PrimitiveKind::Box  ? "box"
                                                           : "torus";
        j["primitives"].push_back({{"kind", kind},
                                   {"center", {p.center.x(), p.center.y(), p.center.z()}},
                                   {"size", {p.size.x(), p.size.y(), p.size.z()}},
                                   {"material", p.material}});
    }
    j["materials"] = nlohmann::json::array();
    for (const auto& m : s.materials) j["materials"].push_back(material_json(m));
    j["background"] = material_json(s.background);
    return j;
}

inline AnalyticScene scene_spec_from_json(const nlohmann::json& j) {
    AnalyticScene s;
    for (const auto& pj : j.at("primitives")) {
        Primitive p;
        const std::string kind = pj.at("kind");
        p.kind = kind == "sphere" ? PrimitiveKind::Sphere
                 : kind == "box"  ? PrimitiveKind::Box
                                  : PrimitiveKind::Torus;
        p.center = Vec3(pj.at("center")[0], pj.at("center")[1], pj.at("center")[2]);
        p.size = Vec3(pj.at("size")[0], pj.at("size")[1], pj.at("size")[2]);
        p.material = pj.at("material");
        s.primitives.push_back(p);
    }
    for (const auto& mj : j.at("materials")) s.materials.push_back(material_from_json(mj));
    if (j.contains("background")) s.background = material_from_json(j["background"]);
    s.validate();
    return s;
}

inline AnalyticScene default_sphere_scene() {
    AnalyticScene s;
    Primitive p;
    p.kind = PrimitiveKind::Sphere;
    p.size = Vec3(0.5, 0.5, 0.5);
    p.material = 0;
    s.primitives.push_back(p);
    Material m;
    m.r = 0.8;
    m.g = 0.55;
    m.b = 0.3;
    m.dolp = 0.4;
    s.materials.push_back(m);
    s.background.r = s.background.g = s.background.b = 0.15;
    return s;
}

// A two-material scene with more structure (sphere + box), used by the
// comparative experiments.
inline AnalyticScene default_duo_scene() {
    AnalyticScene s;
    Primitive a;
    a.kind = PrimitiveKind::Sphere;
    a.center = Vec3(-0.22, 0.0, 0.05);
    a.size = Vec3(0.38, 0.38, 0.38);
    a.material = 0;
    Primitive b;
    b.kind = PrimitiveKind::Box;
    b.center = Vec3(0.33, 0.05, -0.1);
    b.size = Vec3(0.22, 0.28, 0.2);
    b.material = 1;
    s.primitives = {a, b};
    Material m0;
    m0.r = 0.8;
    m0.g = 0.5;
    m0.b = 0.25;
    m0.dolp = 0.45;
    Material m1;
    m1.r = 0.3;
    m1.g = 0.65;
    m1.b = 0.75;
    m1.dolp = 0.15;
    m1.aolp_deg = 120.0;
    s.materials = {m0, m1};
    s.background.r = s.background.g = s.background.b = 0.12;
    return s;
}

// --- bundle generation ------------------------------------------------------

struct BundleOptions {
    int n_views = 50;
    int image_size = 64;
    std::vector<std::string> modalities = {"rgb", "mono", "nir", "pol", "ms"};
    std::uint64_t seed = 0;
    double camera_distance = 3.0;
    double ring_height = 0.55;
    bool write_masks = true;
};

inline Pose look_at_origin(const Vec3& position) {
    Pose pose;
    const Vec3 fwd = (-position).normalized();
    Vec3 down(0, 0, -1);
    down = (down - fwd * fwd.dot(down));
    if (down.norm() < 1e-9) down = Vec3(0, 1, 0);
    down.normalize();
    const Vec3 right = down.cross(fwd);
    pose.rotation.col(0) = right;
    pose.rotation.col(1) = down;
    pose.rotation.col(2) = fwd;
    pose.translation = position;
    return pose;
}

inline Intrinsics bundle_intrinsics(int size) {
    Intrinsics in;
    in.width = in.height = size;
    in.fx = in.fy = size * 1.55;
    in.cx = size * 0.5 + 0.25;
    in.cy = size * 0.5 - 0.25;
    return in;
}

// Two camera rings at +-ring_height covering the object at 360 degrees,
// per-modality star-offset poses, frames + manifest + masks written in the
// dataset layout. Returns the manifest path.
inline std::filesystem::path make_scene_bundle(const AnalyticScene& scene,
                                               const std::filesystem::path& out_dir,
                                               const BundleOptions& opt) {
    if (opt.n_views < 2) throw Error("make_scene_bundle: need at least 2 views");
    scene.validate();
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    SceneManifest manifest;
    manifest.scene_name = out_dir.filename().string();
    manifest.reference_camera = opt.modalities.front();
    manifest.object_center = Vec3::Zero();
    manifest.object_radius = 1.0 / 1.1;  // load_scene's margin maps it to 1
    for (int t = 9; t < opt.n_views; t += 10) manifest.test_views.push_back(t);
    if (manifest.test_views.empty()) manifest.test_views.push_back(opt.n_views - 1);

    Rng rng = make_rng(opt.seed, 31);
    // per-modality cameras: mild Brown-Conrady distortion, small star offsets
    for (std::size_t mi = 0; mi < opt.modalities.size(); ++mi) {
        CameraEntry cam;
        cam.modality = make_default_spec(opt.modalities[mi]);
        cam.intrinsics = bundle_intrinsics(opt.image_size);
        cam.distortion = {-0.06, 0.012, 0.0006, -0.0004};
        if (mi > 0) {
            const double dx = 0.06 * ((mi % 2) ? 1.0 : -1.0) * double((mi + 1) / 2);
            cam.stereo_extrinsic.translation = Vec3(dx, 0.03 * double(mi), 0.0);
            const double a = 0.01 * double(mi);
            cam.stereo_extrinsic.rotation =
                Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix();
        }
        manifest.cameras.push_back(cam);
    }

    const int per_ring = (opt.n_views + 1) / 2;
    const double phase = uniform(rng, 0.0, 2.0 * kPi);
    for (int v = 0; v < opt.n_views; ++v) {
        const int ring = v % 2;
        const int k = v / 2;
        const double az = phase + 2.0 * kPi * k / per_ring + (ring ? kPi / per_ring : 0.0);
        const double h = ring ? -opt.ring_height : opt.ring_height;
        const Vec3 pos(opt.camera_distance * std::cos(az), opt.camera_distance * std::sin(az), h);
        ViewEntry view;
        view.index = v;
        view.reference_pose = look_at_origin(pos);
        manifest.views.push_back(view);
    }

    char buf[16];
    for (std::size_t mi = 0; mi < manifest.cameras.size(); ++mi) {
        const auto& cam = manifest.cameras[mi];
        const std::string& name = cam.modality.name;
        fs::create_directories(out_dir / "frames" / name);
        if (opt.write_masks) fs::create_directories(out_dir / "masks" / name);
        for (auto& view : manifest.views) {
            const Pose world = compose_star_pose(view.reference_pose, cam.stereo_extrinsic);
            const CameraModel model{cam.intrinsics, cam.distortion, world};
            std::snprintf(buf, sizeof buf, "%03d.png", view.index);
            const std::string rel = "frames/" + name + "/" + buf;
            write_png16((out_dir / rel).string(),
                        trace_ground_truth(scene, model, cam.modality));
            view.frame_paths[name] = rel;
            if (opt.write_masks)
                write_png8((out_dir / "masks" / name / buf).string(),
                           silhouette_mask(scene, model));
        }
    }

    const fs::path manifest_path = out_dir / "manifest.json";
    std::ofstream f(manifest_path);
    f << manifest_json(manifest).dump(2) << "\n";
    const fs::path spec_path = out_dir / "scene_spec.json";
    std::ofstream sf(spec_path);
    sf << scene_spec_json(scene).dump(2) << "\n";
    return manifest_path;
}

}  // namespace mmrf
