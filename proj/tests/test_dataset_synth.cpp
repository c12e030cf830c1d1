#include <catch2/catch_amalgamated.hpp>

#include "mmrf/dataset.hpp"
#include "mmrf/synth.hpp"

#include <filesystem>

using namespace mmrf;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / "mmrf_tests" / name;
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

// Shared tiny bundle: generating frames is the slow part, reuse it.
const std::filesystem::path& tiny_bundle() {
    static const std::filesystem::path manifest = [] {
        const auto dir = scratch_dir("tiny_bundle");
        BundleOptions opt;
        opt.n_views = 12;
        opt.image_size = 16;
        opt.modalities = {"rgb", "nir"};
        opt.seed = 1;
        return make_scene_bundle(default_sphere_scene(), dir, opt);
    }();
    return manifest;
}

}  // namespace

TEST_CASE("analytic sdf of a unit sphere") {
    AnalyticScene s;
    s.primitives.push_back({PrimitiveKind::Sphere, Vec3::Zero(), Vec3(1, 1, 1), 0});
    s.materials.push_back({});
    CHECK(analytic_sdf(s, Vec3(2, 0, 0)) == Catch::Approx(1.0).margin(1e-12));
    CHECK(analytic_sdf(s, Vec3(0, 0, 0)) == Catch::Approx(-1.0).margin(1e-12));
}

TEST_CASE("union sdf is the min over primitives") {
    AnalyticScene s;
    s.primitives.push_back({PrimitiveKind::Sphere, Vec3(-0.4, 0, 0), Vec3(0.2, 0.2, 0.2), 0});
    s.primitives.push_back({PrimitiveKind::Sphere, Vec3(0.4, 0, 0), Vec3(0.3, 0.3, 0.3), 0});
    s.materials.push_back({});
    Rng rng = make_rng(3);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 p(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
        const double a = primitive_sdf(s.primitives[0], p);
        const double b = primitive_sdf(s.primitives[1], p);
        CHECK(analytic_sdf(s, p) == Catch::Approx(std::min(a, b)).margin(1e-12));
    }
}

TEST_CASE("box and torus sdfs have the expected zero crossings") {
    Primitive box{PrimitiveKind::Box, Vec3::Zero(), Vec3(0.2, 0.3, 0.4), 0};
    CHECK(primitive_sdf(box, Vec3(0.2, 0, 0)) == Catch::Approx(0.0).margin(1e-12));
    CHECK(primitive_sdf(box, Vec3(0.5, 0, 0)) == Catch::Approx(0.3).margin(1e-12));
    CHECK(primitive_sdf(box, Vec3::Zero()) < 0.0);
    Primitive torus{PrimitiveKind::Torus, Vec3::Zero(), Vec3(0.4, 0.1, 0), 0};
    CHECK(primitive_sdf(torus, Vec3(0.4, 0, 0)) == Catch::Approx(-0.1).margin(1e-12));
    CHECK(primitive_sdf(torus, Vec3(0.5, 0, 0)) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("flat albedo sphere quantizes to the expected raw value") {
    AnalyticScene s = default_sphere_scene();
    s.materials[0].r = 0.8;
    s.materials[0].g = 0.8;
    s.materials[0].b = 0.8;
    CameraModel cam;
    cam.intrinsics = bundle_intrinsics(16);
    cam.pose.translation = Vec3(0, 0, -3);
    const ModalitySpec rgb = make_rgb_spec();
    const Image16 img = trace_ground_truth(s, cam, rgb);
    // center pixel hits the sphere; R-cell value = round(albedo_R * 4095)
    const int r = 8, c = 8;
    const int ch = channel_at(*rgb.pattern, r, c);
    const double albedo = s.materials[0].albedo_at(*rgb.channels[ch].wavelength_nm);
    CHECK(img.at(r, c) == quantize(albedo, 12));
    CHECK(std::abs(img.at(r, c) / 4095.0 - albedo) <= 0.5 / 4095.0);
}

TEST_CASE("unpolarized material reads s0/2 at all four filter angles") {
    AnalyticScene s = default_sphere_scene();
    s.materials[0].dolp = 0.0;
    CameraModel cam;
    cam.intrinsics = bundle_intrinsics(16);
    cam.pose.translation = Vec3(0, 0, -3);
    const ModalitySpec pol = make_pol_spec();
    const Image16 img = trace_ground_truth(s, cam, pol);
    const double expect = 0.5 * s.materials[0].albedo_at(550.0);
    for (int r = 7; r <= 8; ++r)
        for (int c = 7; c <= 8; ++c)
            CHECK(std::abs(img.at(r, c) / 65535.0 - expect) <= 1.0 / 65535.0);
}

TEST_CASE("ground truth tracing is deterministic") {
    AnalyticScene s = default_sphere_scene();
    CameraModel cam;
    cam.intrinsics = bundle_intrinsics(16);
    cam.pose.translation = Vec3(0, 0, -3);
    const Image16 a = trace_ground_truth(s, cam, make_rgb_spec());
    const Image16 b = trace_ground_truth(s, cam, make_rgb_spec());
    CHECK(a.data == b.data);
}

TEST_CASE("bundle generation writes a loadable scene") {
    const auto manifest_path = tiny_bundle();
    const SceneManifest m = read_manifest(manifest_path);
    CHECK(m.views.size() == 12);
    CHECK(m.cameras.size() == 2);
    const SceneDataset ds = load_scene(manifest_path);
    CHECK(ds.view_count() == 12);
    CHECK(ds.split.test == std::vector<int>{9});
    CHECK(ds.split.train.size() == 11);
    CHECK(ds.frames.at("rgb").size() == 12);
    // synthetic scenes are authored in the normalized world already
    CHECK(ds.world_scale == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("central bundle rays intersect the unit ROI") {
    // corner rays may miss the unit sphere (they see pure background); the
    // object-facing center of every frame must be covered
    const SceneDataset ds = load_scene(tiny_bundle());
    for (const auto& [name, cams] : ds.cameras)
        for (const auto& cam : cams) {
            for (int r = 5; r <= 10; ++r)
                for (int c = 5; c <= 10; ++c) CHECK(pixel_to_ray(cam, c, r).hits_roi);
            int hits = 0;
            for (int r = 0; r < 16; ++r)
                for (int c = 0; c < 16; ++c) hits += pixel_to_ray(cam, c, r).hits_roi ? 1 : 0;
            CHECK(hits > 128);
        }
}

TEST_CASE("bundle passes validation with an empty report") {
    const auto manifest_path = tiny_bundle();
    const SceneManifest m = read_manifest(manifest_path);
    const auto report = validate(m, manifest_path.parent_path());
    CAPTURE(report);
    CHECK(report.empty());
}

TEST_CASE("frames round trip through load bit-exactly") {
    const auto manifest_path = tiny_bundle();
    const SceneDataset ds = load_scene(manifest_path);
    const SceneManifest m = read_manifest(manifest_path);
    // re-trace view 0 of rgb and compare to what load_scene normalized
    const AnalyticScene scene = scene_spec_from_json(
        nlohmann::json::parse(std::ifstream(manifest_path.parent_path() / "scene_spec.json")));
    const auto& cam_entry = m.cameras[0];
    const Pose world = compose_star_pose(m.views[0].reference_pose, cam_entry.stereo_extrinsic);
    const Image16 img = trace_ground_truth(
        scene, CameraModel{cam_entry.intrinsics, cam_entry.distortion, world},
        cam_entry.modality);
    const auto& loaded = ds.frames.at("rgb")[0];
    const double maxv = 4095.0;
    for (int i = 0; i < 16 * 16; ++i)
        CHECK(loaded[i] == Catch::Approx(img.data[i] / maxv).margin(1e-12));
}

TEST_CASE("validation flags a determinant -1 rotation") {
    SceneManifest m = read_manifest(tiny_bundle());
    m.views[0].reference_pose.rotation.col(0) *= -1.0;
    const auto report = validate(m, tiny_bundle().parent_path());
    bool found = false;
    for (const auto& line : report)
        if (line.find("PoseError") != std::string::npos) found = true;
    CHECK(found);
}

TEST_CASE("validation flags overlapping slices") {
    SceneManifest m = read_manifest(tiny_bundle());
    // claim identical slices for both modalities
    for (auto& cam : m.cameras) {
        cam.modality.slice_begin = 0;
        cam.modality.slice_end = cam.modality.required_slice_width();
    }
    const auto report = validate(m, tiny_bundle().parent_path());
    bool found = false;
    for (const auto& line : report)
        if (line.find("SliceOverlap") != std::string::npos) found = true;
    CHECK(found);
}

TEST_CASE("missing frame file surfaces in validation and loading") {
    SceneManifest m = read_manifest(tiny_bundle());
    m.views[1].frame_paths["rgb"] = "frames/rgb/does_not_exist.png";
    const auto report = validate(m, tiny_bundle().parent_path());
    bool found = false;
    for (const auto& line : report)
        if (line.find("MissingFrame") != std::string::npos) found = true;
    CHECK(found);
}

TEST_CASE("unbalanced budgets are deterministic subsets of the train split") {
    const SceneDataset ds = load_scene(tiny_bundle());
    const ViewBudget a = unbalanced_budget(ds, "rgb", 3, 5);
    const ViewBudget b = unbalanced_budget(ds, "rgb", 3, 5);
    CHECK(a.for_modality("rgb") == b.for_modality("rgb"));
    CHECK(a.for_modality("rgb").size() == 3);
    CHECK(a.for_modality("nir").size() == ds.split.train.size());
    for (int v : a.for_modality("rgb"))
        CHECK(std::find(ds.split.train.begin(), ds.split.train.end(), v) !=
              ds.split.train.end());
    const ViewBudget full = unbalanced_budget(ds, "rgb", int(ds.split.train.size()), 5);
    CHECK(full.for_modality("rgb") == ds.split.train);
    CHECK_THROWS_AS(unbalanced_budget(ds, "rgb", int(ds.split.train.size()) + 1, 5),
                    BudgetTooLarge);
}

TEST_CASE("default split uses views 9 19 29 39 49") {
    CHECK(default_test_views() == std::vector<int>{9, 19, 29, 39, 49});
}
