#include <catch2/catch_amalgamated.hpp>

#include "mmrf/renderer.hpp"
#include "mmrf/synth.hpp"

#include <cmath>

using namespace mmrf;

TEST_CASE("uniform ray sampling hits the interval midpoints") {
    Rng rng = make_rng(0);
    const RaySamples s = sample_ray(0.0, 1.0, 4, false, rng);
    const std::vector<double> expect = {0.125, 0.375, 0.625, 0.875};
    for (int i = 0; i < 4; ++i) CHECK(s.ts[i] == Catch::Approx(expect[i]).margin(1e-12));
}

TEST_CASE("stratified samples stay inside their intervals") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng = make_rng(seed);
        const RaySamples s = sample_ray(2.0, 4.0, 16, true, rng);
        for (int i = 0; i < 16; ++i) {
            CHECK(s.ts[i] >= s.intervals[i].first);
            CHECK(s.ts[i] <= s.intervals[i].second);
        }
    }
}

TEST_CASE("stratified samples average to the interval midpoint") {
    double acc = 0;
    const int n_seeds = 10000;
    for (std::uint64_t seed = 0; seed < n_seeds; ++seed) {
        Rng rng = make_rng(seed);
        acc += sample_ray(0.0, 1.0, 1, true, rng).ts[0];
    }
    CHECK(acc / n_seeds == Catch::Approx(0.5).margin(0.01));
}

TEST_CASE("sdf_to_alpha on the hand-evaluated logistic example") {
    // phi(1) = 0.731059, phi(-1) = 0.268941 -> alpha = 0.632121
    CHECK(sdf_to_alpha(0.1, -0.1, 10.0) == Catch::Approx(0.632121).margin(1e-6));
    CHECK(sdf_to_alpha(0.3, 0.3, 10.0) == 0.0);
    CHECK(sdf_to_alpha(-0.1, 0.1, 10.0) == 0.0);  // exiting: clamped
}

TEST_CASE("composite weights follow the transmittance product") {
    const CompositeResult one = composite({1.0}, {{0.7}}, {2.0});
    CHECK(one.weights[0] == 1.0);
    CHECK(one.value[0] == Catch::Approx(0.7));
    CHECK(one.w_fg == Catch::Approx(1.0));

    const CompositeResult two = composite({0.5, 0.5}, {{1.0}, {1.0}}, {1.0, 2.0});
    CHECK(two.weights[0] == Catch::Approx(0.5));
    CHECK(two.weights[1] == Catch::Approx(0.25));
    CHECK(two.w_fg == Catch::Approx(0.75));

    const CompositeResult none = composite({0.0, 0.0}, {{1.0}, {1.0}}, {1.0, 2.0});
    CHECK(none.w_fg == 0.0);
    CHECK(none.depth == 0.0);
}

TEST_CASE("w_fg equals one minus the transmittance product") {
    Rng rng = make_rng(13);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> alphas(8);
        std::vector<std::vector<double>> vals(8, {0.5});
        std::vector<double> ts(8);
        double t_prod = 1.0;
        for (int i = 0; i < 8; ++i) {
            alphas[i] = uniform(rng, 0.0, 1.0);
            ts[i] = i + 1.0;
            t_prod *= 1.0 - alphas[i];
        }
        const CompositeResult c = composite(alphas, vals, ts);
        CHECK(c.w_fg == Catch::Approx(1.0 - t_prod).margin(1e-12));
        double wsum = 0;
        for (double w : c.weights) {
            CHECK(w >= 0.0);
            wsum += w;
        }
        CHECK(wsum <= 1.0 + 1e-6);
    }
}

TEST_CASE("constant radiance field renders fg plus scaled background") {
    AnalyticFields f;
    f.sdf = [](const Vec3& p) { return p.norm() - 0.5; };
    f.radiance = [](const Vec3&, const Vec3&) { return std::vector<double>{0.7}; };
    f.background = [](const Vec3&) { return std::vector<double>{0.2}; };
    CameraModel cam;
    cam.intrinsics = {100, 100, 32, 32, 64, 64};
    cam.pose.translation = Vec3(0, 0, -3);
    const PixelRender center = render_pixel_fields(f, cam, 31, 31, 64);
    CHECK(center.value[0] ==
          Catch::Approx(0.7 * center.w_fg + 0.2 * (1.0 - center.w_fg)).margin(1e-9));
    CHECK(center.w_fg > 0.99);
    const PixelRender corner = render_pixel_fields(f, cam, 0, 0, 64);
    CHECK(corner.value[0] == Catch::Approx(0.7 * corner.w_fg + 0.2 * (1.0 - corner.w_fg))
                                 .margin(1e-9));
}

TEST_CASE("depth of an analytic sphere matches ray tracing within a sample interval") {
    AnalyticFields f;
    f.sdf = [](const Vec3& p) { return p.norm() - 0.5; };
    f.radiance = [](const Vec3&, const Vec3&) { return std::vector<double>{1.0}; };
    f.sharpness = 1e4;
    CameraModel cam;
    cam.intrinsics = {100, 100, 32, 32, 64, 64};
    cam.pose.translation = Vec3(0, 0, -3);
    const PixelRender center = render_pixel_fields(f, cam, 31, 31, 64);
    const Ray ray = pixel_to_ray(cam, 31, 31);
    const double span = (ray.far - ray.near) / 64.0;
    // analytic first hit of |o + t d| = 0.5
    const double b = ray.origin.dot(ray.direction);
    const double c = ray.origin.squaredNorm() - 0.25;
    const double t_hit = -b - std::sqrt(b * b - c);
    CHECK(std::abs(center.depth - t_hit) <= 2.0 * span);
}

TEST_CASE("stokes parameterization stays on the valid disc") {
    Rng rng = make_rng(17);
    for (int i = 0; i < 1000; ++i) {
        double s[3];
        stokes_from_slice_scalar(uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0),
                                 uniform(rng, 0.0, 1.0), s);
        CHECK(std::sqrt(s[1] * s[1] + s[2] * s[2]) <= s[0] + 1e-9);
    }
}

TEST_CASE("polarization pattern cell (1,1) uses filter angle 0") {
    const MosaickPattern p = default_pol_pattern();
    const ModalitySpec pol = make_pol_spec();
    CHECK(*pol.channels[channel_at(p, 1, 1)].filter_angle_deg == 0.0);
    CHECK(*pol.channels[channel_at(p, 0, 0)].filter_angle_deg == 90.0);
}

TEST_CASE("mosaicked render equals pattern-sampled full-channel render") {
    RenderModel model;
    model.init({make_rgb_spec()}, HashGridConfig{}, 23);
    CameraModel cam;
    cam.intrinsics = {25.0, 25.0, 8.0, 8.0, 16, 16};
    cam.pose.translation = Vec3(0, 0, -3);
    RenderOptions opt;
    opt.samples_per_ray = 16;
    opt.background_samples = 4;
    const FrameRender full = render_frame(model, cam, "rgb", RenderMode::FullChannel, opt);
    const FrameRender mosa = render_frame(model, cam, "rgb", RenderMode::Mosaicked, opt);
    const MosaickPattern pat = rggb_pattern();
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) {
            const int ch = channel_at(pat, r, c);
            const float a = full.image[(std::size_t(r) * 16 + c) * 3 + ch];
            const float b = mosa.image[std::size_t(r) * 16 + c];
            CHECK(std::abs(a - b) <= 1e-6f);
        }
}

TEST_CASE("full-channel rgb render has three channels everywhere") {
    RenderModel model;
    model.init({make_rgb_spec()}, HashGridConfig{}, 29);
    CameraModel cam;
    cam.intrinsics = {25.0, 25.0, 8.0, 8.0, 16, 16};
    cam.pose.translation = Vec3(0, 0, -3);
    RenderOptions opt;
    opt.samples_per_ray = 8;
    opt.background_samples = 4;
    const FrameRender fr = render_frame(model, cam, "rgb", RenderMode::FullChannel, opt);
    CHECK(fr.channels == 3);
    CHECK(fr.image.size() == std::size_t(16) * 16 * 3);
    for (float v : fr.image) CHECK(std::isfinite(v));
}

TEST_CASE("rays that miss the ROI composite only the background") {
    RenderModel model;
    model.init({make_mono_spec()}, HashGridConfig{}, 31);
    CameraModel cam;
    cam.intrinsics = {4.0, 4.0, 8.0, 8.0, 16, 16};  // very wide field of view
    cam.pose.translation = Vec3(0, 0, -3);
    const Ray corner = pixel_to_ray(cam, 0, 0);
    REQUIRE_FALSE(corner.hits_roi);
    std::vector<RenderRay> rays(1);
    rays[0].ray = corner;
    rays[0].modality = 0;
    ad::Tape tape;
    RenderOptions opt;
    opt.samples_per_ray = 8;
    opt.background_samples = 4;
    const RenderBatchResult rb = render_rays(tape, model, rays, opt);
    CHECK(tape.node(rb.w_fg).v[0] == 0.0f);
    CHECK(std::isfinite(tape.node(rb.composited).v[0]));
}

TEST_CASE("polarization render satisfies the paired-angle identity") {
    RenderModel model;
    model.init({make_pol_spec()}, HashGridConfig{}, 37);
    CameraModel cam;
    cam.intrinsics = {25.0, 25.0, 4.0, 4.0, 8, 8};
    cam.pose.translation = Vec3(0, 0, -3);
    RenderOptions opt;
    opt.samples_per_ray = 8;
    opt.background_samples = 4;
    const FrameRender fr = render_frame(model, cam, "pol", RenderMode::FullChannel, opt);
    REQUIRE(fr.channels == 3);
    // composited Stokes triple: I(0)+I(90) = I(45)+I(135) = S0 by linearity
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            const std::size_t px = (std::size_t(r) * 8 + c) * 3;
            const StokesVector s{fr.image[px], fr.image[px + 1], fr.image[px + 2]};
            const double i0 = stokes_to_intensity(s, 0, 0), i90 = stokes_to_intensity(s, 90, 0);
            const double i45 = stokes_to_intensity(s, 45, 0),
                         i135 = stokes_to_intensity(s, 135, 0);
            CHECK(i0 + i90 == Catch::Approx(s.s0).margin(1e-9));
            CHECK(i45 + i135 == Catch::Approx(s.s0).margin(1e-9));
        }
}
