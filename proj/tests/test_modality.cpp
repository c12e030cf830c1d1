#include <catch2/catch_amalgamated.hpp>

#include "mmrf/modality.hpp"

#include <cmath>
#include <map>

using namespace mmrf;

TEST_CASE("RGGB pattern lookup") {
    const MosaickPattern p = rggb_pattern();
    CHECK(channel_at(p, 0, 0) == 0);  // R
    CHECK(channel_at(p, 0, 1) == 1);  // G
    CHECK(channel_at(p, 1, 0) == 1);  // G
    CHECK(channel_at(p, 1, 1) == 2);  // B
}

TEST_CASE("pattern lookup wraps by modulo") {
    const MosaickPattern p = default_ms_pattern();
    CHECK(channel_at(p, 4, 7) == p.cell_channel[1][1]);
}

TEST_CASE("channel_at tiles a frame evenly") {
    const MosaickPattern p = default_ms_pattern();
    std::map<std::pair<int, int>, int> cell_hits;
    for (int r = 0; r < 30; ++r)
        for (int c = 0; c < 30; ++c) cell_hits[{r % 3, c % 3}] += 1;
    for (const auto& [cell, n] : cell_hits) CHECK(n == 100);
}

TEST_CASE("unpolarized light reads half intensity at any filter angle") {
    for (double a : {0.0, 30.0, 45.0, 90.0, 133.0})
        CHECK(stokes_to_intensity({1, 0, 0}, a, 0.0) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("fully polarized light hits the Malus extremes") {
    CHECK(stokes_to_intensity({1, 1, 0}, 0.0, 0.0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(stokes_to_intensity({1, 1, 0}, 90.0, 0.0) == Catch::Approx(0.0).margin(1e-12));
    CHECK(stokes_to_intensity({1, 1, 0}, 0.0, 45.0) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("intensities to stokes on the spec examples") {
    const StokesVector a = intensities_to_stokes(0.5, 0.5, 0.5, 0.5);
    CHECK(a.s0 == Catch::Approx(1.0).margin(1e-15));
    CHECK(a.s1 == Catch::Approx(0.0).margin(1e-15));
    CHECK(a.s2 == Catch::Approx(0.0).margin(1e-15));
    const StokesVector b = intensities_to_stokes(1.0, 0.5, 0.0, 0.5);
    CHECK(b.s0 == Catch::Approx(1.0).margin(1e-15));
    CHECK(b.s1 == Catch::Approx(1.0).margin(1e-15));
    CHECK(b.s2 == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("stokes round trip through the four filter angles is exact") {
    Rng rng = make_rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double s0 = uniform(rng, 0.05, 1.0);
        const double dolp = uniform(rng, 0.0, 1.0);
        const double ang = uniform(rng, 0.0, kPi);
        const StokesVector s{s0, s0 * dolp * std::cos(2 * ang), s0 * dolp * std::sin(2 * ang)};
        const StokesVector back = intensities_to_stokes(
            stokes_to_intensity(s, 0, 0), stokes_to_intensity(s, 45, 0),
            stokes_to_intensity(s, 90, 0), stokes_to_intensity(s, 135, 0));
        CHECK(std::abs(back.s0 - s.s0) <= 1e-12);
        CHECK(std::abs(back.s1 - s.s1) <= 1e-12);
        CHECK(std::abs(back.s2 - s.s2) <= 1e-12);
    }
}

TEST_CASE("roll compensation invariance of the intensity formula") {
    Rng rng = make_rng(9);
    for (int i = 0; i < 10000; ++i) {
        const StokesVector s{uniform(rng, 0.1, 1.0), uniform(rng, -0.5, 0.5),
                             uniform(rng, -0.5, 0.5)};
        const double filter = uniform(rng, 0.0, 180.0);
        const double roll = uniform(rng, -180.0, 180.0);
        const double phi = uniform(rng, -90.0, 90.0);
        const double a = stokes_to_intensity(s, filter, roll);
        const double b = stokes_to_intensity(s, filter + phi, roll - phi);
        CHECK(std::abs(a - b) <= 1e-12);
    }
}

TEST_CASE("paired filter angles both recover s0") {
    const StokesVector s{0.8, 0.3, -0.2};
    const double roll = 17.0;
    const double a = stokes_to_intensity(s, 0, roll) + stokes_to_intensity(s, 90, roll);
    const double b = stokes_to_intensity(s, 45, roll) + stokes_to_intensity(s, 135, roll);
    CHECK(a == Catch::Approx(s.s0).margin(1e-15));
    CHECK(b == Catch::Approx(s.s0).margin(1e-15));
}

TEST_CASE("dolp and aolp on canonical Stokes vectors") {
    auto a = dolp_aolp({1, 1, 0});
    CHECK(a.dolp == Catch::Approx(1.0).margin(1e-12));
    CHECK(a.aolp_deg == Catch::Approx(0.0).margin(1e-12));
    auto b = dolp_aolp({1, 0, 1});
    CHECK(b.dolp == Catch::Approx(1.0).margin(1e-12));
    CHECK(b.aolp_deg == Catch::Approx(45.0).margin(1e-12));
    auto c = dolp_aolp({2, 0, 0});
    CHECK(c.dolp == 0.0);
    CHECK(c.aolp_deg == 0.0);
    CHECK_THROWS_AS(dolp_aolp({0, 0, 0}), ZeroIntensity);
}

TEST_CASE("camera roll about the ray") {
    Pose identity;
    CHECK(camera_roll_about_ray(identity, Vec3::UnitZ()) == Catch::Approx(0.0).margin(1e-12));

    Pose rolled;
    rolled.rotation = Eigen::AngleAxisd(deg_to_rad(30.0), Vec3::UnitZ()).toRotationMatrix();
    const double a = camera_roll_about_ray(rolled, Vec3::UnitZ());
    CHECK(std::abs(std::abs(a) - 30.0) <= 1e-9);

    CHECK_THROWS_AS(camera_roll_about_ray(identity, Vec3::UnitX()), DegenerateReference);
    // the safe variant falls back to the +y reference axis
    CHECK(std::isfinite(camera_roll_about_ray_safe(identity, Vec3::UnitX())));
}

TEST_CASE("slice assignment partitions the shared output") {
    std::vector<ModalitySpec> mods = {make_rgb_spec(), make_mono_spec(), make_nir_spec(),
                                      make_pol_spec(), make_ms_spec()};
    const int c_total = assign_slices(mods);
    CHECK(c_total == 16);  // 3 + 1 + 1 + 3 (Stokes) + 8
    CHECK(check_slice_partition(mods) == c_total);
    CHECK(mods[3].slice_width() == 3);
    CHECK(mods[4].slice_begin == 8);
    CHECK(mods[4].slice_end == 16);
}

TEST_CASE("polarization spec validation enforces the four filter angles") {
    ModalitySpec bad = make_pol_spec();
    bad.channels.pop_back();
    CHECK_THROWS_AS(bad.validate(), RegistryError);
}

TEST_CASE("default multispectral wavelengths match the sensor bands") {
    const ModalitySpec ms = make_ms_spec();
    const std::vector<double> expect = {692, 653, 611, 572, 541, 503, 464, 431};
    REQUIRE(ms.channels.size() == 8);
    for (int i = 0; i < 8; ++i)
        CHECK(*ms.channels[i].wavelength_nm == Catch::Approx(expect[i]));
}

TEST_CASE("bit depth normalization constants") {
    CHECK(make_rgb_spec().bit_depth == 12);
    CHECK(make_pol_spec().bit_depth == 16);
    CHECK((1 << make_rgb_spec().bit_depth) - 1 == 4095);
}
