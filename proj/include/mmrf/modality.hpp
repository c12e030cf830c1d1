#pragma once

#include "mmrf/core.hpp"
#include "mmrf/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

// Sensor channel semantics: mosaick patterns, the shared-output slice
// registry, and the Stokes-vector math for polarization sensors.

namespace mmrf {

struct ZeroIntensity : Error {
    explicit ZeroIntensity(const std::string& m) : Error(m) {}
};
struct DegenerateReference : Error {
    explicit DegenerateReference(const std::string& m) : Error(m) {}
};
struct RegistryError : Error {
    explicit RegistryError(const std::string& m) : Error(m) {}
};

struct MosaickPattern {
    int tile_rows = 1, tile_cols = 1;
    std::vector<std::vector<int>> cell_channel;  // tile_rows x tile_cols

    void validate(int channel_count) const {
        if (int(cell_channel.size()) != tile_rows)
            throw RegistryError("mosaick pattern: row count mismatch");
        for (const auto& r : cell_channel) {
            if (int(r.size()) != tile_cols)
                throw RegistryError("mosaick pattern: column count mismatch");
            for (int c : r)
                if (c < 0 || c >= channel_count)
                    throw RegistryError("mosaick pattern: channel index out of range");
        }
    }
};

// Frame dimensions need not be multiples of the tile; indexing wraps.
inline int channel_at(const MosaickPattern& p, int row, int col) {
    return p.cell_channel[row % p.tile_rows][col % p.tile_cols];
}

enum class ModalityKind { Radiance, Polarization };

struct ChannelDesc {
    std::string name;
    std::optional<double> wavelength_nm;
    std::optional<double> filter_angle_deg;
};

struct ModalitySpec {
    std::string name;
    ModalityKind kind = ModalityKind::Radiance;
    std::vector<ChannelDesc> channels;
    std::optional<MosaickPattern> pattern;  // nullopt: pre-demosaicked
    int bit_depth = 12;                     // 12 or 16
    int slice_begin = 0, slice_end = 0;     // [begin,end) into the shared output

    int channel_count() const { return int(channels.size()); }
    int slice_width() const { return slice_end - slice_begin; }
    double normalization() const { return double((1u << bit_depth) - 1u); }

    void validate() const {
        if (bit_depth != 12 && bit_depth != 16)
            throw RegistryError(name + ": bit depth must be 12 or 16");
        if (channels.empty()) throw RegistryError(name + ": no channels");
        if (pattern) pattern->validate(channel_count());
        if (kind == ModalityKind::Polarization) {
            if (channel_count() != 4)
                throw RegistryError(name + ": polarization needs 4 filter channels");
            std::vector<double> want = {0, 45, 90, 135};
            std::vector<double> got;
            for (const auto& c : channels) {
                if (!c.filter_angle_deg)
                    throw RegistryError(name + ": polarization channel missing filter angle");
                got.push_back(*c.filter_angle_deg);
            }
            std::sort(got.begin(), got.end());
            for (size_t i = 0; i < 4; ++i)
                if (std::abs(got[i] - want[i]) > 1e-9)
                    throw RegistryError(name + ": filter angles must be {0,45,90,135}");
            if (slice_end > slice_begin && slice_width() != 3)
                throw RegistryError(name + ": polarization slice must have width 3");
        } else if (slice_end > slice_begin && slice_width() != channel_count()) {
            throw RegistryError(name + ": slice width must equal channel count");
        }
    }

    // Width of this modality's slice of the shared radiance output:
    // polarization renders Stokes (S0,S1,S2), everything else one output
    // per channel.
    int required_slice_width() const {
        return kind == ModalityKind::Polarization ? 3 : channel_count();
    }
};

// Assigns disjoint contiguous slices in registration order and checks the
// partition. Returns the total shared output width.
inline int assign_slices(std::vector<ModalitySpec>& modalities) {
    int cursor = 0;
    for (auto& m : modalities) {
        m.slice_begin = cursor;
        m.slice_end = cursor + m.required_slice_width();
        cursor = m.slice_end;
        m.validate();
    }
    return cursor;
}

// Verifies an externally supplied slice assignment forms a partition of
// [0, C_total).
inline int check_slice_partition(const std::vector<ModalitySpec>& modalities) {
    int total = 0;
    for (const auto& m : modalities) total += m.slice_width();
    std::vector<int> owner(total, -1);
    for (size_t i = 0; i < modalities.size(); ++i) {
        const auto& m = modalities[i];
        if (m.slice_begin < 0 || m.slice_end > total || m.slice_begin >= m.slice_end)
            throw RegistryError(m.name + ": slice out of range");
        for (int c = m.slice_begin; c < m.slice_end; ++c) {
            if (owner[c] != -1)
                throw RegistryError("slice overlap between " + modalities[owner[c]].name +
                                    " and " + m.name);
            owner[c] = int(i);
        }
    }
    return total;
}

struct StokesVector {
    double s0 = 0, s1 = 0, s2 = 0;  // linear polarization only; S3 not modeled
};

// Linear-polarizer intensity for filter angle theta rotated by the camera
// roll: I = (S0 + S1 cos 2theta' + S2 sin 2theta') / 2.
inline double stokes_to_intensity(const StokesVector& s, double filter_angle_deg,
                                  double camera_roll_deg) {
    const double t = 2.0 * deg_to_rad(filter_angle_deg + camera_roll_deg);
    return 0.5 * (s.s0 + s.s1 * std::cos(t) + s.s2 * std::sin(t));
}

inline StokesVector intensities_to_stokes(double i0, double i45, double i90, double i135) {
    return {0.5 * (i0 + i45 + i90 + i135), i0 - i90, i45 - i135};
}

struct DolpAolp {
    double dolp = 0;      // [0,1]
    double aolp_deg = 0;  // [0,180)
};

inline DolpAolp dolp_aolp(const StokesVector& s) {
    if (!(s.s0 > 0)) throw ZeroIntensity("dolp_aolp: S0 must be positive");
    DolpAolp out;
    out.dolp = std::sqrt(s.s1 * s.s1 + s.s2 * s.s2) / s.s0;
    if (out.dolp == 0) return out;  // angle undefined; convention 0
    double a = 0.5 * rad_to_deg(std::atan2(s.s2, s.s1));
    if (a < 0) a += 180.0;
    if (a >= 180.0) a -= 180.0;
    out.aolp_deg = a;
    return out;
}

// Signed angle (degrees) between the camera's image-plane horizontal axis
// and the projection of the world polarization reference axis onto the
// plane orthogonal to the viewing ray. This is what rotates the on-sensor
// polarizer filters relative to the fixed world reference frame.
inline double camera_roll_about_ray(const Pose& pose, const Vec3& direction,
                                    const Vec3& world_reference_axis = Vec3::UnitX()) {
    const Vec3 d = direction.normalized();
    if (std::abs(d.dot(world_reference_axis.normalized())) > 1.0 - 1e-9)
        throw DegenerateReference("camera_roll_about_ray: ray parallel to reference axis");
    const Vec3 ref = (world_reference_axis - d * d.dot(world_reference_axis)).normalized();
    const Vec3 cam_x = pose.rotation.col(0);
    const Vec3 cx = (cam_x - d * d.dot(cam_x)).normalized();
    return rad_to_deg(std::atan2(d.dot(ref.cross(cx)), ref.dot(cx)));
}

// Same, but falls back to the world +y reference when the ray is parallel
// to +x (the degenerate case callers must survive).
inline double camera_roll_about_ray_safe(const Pose& pose, const Vec3& direction) {
    try {
        return camera_roll_about_ray(pose, direction, Vec3::UnitX());
    } catch (const DegenerateReference&) {
        return camera_roll_about_ray(pose, direction, Vec3::UnitY());
    }
}

// --- default sensor set -----------------------------------------------------

inline MosaickPattern rggb_pattern() {
    return {2, 2, {{0, 1}, {1, 2}}};  // R G / G B
}

// [[90,45],[135,0]] in filter-angle terms; indices into the channel list
// ordered (0,45,90,135).
inline MosaickPattern default_pol_pattern() {
    return {2, 2, {{2, 1}, {3, 0}}};
}

inline MosaickPattern default_ms_pattern(int ninth_cell_channel = 7) {
    MosaickPattern p{3, 3, {{0, 1, 2}, {3, 4, 5}, {6, 7, ninth_cell_channel}}};
    return p;
}

inline const std::vector<double>& default_ms_wavelengths() {
    static const std::vector<double> wl = {692, 653, 611, 572, 541, 503, 464, 431};
    return wl;
}

inline ModalitySpec make_rgb_spec() {
    ModalitySpec m;
    m.name = "rgb";
    m.channels = {{"r", 610.0, {}}, {"g", 550.0, {}}, {"b", 465.0, {}}};
    m.pattern = rggb_pattern();
    m.bit_depth = 12;
    return m;
}

inline ModalitySpec make_mono_spec() {
    ModalitySpec m;
    m.name = "mono";
    m.channels = {{"l", 550.0, {}}};
    m.bit_depth = 12;
    return m;
}

inline ModalitySpec make_nir_spec() {
    ModalitySpec m;
    m.name = "nir";
    m.channels = {{"nir", 850.0, {}}};
    m.bit_depth = 12;
    return m;
}

inline ModalitySpec make_pol_spec() {
    ModalitySpec m;
    m.name = "pol";
    m.kind = ModalityKind::Polarization;
    m.channels = {{"p0", {}, 0.0}, {"p45", {}, 45.0}, {"p90", {}, 90.0}, {"p135", {}, 135.0}};
    m.pattern = default_pol_pattern();
    m.bit_depth = 16;
    return m;
}

inline ModalitySpec make_ms_spec() {
    ModalitySpec m;
    m.name = "ms";
    for (size_t i = 0; i < default_ms_wavelengths().size(); ++i)
        m.channels.push_back({"band" + std::to_string(i), default_ms_wavelengths()[i], {}});
    m.pattern = default_ms_pattern();
    m.bit_depth = 12;
    return m;
}

inline ModalitySpec make_default_spec(const std::string& name) {
    if (name == "rgb") return make_rgb_spec();
    if (name == "mono") return make_mono_spec();
    if (name == "nir") return make_nir_spec();
    if (name == "pol") return make_pol_spec();
    if (name == "ms") return make_ms_spec();
    throw RegistryError("unknown modality: " + name);
}

}  // namespace mmrf
