#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace mmrf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Base class for every engine error; subcommands map these to exit code 1/2.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

// splitmix64, used to derive stream seeds from a master seed so that
// independent random consumers (batch sampler, stratified jitter, init)
// never share a stream.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
    return Rng(mix_seed(seed, stream));
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
    // Fixed mapping instead of std::uniform_real_distribution so the value
    // sequence is stable across standard library versions.
    const double u = double(rng() >> 11) * 0x1.0p-53;
    return lo + u * (hi - lo);
}

inline int uniform_int(Rng& rng, int lo, int hi_inclusive) {
    const std::uint64_t span = std::uint64_t(hi_inclusive - lo) + 1;
    return lo + int(rng() % span);
}

}  // namespace mmrf
