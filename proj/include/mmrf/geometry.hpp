#pragma once

#include "mmrf/core.hpp"

#include <cmath>
#include <optional>

// Camera models and ray generation.
//
// Camera frame convention (used by every module): +z forward, +x right,
// +y down. Poses are camera-to-world. The region of interest is the unit
// sphere centered at the world origin; dataset loaders pre-normalize poses
// so the object fits inside it.

namespace mmrf {

struct NonConvergence : Error {
    explicit NonConvergence(const std::string& m) : Error(m) {}
};
struct InvalidCamera : Error {
    explicit InvalidCamera(const std::string& m) : Error(m) {}
};

struct Intrinsics {
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    int width = 0, height = 0;
    // skew fixed at zero

    void validate() const {
        if (!(fx > 0) || !(fy > 0))
            throw InvalidCamera("intrinsics: focal lengths must be positive");
        if (!(cx > 0 && cx < width) || !(cy > 0 && cy < height))
            throw InvalidCamera("intrinsics: principal point outside sensor");
    }
};

struct DistortionCoefficients {
    double k1 = 0, k2 = 0;  // radial
    double p1 = 0, p2 = 0;  // tangential

    // The forward radial map r -> r(1 + k1 r^2 + k2 r^4) must stay monotone
    // over the normalized-coordinate range of the sensor, otherwise the
    // model folds and undistortion is ill-posed.
    void validate(double max_radius = 1.0) const {
        if (!std::isfinite(k1) || !std::isfinite(k2) || !std::isfinite(p1) ||
            !std::isfinite(p2))
            throw InvalidCamera("distortion: non-finite coefficient");
        for (int i = 1; i <= 64; ++i) {
            const double r2 = std::pow(max_radius * i / 64.0, 2);
            const double slope = 1.0 + 3.0 * k1 * r2 + 5.0 * k2 * r2 * r2;
            if (slope <= 0)
                throw InvalidCamera("distortion: radial map not monotone over sweep");
        }
    }
};

struct Pose {
    Mat3 rotation = Mat3::Identity();  // camera-to-world
    Vec3 translation = Vec3::Zero();

    void validate(double tol = 1e-9) const {
        if ((rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > tol ||
            std::abs(rotation.determinant() - 1.0) > tol)
            throw InvalidCamera("pose: rotation not orthonormal with det +1");
    }

    Vec3 to_world_point(const Vec3& p_cam) const { return rotation * p_cam + translation; }
    Vec3 to_world_dir(const Vec3& d_cam) const { return rotation * d_cam; }
    Vec3 to_camera_point(const Vec3& p_world) const {
        return rotation.transpose() * (p_world - translation);
    }
};

struct Ray {
    Vec3 origin = Vec3::Zero();
    Vec3 direction = Vec3::UnitZ();
    double near = 0, far = 0;
    bool hits_roi = false;  // false: supervised only by the background field
};

// Forward Brown-Conrady map on normalized (pre-intrinsics) coordinates.
inline Vec2 distort(const DistortionCoefficients& k, const Vec2& p) {
    const double x = p.x(), y = p.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + k.k1 * r2 + k.k2 * r2 * r2;
    return {x * radial + 2.0 * k.p1 * x * y + k.p2 * (r2 + 2.0 * x * x),
            y * radial + 2.0 * k.p2 * x * y + k.p1 * (r2 + 2.0 * y * y)};
}

// Damped fixed-point inversion of `distort`. Converges for the mild
// distortions of desk-scale optics; strong coefficients or too few
// iterations surface as NonConvergence.
inline Vec2 undistort(const DistortionCoefficients& k, const Vec2& q,
                      double tol = 1e-6, int max_iters = 10, double damping = 1.0) {
    Vec2 u = q;
    for (int i = 0; i < max_iters; ++i) {
        const Vec2 r = distort(k, u) - q;
        if (std::abs(r.x()) <= tol && std::abs(r.y()) <= tol) return u;
        u -= damping * r;
    }
    const Vec2 r = distort(k, u) - q;
    if (std::abs(r.x()) <= tol && std::abs(r.y()) <= tol) return u;
    throw NonConvergence("undistort: residual " + std::to_string(r.norm()) +
                         " after " + std::to_string(max_iters) + " iterations");
}

struct CameraModel {
    Intrinsics intrinsics;
    DistortionCoefficients distortion;
    Pose pose;  // camera-to-world, already composed/normalized

    void validate() const {
        intrinsics.validate();
        distortion.validate();
        pose.validate();
    }

    // Project a world point through pose, distortion, intrinsics.
    Vec2 project(const Vec3& p_world) const {
        const Vec3 pc = pose.to_camera_point(p_world);
        const Vec2 n(pc.x() / pc.z(), pc.y() / pc.z());
        const Vec2 d = distort(distortion, n);
        return {intrinsics.fx * d.x() + intrinsics.cx,
                intrinsics.fy * d.y() + intrinsics.cy};
    }
};

// Intersection of a ray with the unit ROI sphere, clamped to t >= 0.
inline std::optional<std::pair<double, double>> intersect_unit_sphere(
    const Vec3& o, const Vec3& d) {
    const double b = o.dot(d);
    const double c = o.dot(o) - 1.0;
    const double disc = b * b - c;
    if (disc < 0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t0 = -b - sq, t1 = -b + sq;
    if (t1 < 0) return std::nullopt;
    return std::make_pair(std::max(t0, 0.0), t1);
}

// World ray through pixel+jitter. jitter in [0,1)^2; (0.5,0.5) is the
// pixel center. Pixel coordinates are the distorted, mosaicked sensor
// coordinates; undistortion happens here, never on the frame.
inline Ray pixel_to_ray(const CameraModel& cam, double col, double row,
                        const Vec2& jitter = {0.5, 0.5},
                        double tol = 1e-6, int max_iters = 10) {
    const double u = col + jitter.x();
    const double v = row + jitter.y();
    const Vec2 nd((u - cam.intrinsics.cx) / cam.intrinsics.fx,
                  (v - cam.intrinsics.cy) / cam.intrinsics.fy);
    const Vec2 n = undistort(cam.distortion, nd, tol, max_iters);
    Ray ray;
    ray.origin = cam.pose.translation;
    ray.direction = cam.pose.to_world_dir(Vec3(n.x(), n.y(), 1.0).normalized());
    if (auto hit = intersect_unit_sphere(ray.origin, ray.direction)) {
        ray.near = hit->first;
        ray.far = hit->second;
        ray.hits_roi = ray.far > ray.near;
    }
    return ray;
}

// World pose of a secondary sensor in the star topology:
// reference_pose composed with the secondary->reference stereo extrinsic.
inline Pose compose_star_pose(const Pose& reference_pose, const Pose& stereo_extrinsic) {
    Pose out;
    out.rotation = reference_pose.rotation * stereo_extrinsic.rotation;
    out.translation = reference_pose.rotation * stereo_extrinsic.translation +
                      reference_pose.translation;
    return out;
}

}  // namespace mmrf
