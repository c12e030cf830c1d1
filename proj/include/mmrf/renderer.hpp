#pragma once

#include "mmrf/autodiff.hpp"
#include "mmrf/core.hpp"
#include "mmrf/field.hpp"
#include "mmrf/geometry.hpp"
#include "mmrf/modality.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

// Ray sampling, SDF-to-opacity conversion, compositing of the shared
// radiance vector, and frame rendering. The scalar functions at the top are
// the reference semantics; the batched tape path below reproduces them for
// training.

namespace mmrf {

// --- scalar reference ops ---------------------------------------------------

struct RaySamples {
    std::vector<double> ts;                         // sample positions (midpoints)
    std::vector<std::pair<double, double>> intervals;  // (t_i, t_{i+1})
};

// n intervals partitioning [near, far] uniformly; stratified mode jitters
// one sample per interval.
inline RaySamples sample_ray(double near, double far, int n, bool stratified, Rng& rng) {
    RaySamples out;
    out.ts.reserve(n);
    out.intervals.reserve(n);
    const double step = (far - near) / n;
    for (int i = 0; i < n; ++i) {
        const double lo = near + i * step, hi = lo + step;
        out.intervals.emplace_back(lo, hi);
        const double u = stratified ? uniform(rng) : 0.5;
        out.ts.push_back(lo + u * step);
    }
    return out;
}

inline double logistic_cdf(double x, double s) {
    const double z = s * x;
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// NeuS-style opacity from consecutive SDF samples:
// alpha = max((Phi_s(f_i) - Phi_s(f_next)) / Phi_s(f_i), 0).
inline double sdf_to_alpha(double sdf_i, double sdf_next, double s) {
    const double pi = logistic_cdf(sdf_i, s);
    if (pi < 1e-290) {
        // deep inside the surface the CDF underflows; use the asymptotic
        // ratio Phi(f_next)/Phi(f_i) -> exp(s (f_next - f_i))
        return std::max(1.0 - std::exp(std::min(0.0, s * (sdf_next - sdf_i))), 0.0);
    }
    const double pn = logistic_cdf(sdf_next, s);
    return std::max((pi - pn) / pi, 0.0);
}

struct CompositeResult {
    std::vector<double> value;    // composited foreground, C wide
    std::vector<double> weights;  // per-sample w_i
    double w_fg = 0;              // sum of weights = 1 - remaining transmittance
    double depth = 0;             // expected termination distance
};

inline CompositeResult composite(const std::vector<double>& alphas,
                                 const std::vector<std::vector<double>>& values,
                                 const std::vector<double>& ts, double eps = 1e-10) {
    const int n = int(alphas.size());
    const int c = values.empty() ? 0 : int(values[0].size());
    CompositeResult out;
    out.value.assign(c, 0.0);
    out.weights.assign(n, 0.0);
    double T = 1.0;
    for (int i = 0; i < n; ++i) {
        const double w = alphas[i] * T;
        out.weights[i] = w;
        for (int k = 0; k < c; ++k) out.value[k] += w * values[i][k];
        out.w_fg += w;
        out.depth += w * ts[i];
        T *= 1.0 - alphas[i];
    }
    out.depth /= std::max(out.w_fg, eps);
    if (out.w_fg < 1e-3) out.depth = 0.0;  // excluded from depth metrics
    return out;
}

// Renders one pixel through arbitrary field callables (used both by tests
// with analytic fields and as the reference path for the tape renderer).
struct AnalyticFields {
    std::function<double(const Vec3&)> sdf;
    // value at a point for a given view direction; C_total wide
    std::function<std::vector<double>(const Vec3&, const Vec3&)> radiance;
    std::function<std::vector<double>(const Vec3&)> background;  // per direction
    double sharpness = 1e4;
};

struct PixelRender {
    std::vector<double> value;  // C_total
    double w_fg = 0, depth = 0;
    bool hits_roi = false;
};

inline PixelRender render_pixel_fields(const AnalyticFields& f, const CameraModel& cam,
                                       int row, int col, int n_samples,
                                       const Vec2& jitter = {0.5, 0.5}) {
    const Ray ray = pixel_to_ray(cam, col, row, jitter);
    PixelRender out;
    out.hits_roi = ray.hits_roi;
    std::vector<double> bg = f.background ? f.background(ray.direction)
                                          : std::vector<double>();
    if (!ray.hits_roi) {
        out.value = bg;
        return out;
    }
    Rng rng = make_rng(0);
    const RaySamples s = sample_ray(ray.near, ray.far, n_samples, false, rng);
    std::vector<double> sdf(n_samples);
    std::vector<std::vector<double>> vals(n_samples);
    for (int i = 0; i < n_samples; ++i) {
        const Vec3 p = ray.origin + s.ts[i] * ray.direction;
        sdf[i] = f.sdf(p);
        vals[i] = f.radiance(p, ray.direction);
    }
    std::vector<double> alphas(n_samples, 0.0);
    for (int i = 0; i + 1 < n_samples; ++i)
        alphas[i] = sdf_to_alpha(sdf[i], sdf[i + 1], f.sharpness);
    CompositeResult c = composite(alphas, vals, s.ts);
    out.value = c.value;
    if (!bg.empty())
        for (std::size_t k = 0; k < out.value.size(); ++k)
            out.value[k] += (1.0 - c.w_fg) * bg[k];
    out.w_fg = c.w_fg;
    out.depth = c.depth;
    return out;
}

// --- Stokes parameterization ------------------------------------------------

// Maps the sigmoid-bounded slice (u0,u1,u2) in (0,1)^3 to a valid Stokes
// triple: s0=u0, s1=s0(2u1-1), s2=s0(2u2-1), with (s1,s2) radially rescaled
// onto the DoLP<=1 disc when they exceed it.
inline void stokes_from_slice_scalar(double u0, double u1, double u2, double out[3]) {
    const double a = 2.0 * u1 - 1.0, b = 2.0 * u2 - 1.0;
    const double m = std::sqrt(a * a + b * b);
    const double f = m > 1.0 ? 1.0 / m : 1.0;
    out[0] = u0;
    out[1] = u0 * a * f;
    out[2] = u0 * b * f;
}

// Tape version; N x 3 -> N x 3 with analytic backward on both branches.
inline ad::Var stokes_from_slice(ad::Tape& tape, ad::Var u) {
    const ad::Node& un = tape.node(u);
    if (un.cols != 3) throw ad::ShapeMismatch("stokes_from_slice: N x 3 expected");
    const int n = un.rows;
    ad::Var y = tape.alloc(n, 3);
    auto& yv = tape.node(y).v;
    for (int r = 0; r < n; ++r) {
        double s[3];
        stokes_from_slice_scalar(un.v[r * 3], un.v[r * 3 + 1], un.v[r * 3 + 2], s);
        for (int k = 0; k < 3; ++k) yv[r * 3 + k] = float(s[k]);
    }
    tape.record([u, y, n](ad::Tape& t) {
        const auto& g = t.grad(y);
        const auto& uv = t.node(u).v;
        auto& gu = t.grad(u);
        for (int r = 0; r < n; ++r) {
            const double u0 = uv[r * 3], a = 2.0 * uv[r * 3 + 1] - 1.0,
                         b = 2.0 * uv[r * 3 + 2] - 1.0;
            const double g0 = g[r * 3], g1 = g[r * 3 + 1], g2 = g[r * 3 + 2];
            const double m2 = a * a + b * b, m = std::sqrt(m2);
            double d0, da, db;
            if (m <= 1.0) {
                d0 = g0 + g1 * a + g2 * b;
                da = g1 * u0;
                db = g2 * u0;
            } else {
                const double m3 = m2 * m;
                d0 = g0 + (g1 * a + g2 * b) / m;
                da = u0 * (g1 * b * b - g2 * a * b) / m3;
                db = u0 * (g2 * a * a - g1 * a * b) / m3;
            }
            gu[r * 3] += float(d0);
            gu[r * 3 + 1] += float(2.0 * da);
            gu[r * 3 + 2] += float(2.0 * db);
        }
    });
    return y;
}

// --- batched tape renderer --------------------------------------------------

struct RenderModel {
    SdfField sdf;
    RadianceField radiance;
    BackgroundField background;
    std::vector<ModalitySpec> modalities;  // slice-assigned
    int c_total = 0;

    void init(std::vector<ModalitySpec> mods, const HashGridConfig& grid_cfg,
              std::uint64_t seed) {
        modalities = std::move(mods);
        c_total = assign_slices(modalities);
        sdf.grid_config = grid_cfg;
        radiance.grid_config = grid_cfg;
        Rng r1 = make_rng(seed, 1), r2 = make_rng(seed, 2), r3 = make_rng(seed, 3);
        sdf.init(r1);
        radiance.init(c_total, r2);
        background.init(c_total, r3);
    }

    const ModalitySpec& modality(const std::string& name) const {
        for (const auto& m : modalities)
            if (m.name == name) return m;
        throw RegistryError("unregistered modality: " + name);
    }

    std::vector<ad::Parameter*> all_parameters() {
        std::vector<ad::Parameter*> out;
        for (auto* p : sdf.grid_parameters()) out.push_back(p);
        for (auto* p : sdf.mlp_parameters()) out.push_back(p);
        out.push_back(&sdf.log_sharpness);
        for (auto* p : radiance.grid_parameters()) out.push_back(p);
        for (auto* p : radiance.mlp_parameters()) out.push_back(p);
        for (auto* p : background.parameters()) out.push_back(p);
        return out;
    }
};

struct RenderRay {
    Ray ray;
    int modality = 0;  // index into RenderModel::modalities
    int row = 0, col = 0;
    double roll_deg = 0;  // camera roll about the ray, for polarization
};

struct RenderOptions {
    int samples_per_ray = 64;
    bool stratified = false;
    std::uint64_t seed = 0;
    int background_samples = 16;
    float normal_step = 0.01f;
    bool importance_second_round = false;
};

struct RenderBatchResult {
    ad::Var composited;  // R x C_total (foreground + scaled background)
    ad::Var w_fg;        // R x 1
    std::vector<float> depth;       // R, plain values
    std::vector<float> normal;      // R x 3, weight-averaged, plain values
    std::vector<int> fg_offsets;    // R+1 sample segments
};

namespace detail {

struct SampleSet {
    std::vector<float> positions;  // N x 3
    std::vector<float> ts;         // N
    std::vector<int> offsets;      // R+1
};

inline SampleSet build_fg_samples(const std::vector<RenderRay>& rays,
                                  const RenderOptions& opt) {
    SampleSet s;
    s.offsets.push_back(0);
    Rng rng = make_rng(opt.seed, 11);
    for (const auto& rr : rays) {
        if (rr.ray.hits_roi) {
            const RaySamples rs =
                sample_ray(rr.ray.near, rr.ray.far, opt.samples_per_ray, opt.stratified, rng);
            for (double t : rs.ts) {
                const Vec3 p = rr.ray.origin + t * rr.ray.direction;
                s.positions.push_back(float(p.x()));
                s.positions.push_back(float(p.y()));
                s.positions.push_back(float(p.z()));
                s.ts.push_back(float(t));
            }
        }
        s.offsets.push_back(int(s.ts.size()));
    }
    return s;
}

// Second sampling round: probe the SDF with a throwaway tape, then merge
// importance-resampled ts with the uniform ones.
inline void importance_resample(RenderModel& model, const std::vector<RenderRay>& rays,
                                const RenderOptions& opt, SampleSet& s) {
    ad::Tape probe;
    if (s.ts.empty()) return;
    ad::Var sdf = model.sdf.query(probe, s.positions).sdf;
    const float sv = std::exp(model.sdf.log_sharpness.value[0]);
    Rng rng = make_rng(opt.seed, 13);
    SampleSet merged;
    merged.offsets.push_back(0);
    for (std::size_t r = 0; r < rays.size(); ++r) {
        const int b = s.offsets[r], e = s.offsets[r + 1];
        std::vector<float> ts(s.ts.begin() + b, s.ts.begin() + e);
        if (e - b >= 2) {
            std::vector<double> w(e - b, 0.0);
            double T = 1.0, total = 0.0;
            for (int i = b; i + 1 < e; ++i) {
                const double a = sdf_to_alpha(probe.node(sdf).v[i], probe.node(sdf).v[i + 1], sv);
                w[i - b] = a * T + 1e-5;
                T *= 1.0 - a;
                total += w[i - b];
            }
            for (int k = 0; k < opt.samples_per_ray; ++k) {
                double u = uniform(rng) * total, acc = 0;
                int pick = 0;
                for (int i = 0; i < e - b; ++i) {
                    acc += w[i];
                    if (u <= acc) { pick = i; break; }
                }
                const double lo = s.ts[b + pick];
                const double hi = (b + pick + 1 < e) ? s.ts[b + pick + 1] : rays[r].ray.far;
                ts.push_back(float(lo + uniform(rng) * (hi - lo)));
            }
            std::sort(ts.begin(), ts.end());
        }
        for (float t : ts) {
            const Vec3 p = rays[r].ray.origin + double(t) * rays[r].ray.direction;
            merged.positions.push_back(float(p.x()));
            merged.positions.push_back(float(p.y()));
            merged.positions.push_back(float(p.z()));
            merged.ts.push_back(t);
        }
        merged.offsets.push_back(int(merged.ts.size()));
    }
    s = std::move(merged);
}

}  // namespace detail

// Applies the bounded Stokes parameterization to every polarization slice of
// a shared per-sample output, leaving radiance slices untouched.
inline ad::Var transform_pol_slices(ad::Tape& tape, ad::Var shared,
                                    const std::vector<ModalitySpec>& modalities) {
    bool any = false;
    for (const auto& m : modalities)
        if (m.kind == ModalityKind::Polarization) any = true;
    if (!any) return shared;
    std::vector<ad::Var> parts;
    for (const auto& m : modalities) {
        ad::Var s = tape.slice_cols(shared, m.slice_begin, m.slice_end);
        parts.push_back(m.kind == ModalityKind::Polarization ? stokes_from_slice(tape, s) : s);
    }
    return tape.concat_cols(parts);
}

// Renders a batch of rays through the networks on the given tape. The
// composited output mixes foreground and background:
// value = fg + (1 - W_fg) * bg.
inline RenderBatchResult render_rays(ad::Tape& tape, RenderModel& model,
                                     const std::vector<RenderRay>& rays,
                                     const RenderOptions& opt) {
    const int R = int(rays.size());
    const int C = model.c_total;

    detail::SampleSet s = detail::build_fg_samples(rays, opt);
    if (opt.importance_second_round) detail::importance_resample(model, rays, opt, s);
    const int N = int(s.ts.size());

    RenderBatchResult out;
    out.fg_offsets = s.offsets;

    ad::Var fg_color, w_fg;
    std::vector<float> normal_flat;
    if (N > 0) {
        SdfQuery q = model.sdf.query(tape, s.positions);
        std::vector<std::uint8_t> degenerate;
        ad::Var normals = sdf_normal(tape, model.sdf, s.positions, opt.normal_step, &degenerate);

        // sdf at the next sample within each segment (last pairs with itself,
        // so its numerator and alpha are zero)
        std::vector<int> next(N);
        for (int r = 0; r < R; ++r)
            for (int i = s.offsets[r]; i < s.offsets[r + 1]; ++i)
                next[i] = (i + 1 < s.offsets[r + 1]) ? i + 1 : i;
        ad::Var sdf_next = tape.gather_rows(q.sdf, next);
        ad::Var sharp = model.sdf.sharpness(tape);
        ad::Var phi = tape.sigmoid(tape.scale_by(q.sdf, sharp));
        ad::Var phi_next = tape.sigmoid(tape.scale_by(sdf_next, sharp));
        // epsilon shields the division when the CDF underflows deep inside
        // the surface; transmittance is zero there so the alpha is unused
        ad::Var alpha =
            tape.relu(tape.div_(tape.sub(phi, phi_next), tape.add_const(phi, 1e-15f)));
        ad::Var weights = tape.alpha_to_weights(alpha, s.offsets);
        w_fg = tape.segment_sum(weights, s.offsets);

        // per-sample direction encoding (constant per ray)
        std::vector<float> sh(std::size_t(N) * kShDim);
        for (int r = 0; r < R; ++r) {
            const auto b = sh_basis(rays[r].ray.direction);
            for (int i = s.offsets[r]; i < s.offsets[r + 1]; ++i)
                std::copy(b.begin(), b.end(), sh.begin() + std::size_t(i) * kShDim);
        }
        ad::Var sh_enc = tape.input(N, kShDim, sh);
        ad::Var rad = model.radiance.query(tape, s.positions, sh_enc, normals, q.geo_feature);
        rad = transform_pol_slices(tape, rad, model.modalities);
        fg_color = tape.segment_sum(tape.mul_rowwise(rad, weights), s.offsets);

        // depth and weight-averaged normal, plain values for maps/metrics
        out.depth.assign(R, 0.f);
        normal_flat.assign(std::size_t(R) * 3, 0.f);
        const auto& wv = tape.node(weights).v;
        const auto& nv = tape.node(normals).v;
        const auto& wfgv = tape.node(w_fg).v;
        for (int r = 0; r < R; ++r) {
            double d = 0, nx = 0, ny = 0, nz = 0;
            for (int i = s.offsets[r]; i < s.offsets[r + 1]; ++i) {
                d += double(wv[i]) * s.ts[i];
                nx += double(wv[i]) * nv[std::size_t(i) * 3];
                ny += double(wv[i]) * nv[std::size_t(i) * 3 + 1];
                nz += double(wv[i]) * nv[std::size_t(i) * 3 + 2];
            }
            const double w = wfgv[r];
            out.depth[r] = w < 1e-3 ? 0.f : float(d / std::max(w, 1e-10));
            const double nn = std::sqrt(nx * nx + ny * ny + nz * nz);
            if (nn > 1e-12) {
                normal_flat[std::size_t(r) * 3] = float(nx / nn);
                normal_flat[std::size_t(r) * 3 + 1] = float(ny / nn);
                normal_flat[std::size_t(r) * 3 + 2] = float(nz / nn);
            }
        }
    } else {
        fg_color = tape.constant(R, C, 0.f);
        w_fg = tape.constant(R, 1, 0.f);
        out.depth.assign(R, 0.f);
        normal_flat.assign(std::size_t(R) * 3, 0.f);
    }

    // background: inverted-sphere samples beyond the far bound on every ray
    const int K = opt.background_samples;
    std::vector<float> bg_coords(std::size_t(R) * K * 4);
    std::vector<float> bg_deltas(std::size_t(R) * K);
    std::vector<int> bg_offsets(R + 1);
    for (int r = 0; r < R; ++r) {
        bg_offsets[r + 1] = (r + 1) * K;
        const auto& ray = rays[r].ray;
        double t_start = ray.hits_roi ? ray.far : std::max(-ray.origin.dot(ray.direction), 0.0);
        t_start = std::max(t_start, 0.05);
        double prev_t = t_start;
        for (int k = 0; k < K; ++k) {
            // uniform in inverse depth from t_start outward
            const double u = 1.0 - (k + 0.5) / (K + 0.5);
            const double t = t_start / u;
            const double u_next = 1.0 - (k + 1.5) / (K + 0.5);
            const double t_next = u_next > 1e-4 ? t_start / u_next : t * 2.0;
            const Vec3 p = ray.origin + t * ray.direction;
            const double norm = std::max(p.norm(), 1.0);
            const std::size_t i = (std::size_t(r) * K + k) * 4;
            bg_coords[i] = float(p.x() / norm);
            bg_coords[i + 1] = float(p.y() / norm);
            bg_coords[i + 2] = float(p.z() / norm);
            bg_coords[i + 3] = float(1.0 / norm);
            bg_deltas[std::size_t(r) * K + k] = float(t_next - prev_t);
            prev_t = t_next;
        }
    }
    BackgroundField::Query bq = model.background.query(tape, bg_coords);
    ad::Var delta = tape.input(R * K, 1, bg_deltas);
    ad::Var bg_alpha = tape.add_const(
        tape.scale(tape.exp_(tape.scale(tape.mul(bq.density, delta), -1.f)), -1.f), 1.f);
    ad::Var bg_weights = tape.alpha_to_weights(bg_alpha, bg_offsets);
    ad::Var bg_rad = transform_pol_slices(tape, bq.radiance, model.modalities);
    ad::Var bg_color = tape.segment_sum(tape.mul_rowwise(bg_rad, bg_weights), bg_offsets);

    ad::Var one_minus_wfg = tape.add_const(tape.scale(w_fg, -1.f), 1.f);
    out.composited = tape.add(fg_color, tape.mul_rowwise(bg_color, one_minus_wfg));
    out.w_fg = w_fg;
    out.normal = std::move(normal_flat);
    return out;
}

// Per-ray predicted intensities for a contiguous block of rays belonging to
// one modality. For radiance modalities each requested channel is a slice
// column; for polarization the composited Stokes triple is converted with
// the standard linear-polarizer formula at the requested filter angles,
// compensated by each ray's camera roll.
inline ad::Var project_modality(ad::Tape& tape, ad::Var composited,
                                const std::vector<RenderRay>& rays, int row_begin,
                                int row_end, const ModalitySpec& spec,
                                const std::vector<std::vector<int>>& channels_per_ray) {
    ad::Var block = tape.slice_rows(composited, row_begin, row_end);
    const int n = row_end - row_begin;
    if (spec.kind == ModalityKind::Radiance) {
        const int k = int(channels_per_ray[0].size());
        if (k == spec.channel_count() ) {
            bool all_full = true;
            for (const auto& c : channels_per_ray)
                for (int j = 0; j < k; ++j)
                    if (c[j] != j) { all_full = false; break; }
            if (all_full) return tape.slice_cols(block, spec.slice_begin, spec.slice_end);
        }
        std::vector<ad::Var> cols;
        for (int j = 0; j < k; ++j) {
            std::vector<int> abs_cols(n);
            for (int r = 0; r < n; ++r)
                abs_cols[r] = spec.slice_begin + channels_per_ray[r][j];
            cols.push_back(tape.gather_cols_per_row(block, std::move(abs_cols)));
        }
        return cols.size() == 1 ? cols[0] : tape.concat_cols(cols);
    }
    // polarization: channels_per_ray entries index into spec.channels
    ad::Var stokes = tape.slice_cols(block, spec.slice_begin, spec.slice_end);
    const int k = int(channels_per_ray[0].size());
    std::vector<ad::Var> cols;
    for (int j = 0; j < k; ++j) {
        std::vector<float> proj(std::size_t(n) * 3);
        for (int r = 0; r < n; ++r) {
            const double angle = *spec.channels[channels_per_ray[r][j]].filter_angle_deg;
            const double t = 2.0 * deg_to_rad(angle + rays[row_begin + r].roll_deg);
            proj[std::size_t(r) * 3] = 0.5f;
            proj[std::size_t(r) * 3 + 1] = float(0.5 * std::cos(t));
            proj[std::size_t(r) * 3 + 2] = float(0.5 * std::sin(t));
        }
        ad::Var a = tape.input(n, 3, proj);
        cols.push_back(tape.reduce_cols_sum(tape.mul(stokes, a)));
    }
    return cols.size() == 1 ? cols[0] : tape.concat_cols(cols);
}

// --- frame rendering --------------------------------------------------------

enum class RenderMode { Mosaicked, FullChannel };

struct FrameRender {
    int width = 0, height = 0;
    int channels = 0;                // 1 for mosaicked, slice width for full
    std::vector<float> image;        // H x W x channels, row-major
    std::vector<float> depth;        // H x W
    std::vector<float> normal;       // H x W x 3
    std::vector<float> w_fg;         // H x W
};

// Renders a full frame for one modality. Mosaicked mode emits the pattern
// channel of every pixel (polarization: the intensity at the pixel's filter
// angle); full-channel mode emits every slice channel (polarization: the
// Stokes triple). `stride` renders every stride-th pixel for quick previews.
inline FrameRender render_frame(RenderModel& model, const CameraModel& cam,
                                const std::string& modality_name, RenderMode mode,
                                const RenderOptions& opt, int stride = 1,
                                int chunk = 4096) {
    const ModalitySpec& spec = model.modality(modality_name);
    int mod_index = -1;
    for (std::size_t i = 0; i < model.modalities.size(); ++i)
        if (model.modalities[i].name == spec.name) mod_index = int(i);

    const int W = cam.intrinsics.width, H = cam.intrinsics.height;
    FrameRender out;
    out.width = W;
    out.height = H;
    out.channels = mode == RenderMode::Mosaicked ? 1 : spec.slice_width();
    out.image.assign(std::size_t(W) * H * out.channels, 0.f);
    out.depth.assign(std::size_t(W) * H, 0.f);
    out.normal.assign(std::size_t(W) * H * 3, 0.f);
    out.w_fg.assign(std::size_t(W) * H, 0.f);

    std::vector<std::pair<int, int>> pixels;
    for (int r = 0; r < H; r += stride)
        for (int c = 0; c < W; c += stride) pixels.emplace_back(r, c);

    for (std::size_t base = 0; base < pixels.size(); base += chunk) {
        const int n = int(std::min(pixels.size() - base, std::size_t(chunk)));
        std::vector<RenderRay> rays(n);
        for (int i = 0; i < n; ++i) {
            auto [r, c] = pixels[base + i];
            RenderRay rr;
            rr.ray = pixel_to_ray(cam, c, r);
            rr.modality = mod_index;
            rr.row = r;
            rr.col = c;
            if (spec.kind == ModalityKind::Polarization)
                rr.roll_deg = camera_roll_about_ray_safe(cam.pose, rr.ray.direction);
            rays[i] = rr;
        }
        ad::Tape tape;
        RenderBatchResult rb = render_rays(tape, model, rays, opt);
        ad::Var values;
        if (mode == RenderMode::FullChannel && spec.kind == ModalityKind::Polarization) {
            values = tape.slice_cols(rb.composited, spec.slice_begin, spec.slice_end);
        } else if (mode == RenderMode::FullChannel) {
            std::vector<std::vector<int>> ch(n);
            for (int i = 0; i < n; ++i)
                for (int c = 0; c < spec.channel_count(); ++c) ch[i].push_back(c);
            values = project_modality(tape, rb.composited, rays, 0, n, spec, ch);
        } else {
            std::vector<std::vector<int>> ch(n);
            for (int i = 0; i < n; ++i) {
                const int c = spec.pattern ? channel_at(*spec.pattern, rays[i].row, rays[i].col) : 0;
                ch[i] = {c};
            }
            values = project_modality(tape, rb.composited, rays, 0, n, spec, ch);
        }
        const auto& vv = tape.node(values).v;
        const int vc = tape.node(values).cols;
        const auto& wv = tape.node(rb.w_fg).v;
        for (int i = 0; i < n; ++i) {
            auto [r, c] = pixels[base + i];
            const std::size_t px = std::size_t(r) * W + c;
            for (int k = 0; k < out.channels; ++k)
                out.image[px * out.channels + k] = vv[std::size_t(i) * vc + k];
            out.depth[px] = rb.depth[i];
            for (int k = 0; k < 3; ++k) out.normal[px * 3 + k] = rb.normal[std::size_t(i) * 3 + k];
            out.w_fg[px] = wv[i];
        }
    }
    return out;
}

}  // namespace mmrf
