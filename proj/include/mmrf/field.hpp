#pragma once

#include "mmrf/autodiff.hpp"
#include "mmrf/core.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

// The learnable scene representation: multi-resolution hash grids, the SDF
// and radiance networks with the shared multimodal output head, the
// spherical-harmonics direction encoding and the inverted-sphere background
// field.

namespace mmrf {

// --- hash grid --------------------------------------------------------------

struct HashGridConfig {
    int levels = 8;
    int base_resolution = 16;
    float growth = 1.5f;
    int features_per_level = 2;
    int table_size_log2 = 19;

    int resolution(int level) const {
        return int(std::floor(base_resolution * std::pow(double(growth), level)));
    }
    // Levels whose full corner lattice fits in the table are stored densely
    // (no collisions); larger levels are hashed.
    bool dense(int level) const {
        const std::int64_t n = resolution(level) + 1;
        return n * n * n <= (std::int64_t(1) << table_size_log2);
    }
    int rows(int level) const {
        const std::int64_t n = resolution(level) + 1;
        const std::int64_t cap = std::int64_t(1) << table_size_log2;
        return int(dense(level) ? n * n * n : cap);
    }
    int output_dim() const { return levels * features_per_level; }
};

inline std::uint32_t spatial_hash(std::uint32_t x, std::uint32_t y, std::uint32_t z,
                                  int table_size_log2) {
    const std::uint32_t h = (x * 1u) ^ (y * 2654435761u) ^ (z * 805459861u);
    return h & ((std::uint32_t(1) << table_size_log2) - 1u);
}

struct HashGrid {
    HashGridConfig config;
    std::vector<ad::Parameter> tables;  // one per level, rows(l) x F

    void init(const std::string& name, Rng& rng, float scale = 1e-4f) {
        tables.clear();
        for (int l = 0; l < config.levels; ++l) {
            ad::Parameter p(name + ".table" + std::to_string(l),
                            std::size_t(config.rows(l)) * config.features_per_level);
            for (auto& v : p.value) v = float(uniform(rng, -scale, scale));
            tables.push_back(std::move(p));
        }
    }

    std::vector<ad::Parameter*> parameters() {
        std::vector<ad::Parameter*> out;
        for (auto& t : tables) out.push_back(&t);
        return out;
    }
};

// Trilinear interpolation of the level tables at N positions in [-1,1]^3
// (clamped at entry). Returns N x (L*F).
inline ad::Var hash_encode(ad::Tape& tape, HashGrid& grid,
                           std::span<const float> positions) {
    const int N = int(positions.size()) / 3;
    const auto& cfg = grid.config;
    std::vector<ad::Var> levels;
    std::vector<std::uint32_t> rows(std::size_t(N) * 8);
    std::vector<float> weights(std::size_t(N) * 8);
    for (int l = 0; l < cfg.levels; ++l) {
        const int res = cfg.resolution(l);
        const bool dense = cfg.dense(l);
        for (int n = 0; n < N; ++n) {
            std::uint32_t c0[3];
            float fr[3];
            for (int d = 0; d < 3; ++d) {
                float p = positions[std::size_t(n) * 3 + d];
                p = std::min(std::max(p, -1.f), 1.f);
                const float u = (p + 1.f) * 0.5f * float(res);
                float fl = std::floor(u);
                if (fl > float(res - 1)) fl = float(res - 1);
                c0[d] = std::uint32_t(fl);
                fr[d] = u - fl;
            }
            for (int k = 0; k < 8; ++k) {
                const std::uint32_t cx = c0[0] + (k & 1);
                const std::uint32_t cy = c0[1] + ((k >> 1) & 1);
                const std::uint32_t cz = c0[2] + ((k >> 2) & 1);
                const float wx = (k & 1) ? fr[0] : 1.f - fr[0];
                const float wy = ((k >> 1) & 1) ? fr[1] : 1.f - fr[1];
                const float wz = ((k >> 2) & 1) ? fr[2] : 1.f - fr[2];
                const std::size_t i = std::size_t(n) * 8 + k;
                rows[i] = dense ? (cx + (res + 1u) * (cy + (res + 1u) * cz))
                                : spatial_hash(cx, cy, cz, cfg.table_size_log2);
                weights[i] = wx * wy * wz;
            }
        }
        levels.push_back(tape.gather_interpolate(grid.tables[l], cfg.features_per_level,
                                                 rows, weights, 8));
    }
    return tape.concat_cols(levels);
}

// --- MLP --------------------------------------------------------------------

enum class Activation { Relu, Softplus100 };

struct Mlp {
    std::vector<ad::Parameter> weights;  // layer i: dims[i+1] x dims[i]
    std::vector<ad::Parameter> biases;
    Activation hidden_activation = Activation::Relu;

    void init(const std::string& name, const std::vector<int>& dims, Rng& rng) {
        weights.clear();
        biases.clear();
        for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
            const int in = dims[i], out = dims[i + 1];
            ad::Parameter w(name + ".w" + std::to_string(i), std::size_t(out) * in);
            const float bound = std::sqrt(6.f / float(in + out));
            for (auto& v : w.value) v = float(uniform(rng, -bound, bound));
            weights.push_back(std::move(w));
            biases.emplace_back(name + ".b" + std::to_string(i), std::size_t(out));
        }
    }

    // Hidden layers activated, last layer linear.
    ad::Var forward(ad::Tape& tape, ad::Var x) {
        for (std::size_t i = 0; i < weights.size(); ++i) {
            x = tape.linear(x, weights[i], biases[i]);
            if (i + 1 < weights.size())
                x = hidden_activation == Activation::Relu ? tape.relu(x)
                                                          : tape.softplus(x, 100.f);
        }
        return x;
    }

    std::vector<ad::Parameter*> parameters() {
        std::vector<ad::Parameter*> out;
        for (auto& w : weights) out.push_back(&w);
        for (auto& b : biases) out.push_back(&b);
        return out;
    }
};

// --- spherical harmonics direction encoding ---------------------------------

constexpr int kShDim = 25;  // real SH through degree 4

inline std::array<float, kShDim> sh_basis(const Vec3& dir) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    const double xx = x * x, yy = y * y, zz = z * z;
    std::array<float, kShDim> b{};
    b[0] = 0.28209479177387814f;
    b[1] = float(-0.48860251190291992 * y);
    b[2] = float(0.48860251190291992 * z);
    b[3] = float(-0.48860251190291992 * x);
    b[4] = float(1.0925484305920792 * x * y);
    b[5] = float(-1.0925484305920792 * y * z);
    b[6] = float(0.31539156525252005 * (3.0 * zz - 1.0));
    b[7] = float(-1.0925484305920792 * x * z);
    b[8] = float(0.5462742152960396 * (xx - yy));
    b[9] = float(-0.5900435899266435 * y * (3.0 * xx - yy));
    b[10] = float(2.890611442640554 * x * y * z);
    b[11] = float(-0.4570457994644658 * y * (5.0 * zz - 1.0));
    b[12] = float(0.3731763325901154 * z * (5.0 * zz - 3.0));
    b[13] = float(-0.4570457994644658 * x * (5.0 * zz - 1.0));
    b[14] = float(1.445305721320277 * z * (xx - yy));
    b[15] = float(-0.5900435899266435 * x * (xx - 3.0 * yy));
    b[16] = float(2.5033429417967046 * x * y * (xx - yy));
    b[17] = float(-1.7701307697799304 * y * z * (3.0 * xx - yy));
    b[18] = float(0.9461746957575601 * x * y * (7.0 * zz - 1.0));
    b[19] = float(-0.6690465435572892 * y * z * (7.0 * zz - 3.0));
    b[20] = float(0.10578554691520431 * (35.0 * zz * zz - 30.0 * zz + 3.0));
    b[21] = float(-0.6690465435572892 * x * z * (7.0 * zz - 3.0));
    b[22] = float(0.47308734787878004 * (xx - yy) * (7.0 * zz - 1.0));
    b[23] = float(-1.7701307697799304 * x * z * (xx - 3.0 * yy));
    b[24] = float(0.6258357354491761 * (xx * xx - 6.0 * xx * yy + yy * yy));
    return b;
}

// --- SDF field --------------------------------------------------------------

constexpr int kGeoFeatureDim = 13;

struct SdfQuery {
    ad::Var sdf;          // N x 1
    ad::Var geo_feature;  // N x 13
};

struct SdfField {
    HashGridConfig grid_config;
    HashGrid grid;
    Mlp mlp;  // [3 + L*F] -> 64 -> 64 -> [1 + 13], softplus(100) hidden
    ad::Parameter log_sharpness;

    void init(Rng& rng) {
        grid.config = grid_config;
        grid.init("sdf.grid", rng);
        mlp.hidden_activation = Activation::Softplus100;
        mlp.init("sdf.mlp", {3 + grid_config.output_dim(), 64, 64, 1 + kGeoFeatureDim}, rng);
        log_sharpness = ad::Parameter("sdf.log_sharpness", std::vector<float>{std::log(10.f)});
    }

    SdfQuery query(ad::Tape& tape, std::span<const float> positions) {
        const int n = int(positions.size()) / 3;
        ad::Var pos = tape.input(n, 3, positions);
        ad::Var feat = hash_encode(tape, grid, positions);
        ad::Var out = mlp.forward(tape, tape.concat_cols({pos, feat}));
        return {tape.slice_cols(out, 0, 1), tape.slice_cols(out, 1, 1 + kGeoFeatureDim)};
    }

    // Sharpness s > 0, stored as exp of a free parameter.
    ad::Var sharpness(ad::Tape& tape) { return tape.exp_(tape.param(log_sharpness, 1, 1)); }

    std::vector<ad::Parameter*> mlp_parameters() { return mlp.parameters(); }
    std::vector<ad::Parameter*> grid_parameters() { return grid.parameters(); }
};

// Normalized central-difference gradient of the SDF at N positions,
// differentiable through the six offset queries. Degenerate rows (gradient
// norm below 1e-12) return the fixed fallback axis and are flagged.
inline ad::Var sdf_normal(ad::Tape& tape, SdfField& field,
                          std::span<const float> positions, float step,
                          std::vector<std::uint8_t>* degenerate = nullptr) {
    const int n = int(positions.size()) / 3;
    std::vector<float> offset(std::size_t(n) * 6 * 3);
    for (int i = 0; i < n; ++i)
        for (int axis = 0; axis < 3; ++axis)
            for (int sign = 0; sign < 2; ++sign) {
                const std::size_t row = (std::size_t(i) * 6 + axis * 2 + sign) * 3;
                for (int d = 0; d < 3; ++d) offset[row + d] = positions[std::size_t(i) * 3 + d];
                offset[row + axis] += (sign == 0 ? step : -step);
            }
    ad::Var sdf6 = field.query(tape, offset).sdf;  // (6n) x 1
    std::vector<int> plus(n * 3), minus(n * 3);
    for (int i = 0; i < n; ++i)
        for (int axis = 0; axis < 3; ++axis) {
            plus[i * 3 + axis] = i * 6 + axis * 2;
            minus[i * 3 + axis] = i * 6 + axis * 2 + 1;
        }
    ad::Var fp = tape.gather_rows(sdf6, plus);    // (3n) x 1
    ad::Var fm = tape.gather_rows(sdf6, minus);
    ad::Var diff = tape.scale(tape.sub(fp, fm), 1.f / (2.f * step));
    // reshape (3n) x 1 -> n x 3: rows are already in x,y,z order per point
    ad::Var g = tape.alloc(n, 3);
    tape.node(g).v = tape.node(diff).v;
    tape.record([diff, g](ad::Tape& t) {
        auto& gd = t.grad(diff);
        const auto& gg = t.grad(g);
        for (std::size_t i = 0; i < gd.size(); ++i) gd[i] += gg[i];
    });
    return tape.normalize_rows(g, degenerate);
}

// --- radiance field ---------------------------------------------------------

struct RadianceField {
    HashGridConfig grid_config;
    HashGrid grid;
    Mlp mlp;         // [3 + L*F + 25 + 3 + 13] -> 64 -> 64 -> C_total
    int output_dim = 0;

    void init(int c_total, Rng& rng) {
        output_dim = c_total;
        grid.config = grid_config;
        grid.init("radiance.grid", rng);
        mlp.hidden_activation = Activation::Relu;
        mlp.init("radiance.mlp",
                 {3 + grid_config.output_dim() + kShDim + 3 + kGeoFeatureDim, 64, 64, c_total},
                 rng);
    }

    // Shared multimodal output, sigmoid-bounded to (0,1). Callers slice per
    // modality via the registry.
    ad::Var query(ad::Tape& tape, std::span<const float> positions, ad::Var sh_encoding,
                  ad::Var normal, ad::Var geo_feature) {
        const int n = int(positions.size()) / 3;
        ad::Var pos = tape.input(n, 3, positions);
        ad::Var feat = hash_encode(tape, grid, positions);
        ad::Var x = tape.concat_cols({pos, feat, sh_encoding, normal, geo_feature});
        return tape.sigmoid(mlp.forward(tape, x));
    }

    ad::Parameter& output_layer_weights() { return mlp.weights.back(); }
    ad::Parameter& output_layer_biases() { return mlp.biases.back(); }

    std::vector<ad::Parameter*> mlp_parameters() { return mlp.parameters(); }
    std::vector<ad::Parameter*> grid_parameters() { return grid.parameters(); }
};

// --- background field -------------------------------------------------------

// Small density+radiance network over inverted-sphere coordinates
// (x/|x|, 1/|x|); only consulted for samples outside the ROI sphere.
struct BackgroundField {
    Mlp mlp;  // 4 -> 32 -> 32 -> [1 + C_total]
    int output_dim = 0;

    void init(int c_total, Rng& rng) {
        output_dim = c_total;
        mlp.hidden_activation = Activation::Relu;
        mlp.init("background.mlp", {4, 32, 32, 1 + c_total}, rng);
    }

    struct Query {
        ad::Var density;   // N x 1, softplus-positive
        ad::Var radiance;  // N x C_total, sigmoid-bounded
    };

    // coords: N x 4 rows of (x/|x|, 1/|x|)
    Query query(ad::Tape& tape, std::span<const float> coords) {
        const int n = int(coords.size()) / 4;
        ad::Var x = tape.input(n, 4, coords);
        ad::Var out = mlp.forward(tape, x);
        return {tape.softplus(tape.slice_cols(out, 0, 1)),
                tape.sigmoid(tape.slice_cols(out, 1, 1 + output_dim))};
    }

    std::vector<ad::Parameter*> parameters() { return mlp.parameters(); }
};

}  // namespace mmrf
