#pragma once

#include "mmrf/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

// Reverse-mode tape over batched 2D float arrays. The kernel set is closed:
// exactly what the fields, renderer and losses need. Values are 32-bit,
// scalar reductions accumulate in 64-bit. Backward replays recorded closures
// in reverse execution order; all loops have a fixed iteration order so
// gradients are bit-identical across runs.

namespace mmrf::ad {

struct ShapeMismatch : Error {
    explicit ShapeMismatch(const std::string& m) : Error(m) {}
};
struct EmptyTape : Error {
    explicit EmptyTape(const std::string& m) : Error(m) {}
};

// A named learnable array with its gradient accumulator.
struct Parameter {
    std::string name;
    std::vector<float> value;
    std::vector<float> grad;

    Parameter() = default;
    Parameter(std::string n, std::size_t size, float fill = 0.f)
        : name(std::move(n)), value(size, fill), grad(size, 0.f) {}
    Parameter(std::string n, std::vector<float> v)
        : name(std::move(n)), value(std::move(v)), grad(value.size(), 0.f) {}

    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.f); }
};

class Tape;

struct Var {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

struct Node {
    int rows = 0, cols = 0;
    std::vector<float> v;  // row-major rows*cols
    std::vector<float> g;
    std::size_t size() const { return std::size_t(rows) * cols; }
};

class Tape {
  public:
    // --- extension API (custom ops in other headers build on these) ---------
    Var alloc(int rows, int cols) {
        nodes_.emplace_back();
        Node& n = nodes_.back();
        n.rows = rows;
        n.cols = cols;
        n.v.assign(n.size(), 0.f);
        return {this, int(nodes_.size()) - 1};
    }
    Node& node(Var x) { return nodes_.at(x.id); }
    const Node& node(Var x) const { return nodes_.at(x.id); }
    void record(std::function<void(Tape&)> backward_fn) {
        ops_.push_back(std::move(backward_fn));
    }
    // Gradient buffer, allocated lazily during backward.
    std::vector<float>& grad(Var x) {
        Node& n = node(x);
        if (n.g.size() != n.size()) n.g.assign(n.size(), 0.f);
        return n.g;
    }

    std::size_t op_count() const { return ops_.size(); }

    // --- leaves -------------------------------------------------------------
    Var input(int rows, int cols, std::span<const float> data) {
        Var x = alloc(rows, cols);
        if (data.size() != node(x).size())
            throw ShapeMismatch("input: data size mismatch");
        std::copy(data.begin(), data.end(), node(x).v.begin());
        return x;
    }

    Var constant(int rows, int cols, float fill) {
        Var x = alloc(rows, cols);
        std::fill(node(x).v.begin(), node(x).v.end(), fill);
        return x;
    }

    // Leaf view of a parameter; backward adds the node gradient into the
    // parameter's accumulator.
    Var param(Parameter& p, int rows, int cols) {
        if (p.size() != std::size_t(rows) * cols)
            throw ShapeMismatch("param " + p.name + ": shape mismatch");
        Var x = input(rows, cols, p.value);
        Parameter* pp = &p;
        record([x, pp](Tape& t) {
            const auto& g = t.grad(x);
            for (std::size_t i = 0; i < g.size(); ++i) pp->grad[i] += g[i];
        });
        return x;
    }

    // --- dense linear map ---------------------------------------------------
    // y = x W^T + b, with x: N x in, W: out x in (row-major), b: out.
    Var linear(Var x, Parameter& W, Parameter& b) {
        const Node& xn = node(x);
        const int in = xn.cols, n = xn.rows;
        const int out = int(b.size());
        if (W.size() != std::size_t(out) * in)
            throw ShapeMismatch("linear " + W.name + ": weight shape mismatch");
        Var y = alloc(n, out);
        {
            Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
                X(xn.v.data(), n, in), Wm(W.value.data(), out, in);
            Eigen::Map<Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
                Y(node(y).v.data(), n, out);
            Y.noalias() = X * Wm.transpose();
            Y.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(b.value.data(), out);
        }
        Parameter *Wp = &W, *bp = &b;
        record([x, y, n, in, out, Wp, bp](Tape& t) {
            using RM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
            Eigen::Map<const RM> G(t.grad(y).data(), n, out);
            Eigen::Map<const RM> X(t.node(x).v.data(), n, in);
            Eigen::Map<const RM> Wm(Wp->value.data(), out, in);
            Eigen::Map<RM> GW(Wp->grad.data(), out, in);
            GW.noalias() += G.transpose() * X;
            Eigen::Map<Eigen::RowVectorXf> Gb(bp->grad.data(), out);
            Gb += G.colwise().sum();
            Eigen::Map<RM> GX(t.grad(x).data(), n, in);
            GX.noalias() += G * Wm;
        });
        return y;
    }

    // --- elementwise --------------------------------------------------------
    Var relu(Var x) {
        return unary(x, [](float v) { return v > 0.f ? v : 0.f; },
                     [](float v, float) { return v > 0.f ? 1.f : 0.f; });
    }

    // Numerically stable: softplus(x) = max(x,0) + log1p(exp(-|beta x|))/beta
    Var softplus(Var x, float beta = 1.f) {
        return unary(
            x,
            [beta](float v) {
                return std::max(v, 0.f) + std::log1p(std::exp(-std::abs(beta * v))) / beta;
            },
            [beta](float v, float) {
                const float z = -std::abs(beta * v);
                const float s = std::exp(z) / (1.f + std::exp(z));
                return v > 0.f ? 1.f - s : s;
            });
    }

    Var sigmoid(Var x) {
        return unary(
            x,
            [](float v) { return v >= 0.f ? 1.f / (1.f + std::exp(-v))
                                          : std::exp(v) / (1.f + std::exp(v)); },
            [](float, float y) { return y * (1.f - y); },
            /*use_output=*/true);
    }

    Var sin_(Var x) {
        return unary(x, [](float v) { return std::sin(v); },
                     [](float v, float) { return std::cos(v); });
    }
    Var cos_(Var x) {
        return unary(x, [](float v) { return std::cos(v); },
                     [](float v, float) { return -std::sin(v); });
    }
    Var exp_(Var x) {
        return unary(x, [](float v) { return std::exp(v); },
                     [](float, float y) { return y; }, true);
    }
    Var abs_(Var x) {
        return unary(x, [](float v) { return std::abs(v); },
                     [](float v, float) { return v > 0.f ? 1.f : (v < 0.f ? -1.f : 0.f); });
    }
    Var square(Var x) {
        return unary(x, [](float v) { return v * v; },
                     [](float v, float) { return 2.f * v; });
    }

    Var scale(Var x, float c) {
        return unary(x, [c](float v) { return c * v; }, [c](float, float) { return c; });
    }
    Var add_const(Var x, float c) {
        return unary(x, [c](float v) { return v + c; }, [](float, float) { return 1.f; });
    }

    Var add(Var a, Var b) {
        return binary(a, b, [](float x, float y) { return x + y; },
                      [](float, float) { return std::pair<float, float>{1.f, 1.f}; });
    }
    Var sub(Var a, Var b) {
        return binary(a, b, [](float x, float y) { return x - y; },
                      [](float, float) { return std::pair<float, float>{1.f, -1.f}; });
    }
    Var mul(Var a, Var b) {
        return binary(a, b, [](float x, float y) { return x * y; },
                      [](float x, float y) { return std::pair<float, float>{y, x}; });
    }
    Var div_(Var a, Var b) {
        return binary(a, b, [](float x, float y) { return x / y; },
                      [](float x, float y) {
                          return std::pair<float, float>{1.f / y, -x / (y * y)};
                      });
    }

    // x scaled by a 1x1 node (e.g. the SDF sharpness).
    Var scale_by(Var x, Var s) {
        const Node& sn = node(s);
        if (sn.rows != 1 || sn.cols != 1) throw ShapeMismatch("scale_by: scalar expected");
        Var y = alloc(node(x).rows, node(x).cols);
        const float sv = sn.v[0];
        const auto& xv = node(x).v;
        auto& yv = node(y).v;
        for (std::size_t i = 0; i < xv.size(); ++i) yv[i] = xv[i] * sv;
        record([x, s, y, sv](Tape& t) {
            const auto& g = t.grad(y);
            const auto& xv = t.node(x).v;
            auto& gx = t.grad(x);
            double gs = 0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                gx[i] += g[i] * sv;
                gs += double(g[i]) * xv[i];
            }
            t.grad(s)[0] += float(gs);
        });
        return y;
    }

    // Multiply each row of x (R x C) by the matching entry of s (R x 1).
    Var mul_rowwise(Var x, Var s) {
        const Node& xn = node(x);
        const Node& sn = node(s);
        if (sn.rows != xn.rows || sn.cols != 1)
            throw ShapeMismatch("mul_rowwise: scale must be R x 1");
        Var y = alloc(xn.rows, xn.cols);
        auto& yv = node(y).v;
        for (int r = 0; r < xn.rows; ++r)
            for (int c = 0; c < xn.cols; ++c)
                yv[std::size_t(r) * xn.cols + c] = xn.v[std::size_t(r) * xn.cols + c] * sn.v[r];
        const int R = xn.rows, C = xn.cols;
        record([x, s, y, R, C](Tape& t) {
            const auto& g = t.grad(y);
            const auto& xv = t.node(x).v;
            const auto& sv = t.node(s).v;
            auto& gx = t.grad(x);
            auto& gs = t.grad(s);
            for (int r = 0; r < R; ++r) {
                double acc = 0;
                for (int c = 0; c < C; ++c) {
                    const std::size_t i = std::size_t(r) * C + c;
                    gx[i] += g[i] * sv[r];
                    acc += double(g[i]) * xv[i];
                }
                gs[r] += float(acc);
            }
        });
        return y;
    }

    // --- structure ----------------------------------------------------------
    Var concat_cols(const std::vector<Var>& parts) {
        if (parts.empty()) throw ShapeMismatch("concat_cols: empty");
        const int R = node(parts[0]).rows;
        int C = 0;
        for (Var p : parts) {
            if (node(p).rows != R) throw ShapeMismatch("concat_cols: row mismatch");
            C += node(p).cols;
        }
        Var y = alloc(R, C);
        auto& yv = node(y).v;
        int off = 0;
        for (Var p : parts) {
            const Node& pn = node(p);
            for (int r = 0; r < R; ++r)
                std::copy(pn.v.begin() + std::size_t(r) * pn.cols,
                          pn.v.begin() + std::size_t(r + 1) * pn.cols,
                          yv.begin() + std::size_t(r) * C + off);
            off += pn.cols;
        }
        auto parts_copy = parts;
        record([parts_copy, y, R, C](Tape& t) {
            const auto& g = t.grad(y);
            int off = 0;
            for (Var p : parts_copy) {
                const int pc = t.node(p).cols;
                auto& gp = t.grad(p);
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < pc; ++c)
                        gp[std::size_t(r) * pc + c] += g[std::size_t(r) * C + off + c];
                off += pc;
            }
        });
        return y;
    }

    Var slice_cols(Var x, int begin, int end) {
        const Node& xn = node(x);
        if (begin < 0 || end > xn.cols || begin >= end)
            throw ShapeMismatch("slice_cols: bad range");
        const int R = xn.rows, C = xn.cols, W = end - begin;
        Var y = alloc(R, W);
        auto& yv = node(y).v;
        for (int r = 0; r < R; ++r)
            std::copy(xn.v.begin() + std::size_t(r) * C + begin,
                      xn.v.begin() + std::size_t(r) * C + end,
                      yv.begin() + std::size_t(r) * W);
        record([x, y, begin, R, C, W](Tape& t) {
            const auto& g = t.grad(y);
            auto& gx = t.grad(x);
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < W; ++c)
                    gx[std::size_t(r) * C + begin + c] += g[std::size_t(r) * W + c];
        });
        return y;
    }

    Var slice_rows(Var x, int begin, int end) {
        const Node& xn = node(x);
        if (begin < 0 || end > xn.rows || begin >= end)
            throw ShapeMismatch("slice_rows: bad range");
        const int C = xn.cols, R = end - begin;
        Var y = alloc(R, C);
        std::copy(xn.v.begin() + std::size_t(begin) * C,
                  xn.v.begin() + std::size_t(end) * C, node(y).v.begin());
        record([x, y, begin, R, C](Tape& t) {
            const auto& g = t.grad(y);
            auto& gx = t.grad(x);
            for (std::size_t i = 0; i < std::size_t(R) * C; ++i)
                gx[std::size_t(begin) * C + i] += g[i];
        });
        return y;
    }

    Var gather_rows(Var x, std::vector<int> idx) {
        const Node& xn = node(x);
        const int C = xn.cols, R = int(idx.size());
        Var y = alloc(R, C);
        auto& yv = node(y).v;
        for (int r = 0; r < R; ++r)
            std::copy(xn.v.begin() + std::size_t(idx[r]) * C,
                      xn.v.begin() + std::size_t(idx[r] + 1) * C,
                      yv.begin() + std::size_t(r) * C);
        record([x, y, idx = std::move(idx), R, C](Tape& t) {
            const auto& g = t.grad(y);
            auto& gx = t.grad(x);
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < C; ++c)
                    gx[std::size_t(idx[r]) * C + c] += g[std::size_t(r) * C + c];
        });
        return y;
    }

    // Per-row column pick: y[r] = x[r, col[r]].
    Var gather_cols_per_row(Var x, std::vector<int> col) {
        const Node& xn = node(x);
        if (int(col.size()) != xn.rows) throw ShapeMismatch("gather_cols_per_row: size");
        const int R = xn.rows, C = xn.cols;
        Var y = alloc(R, 1);
        auto& yv = node(y).v;
        for (int r = 0; r < R; ++r) yv[r] = xn.v[std::size_t(r) * C + col[r]];
        record([x, y, col = std::move(col), R, C](Tape& t) {
            const auto& g = t.grad(y);
            auto& gx = t.grad(x);
            for (int r = 0; r < R; ++r) gx[std::size_t(r) * C + col[r]] += g[r];
        });
        return y;
    }

    // --- gather/interpolate (grid tables) -----------------------------------
    // y[n] = sum_k weights[n,k] * table.row(rows[n,k]); table is F columns.
    // corner rows and weights are position-derived constants, not
    // differentiated. Backward scatters into the table gradient in sample
    // order (single thread), which is deterministic.
    Var gather_interpolate(Parameter& table, int feature_dim,
                           const std::vector<std::uint32_t>& rows,
                           const std::vector<float>& weights, int corners) {
        if (rows.size() != weights.size() || rows.size() % corners != 0)
            throw ShapeMismatch("gather_interpolate: index/weight mismatch");
        const int N = int(rows.size()) / corners;
        const int F = feature_dim;
        Var y = alloc(N, F);
        auto& yv = node(y).v;
        for (int n = 0; n < N; ++n) {
            float* out = yv.data() + std::size_t(n) * F;
            for (int k = 0; k < corners; ++k) {
                const float w = weights[std::size_t(n) * corners + k];
                const float* row = table.value.data() +
                                   std::size_t(rows[std::size_t(n) * corners + k]) * F;
                for (int f = 0; f < F; ++f) out[f] += w * row[f];
            }
        }
        Parameter* tp = &table;
        record([y, tp, F, corners, N, rows, weights](Tape& t) {
            const auto& g = t.grad(y);
            for (int n = 0; n < N; ++n) {
                const float* gr = g.data() + std::size_t(n) * F;
                for (int k = 0; k < corners; ++k) {
                    const float w = weights[std::size_t(n) * corners + k];
                    float* dst = tp->grad.data() +
                                 std::size_t(rows[std::size_t(n) * corners + k]) * F;
                    for (int f = 0; f < F; ++f) dst[f] += w * gr[f];
                }
            }
        });
        return y;
    }

    // --- segment ops (per-ray structure) ------------------------------------
    // offsets has R+1 entries; rows [offsets[r], offsets[r+1]) belong to ray r.
    Var segment_sum(Var x, std::vector<int> offsets) {
        const Node& xn = node(x);
        const int R = int(offsets.size()) - 1, C = xn.cols;
        Var y = alloc(R, C);
        auto& yv = node(y).v;
        for (int r = 0; r < R; ++r)
            for (int i = offsets[r]; i < offsets[r + 1]; ++i)
                for (int c = 0; c < C; ++c)
                    yv[std::size_t(r) * C + c] += xn.v[std::size_t(i) * C + c];
        record([x, y, offsets = std::move(offsets), R, C](Tape& t) {
            const auto& g = t.grad(y);
            auto& gx = t.grad(x);
            for (int r = 0; r < R; ++r)
                for (int i = offsets[r]; i < offsets[r + 1]; ++i)
                    for (int c = 0; c < C; ++c)
                        gx[std::size_t(i) * C + c] += g[std::size_t(r) * C + c];
        });
        return y;
    }

    // Volume-rendering weights from per-sample alphas within each segment:
    // w_i = alpha_i * prod_{j<i in segment} (1 - alpha_j).
    Var alpha_to_weights(Var alphas, std::vector<int> offsets) {
        const Node& an = node(alphas);
        if (an.cols != 1) throw ShapeMismatch("alpha_to_weights: N x 1 expected");
        const int R = int(offsets.size()) - 1;
        Var y = alloc(an.rows, 1);
        auto& yv = node(y).v;
        for (int r = 0; r < R; ++r) {
            double T = 1.0;
            for (int i = offsets[r]; i < offsets[r + 1]; ++i) {
                const double a = an.v[i];
                yv[i] = float(a * T);
                T *= (1.0 - a);
            }
        }
        record([alphas, y, offsets = std::move(offsets), R](Tape& t) {
            const auto& g = t.grad(y);
            const auto& av = t.node(alphas).v;
            const auto& wv = t.node(y).v;
            auto& ga = t.grad(alphas);
            // dL/da_k = T_k g_k - sum_{i>k} g_i w_i / (1 - a_k)
            std::vector<double> T;
            for (int r = 0; r < R; ++r) {
                const int b = offsets[r], e = offsets[r + 1];
                T.assign(e - b, 1.0);
                for (int k = b + 1; k < e; ++k)
                    T[k - b] = T[k - b - 1] * (1.0 - double(av[k - 1]));
                double suffix = 0;  // sum_{i>k} g_i w_i, built back-to-front
                for (int k = e - 1; k >= b; --k) {
                    const double a = std::min(double(av[k]), 1.0 - 1e-7);
                    ga[k] += float(T[k - b] * g[k] - suffix / (1.0 - a));
                    suffix += double(g[k]) * wv[k];
                }
            }
        });
        return y;
    }

    // Sum across columns: R x C -> R x 1.
    Var reduce_cols_sum(Var x) {
        const Node& xn = node(x);
        const int R = xn.rows, C = xn.cols;
        Var y = alloc(R, 1);
        auto& yv = node(y).v;
        for (int r = 0; r < R; ++r) {
            double acc = 0;
            for (int c = 0; c < C; ++c) acc += xn.v[std::size_t(r) * C + c];
            yv[r] = float(acc);
        }
        record([x, y, R, C](Tape& t) {
            const auto& g = t.grad(y);
            auto& gx = t.grad(x);
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < C; ++c) gx[std::size_t(r) * C + c] += g[r];
        });
        return y;
    }

    // Full reduction to a 1x1 scalar; accumulates in 64-bit.
    Var reduce_sum(Var x) {
        const Node& xn = node(x);
        Var y = alloc(1, 1);
        double acc = 0;
        for (float v : xn.v) acc += v;
        node(y).v[0] = float(acc);
        record([x, y](Tape& t) {
            const float g = t.grad(y)[0];
            auto& gx = t.grad(x);
            for (auto& v : gx) v += g;
        });
        return y;
    }

    Var mean_all(Var x) { return scale(reduce_sum(x), 1.f / float(node(x).size())); }

    // Row-wise euclidean norm with a zero-gradient floor: rows whose norm is
    // below eps produce norm eps and no gradient.
    Var rows_norm(Var x, float eps = 1e-12f) {
        const Node& xn = node(x);
        const int R = xn.rows, C = xn.cols;
        Var y = alloc(R, 1);
        auto& yv = node(y).v;
        for (int r = 0; r < R; ++r) {
            double acc = 0;
            for (int c = 0; c < C; ++c) {
                const double v = xn.v[std::size_t(r) * C + c];
                acc += v * v;
            }
            yv[r] = float(std::sqrt(acc));
        }
        record([x, y, R, C, eps](Tape& t) {
            const auto& g = t.grad(y);
            const auto& xv = t.node(x).v;
            const auto& nv = t.node(y).v;
            auto& gx = t.grad(x);
            for (int r = 0; r < R; ++r) {
                if (nv[r] < eps) continue;
                for (int c = 0; c < C; ++c)
                    gx[std::size_t(r) * C + c] += g[r] * xv[std::size_t(r) * C + c] / nv[r];
            }
        });
        return y;
    }

    // Row-wise normalization to unit vectors. Rows with norm < eps emit the
    // fixed fallback (0,0,1) and are excluded from backward; callers can
    // inspect `degenerate` flags.
    Var normalize_rows(Var x, std::vector<std::uint8_t>* degenerate = nullptr,
                       float eps = 1e-12f) {
        const Node& xn = node(x);
        const int R = xn.rows, C = xn.cols;
        Var y = alloc(R, C);
        auto& yv = node(y).v;
        if (degenerate) degenerate->assign(R, 0);
        for (int r = 0; r < R; ++r) {
            double acc = 0;
            for (int c = 0; c < C; ++c) {
                const double v = xn.v[std::size_t(r) * C + c];
                acc += v * v;
            }
            const double n = std::sqrt(acc);
            if (n < eps) {
                if (degenerate) (*degenerate)[r] = 1;
                yv[std::size_t(r) * C + (C - 1)] = 1.f;
            } else {
                for (int c = 0; c < C; ++c)
                    yv[std::size_t(r) * C + c] = float(xn.v[std::size_t(r) * C + c] / n);
            }
        }
        record([x, y, R, C, eps](Tape& t) {
            const auto& g = t.grad(y);
            const auto& xv = t.node(x).v;
            const auto& nvv = t.node(y).v;
            auto& gx = t.grad(x);
            for (int r = 0; r < R; ++r) {
                double n2 = 0;
                for (int c = 0; c < C; ++c) {
                    const double v = xv[std::size_t(r) * C + c];
                    n2 += v * v;
                }
                const double n = std::sqrt(n2);
                if (n < eps) continue;
                // d(x/|x|) = (I - nn^T)/|x| dx
                double gdotn = 0;
                for (int c = 0; c < C; ++c)
                    gdotn += double(g[std::size_t(r) * C + c]) * nvv[std::size_t(r) * C + c];
                for (int c = 0; c < C; ++c)
                    gx[std::size_t(r) * C + c] += float(
                        (g[std::size_t(r) * C + c] - gdotn * nvv[std::size_t(r) * C + c]) / n);
            }
        });
        return y;
    }

    // --- backward -----------------------------------------------------------
    void backward(Var root) {
        if (ops_.empty()) throw EmptyTape("backward: no recorded operations");
        const Node& rn = node(root);
        if (rn.rows != 1 || rn.cols != 1)
            throw ShapeMismatch("backward: root must be scalar");
        grad(root)[0] = 1.f;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)(*this);
    }

    float scalar(Var x) const {
        const Node& n = node(x);
        if (n.rows != 1 || n.cols != 1) throw ShapeMismatch("scalar: 1x1 expected");
        return n.v[0];
    }

  private:
    template <class F, class DF>
    Var unary(Var x, F f, DF df, bool use_output = false) {
        const Node& xn = node(x);
        Var y = alloc(xn.rows, xn.cols);
        auto& yv = node(y).v;
        const std::size_t n = xn.v.size();
        for (std::size_t i = 0; i < n; ++i) yv[i] = f(xn.v[i]);
        record([x, y, df, use_output](Tape& t) {
            const auto& g = t.grad(y);
            const auto& xv = t.node(x).v;
            const auto& yv = t.node(y).v;
            auto& gx = t.grad(x);
            for (std::size_t i = 0; i < g.size(); ++i)
                gx[i] += g[i] * df(xv[i], use_output ? yv[i] : 0.f);
        });
        return y;
    }

    template <class F, class DF>
    Var binary(Var a, Var b, F f, DF df) {
        const Node& an = node(a);
        const Node& bn = node(b);
        if (an.rows != bn.rows || an.cols != bn.cols)
            throw ShapeMismatch("binary op: shape mismatch");
        Var y = alloc(an.rows, an.cols);
        auto& yv = node(y).v;
        for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = f(an.v[i], bn.v[i]);
        record([a, b, y, df](Tape& t) {
            const auto& g = t.grad(y);
            const auto& av = t.node(a).v;
            const auto& bv = t.node(b).v;
            auto& ga = t.grad(a);
            auto& gb = t.grad(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const auto [da, db] = df(av[i], bv[i]);
                ga[i] += g[i] * da;
                gb[i] += g[i] * db;
            }
        });
        return y;
    }

    std::deque<Node> nodes_;  // deque: node references stay valid across alloc
    std::vector<std::function<void(Tape&)>> ops_;
};

// --- finite-difference harness ---------------------------------------------

struct FiniteDiffEntry {
    std::string parameter;
    std::size_t index = 0;
    double analytic = 0, numeric = 0, rel_error = 0;
    bool skipped = false;  // below the probe threshold (e.g. kink at 0)
};

struct FiniteDiffReport {
    std::vector<FiniteDiffEntry> entries;
    double max_rel_error = 0;
    bool passed = true;
};

// Central finite differences of a scalar-valued deterministic function
// against analytic gradients. `fn` must recompute the loss from current
// parameter values; `grads` holds the analytic gradient per checked
// parameter (captured once by the caller before probing). A coordinate
// passes if it is within the relative tolerance or within `atol` in
// absolute terms; the latter absorbs the fp32 evaluation noise floor on
// near-zero gradients, as in the usual gradcheck convention.
inline FiniteDiffReport finite_difference_check(
    const std::function<double()>& fn, std::vector<Parameter*> params,
    const std::vector<std::vector<float>>& grads, double tol, double step = 1e-3,
    int probes_per_param = 10, std::uint64_t seed = 0, double min_grad = 1e-4,
    double atol = 5e-4) {
    FiniteDiffReport report;
    Rng rng = make_rng(seed, 77);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        const auto& g = grads[pi];
        // Probe the coordinates with the largest analytic gradient plus a few
        // random ones; coordinates whose gradient is below min_grad are
        // reported but excluded from pass/fail (below the fp32 noise floor,
        // or a non-differentiable point).
        std::vector<std::size_t> order(p.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return std::abs(g[a]) > std::abs(g[b]);
        });
        std::vector<std::size_t> picks;
        for (std::size_t i = 0; i < order.size() && int(picks.size()) < probes_per_param / 2; ++i)
            picks.push_back(order[i]);
        while (int(picks.size()) < probes_per_param && !p.value.empty())
            picks.push_back(std::size_t(uniform_int(rng, 0, int(p.size()) - 1)));
        for (std::size_t idx : picks) {
            FiniteDiffEntry e;
            e.parameter = p.name;
            e.index = idx;
            e.analytic = g[idx];
            const float saved = p.value[idx];
            // divide by the step actually realized after fp32 quantization
            const float vp = saved + float(step);
            const float vm = saved - float(step);
            p.value[idx] = vp;
            const double fp = fn();
            p.value[idx] = vm;
            const double fm = fn();
            p.value[idx] = saved;
            e.numeric = (fp - fm) / (double(vp) - double(vm));
            const double denom = std::max(std::abs(e.analytic), std::abs(e.numeric));
            e.rel_error = denom > 0 ? std::abs(e.analytic - e.numeric) / denom : 0.0;
            e.skipped = denom < min_grad;
            if (!e.skipped) {
                report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
                if (e.rel_error > tol && std::abs(e.analytic - e.numeric) > atol)
                    report.passed = false;
            }
            report.entries.push_back(e);
        }
    }
    return report;
}

}  // namespace mmrf::ad
