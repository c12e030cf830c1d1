#pragma once

#include "mmrf/core.hpp"
#include "mmrf/dataset.hpp"
#include "mmrf/modality.hpp"
#include "mmrf/png_io.hpp"
#include "mmrf/renderer.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

// Image quality metrics, model-derived foreground masks, and the bilinear
// demosaicking baseline. Evaluation is mask-first: metrics over the
// background are a distinct, explicitly named mode.

namespace mmrf {

struct EmptyMask : Error {
    explicit EmptyMask(const std::string& m) : Error(m) {}
};

// Mean squared error over masked pixels; mask is per pixel, applied to every
// channel. Values are in [0,1].
inline double masked_mse(const std::vector<float>& pred, const std::vector<float>& target,
                         int channels, const std::vector<std::uint8_t>& mask) {
    if (pred.size() != target.size()) throw Error("mse: shape mismatch");
    if (mask.size() * std::size_t(channels) != pred.size()) throw Error("mse: mask shape mismatch");
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) continue;
        for (int c = 0; c < channels; ++c) {
            const double d = double(pred[p * channels + c]) - double(target[p * channels + c]);
            acc += d * d;
        }
        n += std::size_t(channels);
    }
    if (n == 0) throw EmptyMask("mse: empty mask");
    return acc / double(n);
}

inline double psnr(const std::vector<float>& pred, const std::vector<float>& target,
                   int channels, const std::vector<std::uint8_t>& mask) {
    const double mse = masked_mse(pred, target, channels, mask);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

inline double psnr_unmasked(const std::vector<float>& pred, const std::vector<float>& target,
                            int channels) {
    const std::vector<std::uint8_t> all(pred.size() / std::size_t(channels), 1);
    return psnr(pred, target, channels, all);
}

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01, k2 = 0.03;
    double dynamic_range = 1.0;
};

namespace detail {
inline std::vector<double> gaussian_kernel(int window, double sigma) {
    std::vector<double> k(window);
    const int half = window / 2;
    double sum = 0;
    for (int i = 0; i < window; ++i) {
        const double d = i - half;
        k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}
}  // namespace detail

// Mean local SSIM over the mask for single-channel images. A window
// contributes where its center pixel is masked in and the window lies fully
// inside the image.
inline double ssim(const std::vector<float>& pred, const std::vector<float>& target,
                   int width, int height, const std::vector<std::uint8_t>& mask,
                   const SsimParams& p = {}) {
    if (pred.size() != target.size() || pred.size() != std::size_t(width) * height)
        throw Error("ssim: shape mismatch");
    if (mask.size() != pred.size()) throw Error("ssim: mask shape mismatch");
    const auto kern = detail::gaussian_kernel(p.window, p.sigma);
    const int half = p.window / 2;
    const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
    const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
    double acc = 0;
    std::size_t n = 0;
    for (int r = half; r < height - half; ++r) {
        for (int c = half; c < width - half; ++c) {
            if (!mask[std::size_t(r) * width + c]) continue;
            double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
            for (int i = 0; i < p.window; ++i)
                for (int j = 0; j < p.window; ++j) {
                    const double w = kern[i] * kern[j];
                    const double x = pred[std::size_t(r - half + i) * width + (c - half + j)];
                    const double y = target[std::size_t(r - half + i) * width + (c - half + j)];
                    mx += w * x;
                    my += w * y;
                    sxx += w * x * x;
                    syy += w * y * y;
                    sxy += w * x * y;
                }
            sxx -= mx * mx;
            syy -= my * my;
            sxy -= mx * my;
            acc += ((2 * mx * my + c1) * (2 * sxy + c2)) /
                   ((mx * mx + my * my + c1) * (sxx + syy + c2));
            ++n;
        }
    }
    if (n == 0) throw EmptyMask("ssim: empty mask");
    return acc / double(n);
}

// DoLP / AoLP error maps from full-channel Stokes renders (3 channels:
// s0, s1, s2). AoLP error is taken modulo 180 degrees.
struct PolErrorMaps {
    std::vector<float> dolp_error;
    std::vector<float> aolp_error_deg;
};

inline PolErrorMaps pol_error_maps(const std::vector<float>& pred_stokes,
                                   const std::vector<float>& target_stokes, int n_pixels) {
    PolErrorMaps out;
    out.dolp_error.resize(n_pixels);
    out.aolp_error_deg.resize(n_pixels);
    for (int i = 0; i < n_pixels; ++i) {
        const StokesVector a{pred_stokes[3 * i], pred_stokes[3 * i + 1], pred_stokes[3 * i + 2]};
        const StokesVector b{target_stokes[3 * i], target_stokes[3 * i + 1],
                             target_stokes[3 * i + 2]};
        const DolpAolp pa = a.s0 > 0 ? dolp_aolp(a) : DolpAolp{};
        const DolpAolp pb = b.s0 > 0 ? dolp_aolp(b) : DolpAolp{};
        const double da = pa.dolp, aa = pa.aolp_deg;
        const double db = pb.dolp, ab = pb.aolp_deg;
        out.dolp_error[i] = float(std::abs(da - db));
        double e = std::fmod(std::abs(aa - ab), 180.0);
        if (e > 90.0) e = 180.0 - e;
        out.aolp_error_deg[i] = float(e);
    }
    return out;
}

// Foreground masks from a model trained on all views: a pixel is foreground
// iff the foreground weight exceeds the threshold.
inline Image8 mask_from_wfg(const FrameRender& frame, double threshold = 1e-3) {
    Image8 m;
    m.width = frame.width;
    m.height = frame.height;
    m.data.resize(frame.w_fg.size());
    for (std::size_t i = 0; i < frame.w_fg.size(); ++i)
        m.data[i] = frame.w_fg[i] > threshold ? 255 : 0;
    return m;
}

inline std::map<std::string, std::vector<Image8>> generate_masks(RenderModel& model,
                                                                 const SceneDataset& ds,
                                                                 const RenderOptions& opt,
                                                                 double threshold = 1e-3,
                                                                 int stride = 1) {
    std::map<std::string, std::vector<Image8>> out;
    for (const auto& [name, cams] : ds.cameras) {
        auto& masks = out[name];
        for (const auto& cam : cams)
            masks.push_back(mask_from_wfg(
                render_frame(model, cam, name, RenderMode::Mosaicked, opt, stride), threshold));
    }
    return out;
}

// Bilinear demosaicking baseline. Each mosaick cell class forms a regular
// lattice; every channel plane is bilinearly interpolated from its cell
// lattices (clamped at the border) and planes of classes sharing a channel
// are averaged.
inline std::vector<float> demosaick_bilinear(const std::vector<float>& raw, int width,
                                             int height, const MosaickPattern& pat,
                                             int n_channels) {
    if (width < pat.tile_cols || height < pat.tile_rows)
        throw Error("demosaick: frame smaller than the pattern tile");
    std::vector<float> out(std::size_t(width) * height * n_channels, 0.f);
    std::vector<int> plane_count(n_channels, 0);
    for (int a = 0; a < pat.tile_rows; ++a) {
        for (int b = 0; b < pat.tile_cols; ++b) {
            const int ch = pat.cell_channel[a][b];
            const int nr = (height - 1 - a) / pat.tile_rows + 1;
            const int nc = (width - 1 - b) / pat.tile_cols + 1;
            plane_count[ch] += 1;
            for (int r = 0; r < height; ++r) {
                double fr = (double(r) - a) / pat.tile_rows;
                fr = std::min(std::max(fr, 0.0), double(nr - 1));
                const int r0 = int(fr);
                const int r1 = std::min(r0 + 1, nr - 1);
                const double wr = fr - r0;
                for (int c = 0; c < width; ++c) {
                    double fc = (double(c) - b) / pat.tile_cols;
                    fc = std::min(std::max(fc, 0.0), double(nc - 1));
                    const int c0 = int(fc);
                    const int c1 = std::min(c0 + 1, nc - 1);
                    const double wc = fc - c0;
                    auto lat = [&](int lr, int lc) {
                        return double(raw[std::size_t(a + lr * pat.tile_rows) * width + b +
                                          lc * pat.tile_cols]);
                    };
                    const double v = (1 - wr) * ((1 - wc) * lat(r0, c0) + wc * lat(r0, c1)) +
                                     wr * ((1 - wc) * lat(r1, c0) + wc * lat(r1, c1));
                    out[(std::size_t(r) * width + c) * n_channels + ch] += float(v);
                }
            }
        }
    }
    for (std::size_t p = 0; p < std::size_t(width) * height; ++p)
        for (int ch = 0; ch < n_channels; ++ch)
            if (plane_count[ch] > 1) out[p * n_channels + ch] /= float(plane_count[ch]);
    return out;
}

// --- evaluation reports -----------------------------------------------------

struct EvalRow {
    std::string scene;
    std::string modality;
    int view = 0;
    double psnr_db = 0;
    std::optional<double> ssim_value;  // only for single-channel raw frames
};

struct EvalAggregate {
    double psnr_mean = 0, psnr_std = 0;
    std::optional<double> ssim_mean;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    SsimParams ssim_params;

    std::map<std::string, EvalAggregate> by_modality() const {
        std::map<std::string, EvalAggregate> out;
        std::map<std::string, std::vector<double>> ps, ss;
        for (const auto& r : rows) {
            ps[r.modality].push_back(r.psnr_db);
            if (r.ssim_value) ss[r.modality].push_back(*r.ssim_value);
        }
        for (const auto& [mod, v] : ps) {
            EvalAggregate a;
            double m = 0;
            for (double x : v) m += x;
            m /= double(v.size());
            double var = 0;
            for (double x : v) var += (x - m) * (x - m);
            a.psnr_mean = m;
            a.psnr_std = std::sqrt(var / double(v.size()));
            auto it = ss.find(mod);
            if (it != ss.end() && !it->second.empty()) {
                double sm = 0;
                for (double x : it->second) sm += x;
                a.ssim_mean = sm / double(it->second.size());
            }
            out[mod] = a;
        }
        return out;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "# ssim window=" << ssim_params.window << " sigma=" << ssim_params.sigma
           << " k1=" << ssim_params.k1 << " k2=" << ssim_params.k2 << "\n";
        os << "scene,modality,view,psnr_db,ssim\n";
        for (const auto& r : rows) {
            os << r.scene << "," << r.modality << "," << r.view << "," << r.psnr_db << ",";
            if (r.ssim_value) os << *r.ssim_value;
            os << "\n";
        }
        return os.str();
    }
};

}  // namespace mmrf
