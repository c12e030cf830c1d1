#pragma once

#include "mmrf/checkpoint.hpp"
#include "mmrf/core.hpp"
#include "mmrf/dataset.hpp"
#include "mmrf/metrics.hpp"
#include "mmrf/optim.hpp"
#include "mmrf/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

// Multimodal batch construction, raw-pixel losses, regularization, and the
// training loop tying the shared fields to per-modality supervision.

namespace mmrf {

struct EmptyBudget : Error {
    explicit EmptyBudget(const std::string& m) : Error(m) {}
};
struct NonFiniteLoss : Error {
    explicit NonFiniteLoss(const std::string& m) : Error(m) {}
};

struct TrainConfig {
    int rays_per_modality = 2048;
    int samples_per_ray = 64;
    int total_iters = 20000;  // desk-scale default
    double warmup_fraction = 0.10;
    std::vector<double> decay_points = {0.50, 0.75, 0.90};
    double decay_factor = 0.33;
    double eikonal_weight = 0.1;
    int eikonal_points = 256;
    std::map<std::string, double> modality_weights;  // default 1.0 each
    std::uint64_t seed = 0;
    double lr_tables = 1e-2;
    double lr_mlps = 5e-4;
    double lr_sharpness = 1e-2;  // fast lane: edge sharpness must move in few iters
    double weight_decay_mlps = 1e-2;
    int background_samples = 16;
    bool stratified = true;
    float normal_step = 0.01f;
    int sdf_pretrain_steps = 500;
    bool demosaicked = false;     // supervise bilinear-demosaicked full channels
    bool rgb_pretrain = false;    // reserved; single-modality warm start is off
    int eval_every = 0;           // 0 disables periodic held-out evaluation
    int eval_stride = 4;
    int log_every = 50;
    HashGridConfig grid;

    void validate() const {
        if (rays_per_modality <= 0 || samples_per_ray <= 0 || total_iters <= 0)
            throw Error("train config: counts must be positive");
        if (!(warmup_fraction > 0 && warmup_fraction < 1))
            throw Error("train config: warmup fraction outside (0,1)");
        double prev = warmup_fraction;
        for (double p : decay_points) {
            if (!(p > prev && p < 1)) throw Error("train config: decay points must increase in (0,1)");
            prev = p;
        }
        if (rgb_pretrain) throw Error("train config: single-modality pretrain is not implemented");
    }

    ScheduleConfig schedule() const { return {warmup_fraction, decay_points, decay_factor}; }

    double weight_for(const std::string& modality) const {
        auto it = modality_weights.find(modality);
        return it == modality_weights.end() ? 1.0 : it->second;
    }
};

// One modality's contiguous block inside a ray batch, with raw targets.
struct BatchBlock {
    int mod_index = 0;
    int begin = 0, end = 0;
    std::vector<std::vector<int>> channels;  // per ray, supervised channels
    std::vector<float> targets;              // (end-begin) x channels
};

struct RaySampleBatch {
    std::vector<RenderRay> rays;
    std::vector<BatchBlock> blocks;
};

// Optional per-modality demosaicked target cache for the full-channel
// supervision mode.
struct DemosaickCache {
    std::map<std::string, std::vector<std::vector<float>>> frames;

    const std::vector<float>& get(const SceneDataset& ds, const std::string& mod, int slot) {
        auto& per_view = frames[mod];
        if (per_view.empty()) per_view.resize(ds.frames.at(mod).size());
        auto& f = per_view[slot];
        if (f.empty()) {
            const ModalitySpec& spec = *std::find_if(
                ds.modalities.begin(), ds.modalities.end(),
                [&](const ModalitySpec& m) { return m.name == mod; });
            if (!spec.pattern) {
                f = ds.frames.at(mod)[slot];
            } else {
                f = demosaick_bilinear(ds.frames.at(mod)[slot], ds.frame_width.at(mod),
                                       ds.frame_height.at(mod), *spec.pattern,
                                       spec.channel_count());
            }
        }
        return f;
    }
};

// Equal per-modality ray budgets drawn with replacement across the budgeted
// views and all pixels. Each ray carries the raw value of its mosaick
// channel (or all channels when demosaicked supervision is on).
inline RaySampleBatch build_batch(const SceneDataset& ds, const ViewBudget& budget,
                                  int rays_per_modality, std::uint64_t seed,
                                  bool demosaicked = false,
                                  DemosaickCache* cache = nullptr) {
    RaySampleBatch batch;
    Rng rng = make_rng(seed, 41);
    for (std::size_t mi = 0; mi < ds.modalities.size(); ++mi) {
        const ModalitySpec& spec = ds.modalities[mi];
        const auto& views = budget.for_modality(spec.name);
        if (views.empty()) throw EmptyBudget("build_batch: no views for " + spec.name);
        const int W = ds.frame_width.at(spec.name);
        const int H = ds.frame_height.at(spec.name);
        const auto& cams = ds.cameras.at(spec.name);
        const auto& frames = ds.frames.at(spec.name);
        const bool pol = spec.kind == ModalityKind::Polarization;

        BatchBlock block;
        block.mod_index = int(mi);
        block.begin = int(batch.rays.size());
        for (int i = 0; i < rays_per_modality; ++i) {
            const int view = views[uniform_int(rng, 0, int(views.size()) - 1)];
            const int slot = ds.view_slot(view);
            const int row = uniform_int(rng, 0, H - 1);
            const int col = uniform_int(rng, 0, W - 1);
            RenderRay rr;
            rr.ray = pixel_to_ray(cams[slot], col, row);
            rr.modality = int(mi);
            rr.row = row;
            rr.col = col;
            if (pol) rr.roll_deg = camera_roll_about_ray_safe(cams[slot].pose, rr.ray.direction);
            batch.rays.push_back(rr);

            if (demosaicked) {
                std::vector<int> ch(spec.channel_count());
                for (int c = 0; c < spec.channel_count(); ++c) ch[c] = c;
                block.channels.push_back(std::move(ch));
                const auto& full = cache->get(ds, spec.name, slot);
                for (int c = 0; c < spec.channel_count(); ++c)
                    block.targets.push_back(
                        full[(std::size_t(row) * W + col) * spec.channel_count() + c]);
            } else {
                const int c = spec.pattern ? channel_at(*spec.pattern, row, col) : 0;
                block.channels.push_back({c});
                block.targets.push_back(frames[slot][std::size_t(row) * W + col]);
            }
        }
        block.end = int(batch.rays.size());
        batch.blocks.push_back(std::move(block));
    }
    return batch;
}

// Mean L1 between projected channel intensities and raw targets for one
// modality block.
inline ad::Var photometric_loss(ad::Tape& tape, ad::Var composited,
                                const RaySampleBatch& batch, const BatchBlock& block,
                                const ModalitySpec& spec) {
    ad::Var pred = project_modality(tape, composited, batch.rays, block.begin, block.end,
                                    spec, block.channels);
    const int n = block.end - block.begin;
    const int k = int(block.channels[0].size());
    ad::Var tgt = tape.input(n, k, block.targets);
    return tape.mean_all(tape.abs_(tape.sub(pred, tgt)));
}

// Mean (|grad sdf| - 1)^2 over uniform samples in the ROI ball, using the
// same central-difference gradient as the renderer's normals.
inline ad::Var eikonal_loss(ad::Tape& tape, SdfField& field, int n_points, std::uint64_t seed,
                            float step = 0.01f) {
    if (n_points <= 0) throw Error("eikonal_loss: n_points must be positive");
    Rng rng = make_rng(seed, 43);
    std::vector<float> pts;
    pts.reserve(std::size_t(n_points) * 3);
    while (int(pts.size()) < n_points * 3) {
        const double x = uniform(rng, -1.0, 1.0);
        const double y = uniform(rng, -1.0, 1.0);
        const double z = uniform(rng, -1.0, 1.0);
        if (x * x + y * y + z * z > 1.0) continue;
        pts.push_back(float(x));
        pts.push_back(float(y));
        pts.push_back(float(z));
    }
    std::vector<float> offs(std::size_t(n_points) * 6 * 3);
    for (int i = 0; i < n_points; ++i)
        for (int a = 0; a < 3; ++a)
            for (int s = 0; s < 2; ++s) {
                float* dst = offs.data() + (std::size_t(i) * 6 + a * 2 + s) * 3;
                for (int k = 0; k < 3; ++k) dst[k] = pts[std::size_t(i) * 3 + k];
                dst[a] += s == 0 ? step : -step;
            }
    ad::Var f = field.query(tape, offs).sdf;  // 6N x 1
    std::vector<ad::Var> axes;
    for (int a = 0; a < 3; ++a) {
        std::vector<int> plus(n_points), minus(n_points);
        for (int i = 0; i < n_points; ++i) {
            plus[i] = i * 6 + a * 2;
            minus[i] = i * 6 + a * 2 + 1;
        }
        axes.push_back(tape.scale(
            tape.sub(tape.gather_rows(f, plus), tape.gather_rows(f, minus)),
            0.5f / step));
    }
    ad::Var grad_norm = tape.rows_norm(tape.concat_cols(axes));
    return tape.mean_all(tape.square(tape.add_const(grad_norm, -1.f)));
}

// Optimizer with the standard grouping: hash tables without decay and with a
// tiny eps, MLPs with decoupled decay, and a no-decay group holding the
// sharpness plus the radiance output layer (kept decay-free so unsupervised
// slices stay bit-identical through a step).
inline AdamW make_optimizer(RenderModel& model, const TrainConfig& cfg) {
    AdamW opt(0.9, 0.99);
    std::vector<ad::Parameter*> tables;
    for (auto* p : model.sdf.grid_parameters()) tables.push_back(p);
    for (auto* p : model.radiance.grid_parameters()) tables.push_back(p);
    opt.add_group({"tables", cfg.lr_tables, 0.0, 1e-15}, std::move(tables));

    std::vector<ad::Parameter*> mlps;
    const ad::Parameter* out_w = &model.radiance.output_layer_weights();
    const ad::Parameter* out_b = &model.radiance.output_layer_biases();
    for (auto* p : model.sdf.mlp_parameters()) mlps.push_back(p);
    for (auto* p : model.radiance.mlp_parameters())
        if (p != out_w && p != out_b) mlps.push_back(p);
    for (auto* p : model.background.parameters()) mlps.push_back(p);
    opt.add_group({"mlps", cfg.lr_mlps, cfg.weight_decay_mlps, 1e-8}, std::move(mlps));

    opt.add_group({"no_decay", cfg.lr_mlps, 0.0, 1e-8},
                  {&model.radiance.output_layer_weights(),
                   &model.radiance.output_layer_biases()});
    opt.add_group({"sharpness", cfg.lr_sharpness, 0.0, 1e-8}, {&model.sdf.log_sharpness});
    return opt;
}

// Pretrains the SDF toward an analytic sphere of radius 0.5, giving the
// volume rendering a non-degenerate initial surface.
inline void pretrain_sdf_sphere(RenderModel& model, const TrainConfig& cfg) {
    if (cfg.sdf_pretrain_steps <= 0) return;
    AdamW opt(0.9, 0.99);
    opt.add_group({"tables", cfg.lr_tables, 0.0, 1e-15}, model.sdf.grid_parameters());
    opt.add_group({"mlps", 1e-3, 0.0, 1e-8}, model.sdf.mlp_parameters());
    Rng rng = make_rng(cfg.seed, 47);
    const int n = 512;
    for (int it = 0; it < cfg.sdf_pretrain_steps; ++it) {
        std::vector<float> pts(std::size_t(n) * 3);
        std::vector<float> tgt(n);
        for (int i = 0; i < n; ++i) {
            Vec3 p;
            do {
                p = Vec3(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0),
                         uniform(rng, -1.0, 1.0));
            } while (p.squaredNorm() > 1.0);
            for (int k = 0; k < 3; ++k) pts[std::size_t(i) * 3 + k] = float(p[k]);
            tgt[i] = float(p.norm() - 0.5);
        }
        ad::Tape tape;
        ad::Var sdf = model.sdf.query(tape, pts).sdf;
        ad::Var loss = tape.mean_all(tape.square(tape.sub(sdf, tape.input(n, 1, tgt))));
        opt.zero_grad();
        tape.backward(loss);
        opt.step(1.0);
    }
}

struct TrainResult {
    std::string checkpoint_path;
    std::string metrics_csv;
    std::map<std::string, double> final_losses;
    double final_total_loss = 0;
};

namespace detail {

inline double eval_psnr(RenderModel& model, const SceneDataset& ds, const TrainConfig& cfg) {
    if (ds.split.test.empty()) return 0.0;
    RenderOptions opt;
    opt.samples_per_ray = cfg.samples_per_ray;
    opt.background_samples = cfg.background_samples;
    opt.seed = cfg.seed;
    double acc = 0;
    int n = 0;
    const int view = ds.split.test.front();
    const int slot = ds.view_slot(view);
    for (const auto& spec : ds.modalities) {
        const auto& name = spec.name;
        FrameRender fr = render_frame(model, ds.cameras.at(name)[slot], name,
                                      RenderMode::Mosaicked, opt, cfg.eval_stride);
        const auto& target = ds.frames.at(name)[slot];
        const int W = fr.width, H = fr.height, s = cfg.eval_stride;
        std::vector<float> pv, tv;
        const auto& mask = ds.masks.at(name)[slot];
        for (int r = 0; r < H; r += s)
            for (int c = 0; c < W; c += s) {
                const std::size_t px = std::size_t(r) * W + c;
                if (mask && !mask->at(r, c)) continue;
                pv.push_back(fr.image[px]);
                tv.push_back(target[px]);
            }
        if (pv.empty()) continue;
        acc += psnr_unmasked(pv, tv, 1);
        ++n;
    }
    return n ? acc / n : 0.0;
}

}  // namespace detail

// Full training loop: deterministic given the seed, periodic held-out PSNR,
// CSV metrics log, final checkpoint. Non-finite losses abort with a
// diagnostic snapshot next to the checkpoint path.
inline TrainResult train(const SceneDataset& ds, const ViewBudget& budget,
                         const TrainConfig& cfg, const std::string& checkpoint_path) {
    cfg.validate();
    RenderModel model;
    model.init(ds.modalities, cfg.grid, cfg.seed);
    AdamW opt = make_optimizer(model, cfg);
    pretrain_sdf_sphere(model, cfg);

    DemosaickCache cache;
    std::ostringstream csv;
    csv << "iter";
    for (const auto& m : ds.modalities) csv << ",loss_" << m.name;
    csv << ",loss_eikonal,loss_total,eval_psnr\n";

    RenderOptions ropt;
    ropt.samples_per_ray = cfg.samples_per_ray;
    ropt.background_samples = cfg.background_samples;
    ropt.stratified = cfg.stratified;
    ropt.normal_step = cfg.normal_step;

    TrainResult result;
    result.checkpoint_path = checkpoint_path;

    for (int iter = 0; iter < cfg.total_iters; ++iter) {
        const std::uint64_t iter_seed = mix_seed(cfg.seed, std::uint64_t(iter) + 1000);
        RaySampleBatch batch = build_batch(ds, budget, cfg.rays_per_modality, iter_seed,
                                           cfg.demosaicked, &cache);
        ropt.seed = iter_seed;

        ad::Tape tape;
        RenderBatchResult rb = render_rays(tape, model, batch.rays, ropt);
        ad::Var total;
        bool first = true;
        std::map<std::string, double> losses;
        for (const auto& block : batch.blocks) {
            const ModalitySpec& spec = ds.modalities[block.mod_index];
            ad::Var l = photometric_loss(tape, rb.composited, batch, block, spec);
            losses[spec.name] = tape.scalar(l);
            ad::Var wl = tape.scale(l, float(cfg.weight_for(spec.name)));
            total = first ? wl : tape.add(total, wl);
            first = false;
        }
        ad::Var eik = eikonal_loss(tape, model.sdf, cfg.eikonal_points, iter_seed);
        const double eik_value = tape.scalar(eik);
        total = tape.add(total, tape.scale(eik, float(cfg.eikonal_weight)));
        const double total_value = tape.scalar(total);

        if (!std::isfinite(total_value)) {
            const std::string snap = checkpoint_path + ".diverged";
            nlohmann::json diag = {{"iter", iter}, {"total_loss", total_value}};
            for (const auto& [k, v] : losses) diag["loss_" + k] = v;
            save_checkpoint(snap, model, diag);
            throw NonFiniteLoss("train: non-finite loss at iter " + std::to_string(iter) +
                                " (snapshot: " + snap + ")");
        }

        opt.zero_grad();
        tape.backward(total);
        const double scale = lr_at(iter, cfg.total_iters, 1.0, cfg.schedule());
        opt.step(scale);

        result.final_losses = losses;
        result.final_total_loss = total_value;

        const bool log_now = cfg.log_every > 0 &&
                             (iter % cfg.log_every == 0 || iter + 1 == cfg.total_iters);
        if (log_now) {
            double ev = 0;
            if (cfg.eval_every > 0 &&
                (iter % cfg.eval_every == 0 || iter + 1 == cfg.total_iters))
                ev = detail::eval_psnr(model, ds, cfg);
            csv << iter;
            for (const auto& m : ds.modalities) csv << "," << losses[m.name];
            csv << "," << eik_value << "," << total_value << "," << ev << "\n";
        }
    }

    nlohmann::json extra = {{"iters", cfg.total_iters}, {"seed", cfg.seed}};
    save_checkpoint(checkpoint_path, model, extra);
    result.metrics_csv = csv.str();
    return result;
}

}  // namespace mmrf
