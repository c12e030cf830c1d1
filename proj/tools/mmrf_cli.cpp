#include <mmrf/checkpoint.hpp>
#include <mmrf/dataset.hpp>
#include <mmrf/metrics.hpp>
#include <mmrf/png_io.hpp>
#include <mmrf/synth.hpp>
#include <mmrf/trainer.hpp>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mmrf;

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

json train_config_json(const TrainConfig& c) {
    json j;
    j["rays_per_modality"] = c.rays_per_modality;
    j["samples_per_ray"] = c.samples_per_ray;
    j["total_iters"] = c.total_iters;
    j["warmup_fraction"] = c.warmup_fraction;
    j["decay_points"] = c.decay_points;
    j["decay_factor"] = c.decay_factor;
    j["eikonal_weight"] = c.eikonal_weight;
    j["eikonal_points"] = c.eikonal_points;
    j["modality_weights"] = c.modality_weights;
    j["seed"] = c.seed;
    j["lr_tables"] = c.lr_tables;
    j["lr_mlps"] = c.lr_mlps;
    j["lr_sharpness"] = c.lr_sharpness;
    j["weight_decay_mlps"] = c.weight_decay_mlps;
    j["background_samples"] = c.background_samples;
    j["stratified"] = c.stratified;
    j["normal_step"] = c.normal_step;
    j["sdf_pretrain_steps"] = c.sdf_pretrain_steps;
    j["demosaicked"] = c.demosaicked;
    j["eval_every"] = c.eval_every;
    j["eval_stride"] = c.eval_stride;
    j["log_every"] = c.log_every;
    j["grid"] = serialize::grid_config_json(c.grid);
    return j;
}

void apply_config_json(TrainConfig& c, const json& j) {
    if (j.contains("rays_per_modality")) c.rays_per_modality = j["rays_per_modality"];
    if (j.contains("samples_per_ray")) c.samples_per_ray = j["samples_per_ray"];
    if (j.contains("total_iters")) c.total_iters = j["total_iters"];
    if (j.contains("warmup_fraction")) c.warmup_fraction = j["warmup_fraction"];
    if (j.contains("decay_points")) c.decay_points = j["decay_points"].get<std::vector<double>>();
    if (j.contains("decay_factor")) c.decay_factor = j["decay_factor"];
    if (j.contains("eikonal_weight")) c.eikonal_weight = j["eikonal_weight"];
    if (j.contains("eikonal_points")) c.eikonal_points = j["eikonal_points"];
    if (j.contains("modality_weights"))
        c.modality_weights = j["modality_weights"].get<std::map<std::string, double>>();
    if (j.contains("seed")) c.seed = j["seed"];
    if (j.contains("lr_tables")) c.lr_tables = j["lr_tables"];
    if (j.contains("lr_mlps")) c.lr_mlps = j["lr_mlps"];
    if (j.contains("lr_sharpness")) c.lr_sharpness = j["lr_sharpness"];
    if (j.contains("weight_decay_mlps")) c.weight_decay_mlps = j["weight_decay_mlps"];
    if (j.contains("background_samples")) c.background_samples = j["background_samples"];
    if (j.contains("stratified")) c.stratified = j["stratified"];
    if (j.contains("normal_step")) c.normal_step = j["normal_step"];
    if (j.contains("sdf_pretrain_steps")) c.sdf_pretrain_steps = j["sdf_pretrain_steps"];
    if (j.contains("demosaicked")) c.demosaicked = j["demosaicked"];
    if (j.contains("eval_every")) c.eval_every = j["eval_every"];
    if (j.contains("eval_stride")) c.eval_stride = j["eval_stride"];
    if (j.contains("log_every")) c.log_every = j["log_every"];
    if (j.contains("grid")) c.grid = serialize::grid_config_from_json(j["grid"]);
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
}

// Masked per-view PSNR over a split; the evaluation contract shared by
// `eval` and the experiment plans.
EvalReport evaluate_checkpoint(const std::string& checkpoint, const SceneDataset& ds,
                               const std::vector<int>& views, int samples_per_ray = 64) {
    RenderModel model = model_from_checkpoint(checkpoint);
    RenderOptions opt;
    opt.samples_per_ray = samples_per_ray;
    opt.background_samples = 16;
    EvalReport report;
    for (const auto& spec : model.modalities) {
        const auto& name = spec.name;
        for (int view : views) {
            const int slot = ds.view_slot(view);
            FrameRender fr = render_frame(model, ds.cameras.at(name)[slot], name,
                                          RenderMode::Mosaicked, opt);
            const auto& target = ds.frames.at(name)[slot];
            const auto& mask = ds.masks.at(name)[slot];
            std::vector<float> pv, tv;
            std::vector<std::uint8_t> mv;
            for (std::size_t p = 0; p < target.size(); ++p) {
                if (mask && !mask->data[p]) continue;
                pv.push_back(fr.image[p]);
                tv.push_back(target[p]);
            }
            if (pv.empty()) continue;
            EvalRow row;
            row.scene = ds.manifest.scene_name;
            row.modality = name;
            row.view = view;
            row.psnr_db = psnr_unmasked(pv, tv, 1);
            if (!mask) {
                std::vector<std::uint8_t> all(target.size(), 1);
                row.ssim_value = ssim(fr.image, target, fr.width, fr.height, all);
            }
            report.rows.push_back(row);
        }
    }
    return report;
}

AnalyticScene scene_by_name(const std::string& name) {
    if (name == "sphere") return default_sphere_scene();
    if (name == "duo") return default_duo_scene();
    throw Error("unknown scene preset: " + name + " (use sphere or duo)");
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& scene_name, const std::string& spec_path,
              const std::string& out_dir, int views, int size,
              const std::string& modalities, std::uint64_t seed, bool no_masks) {
    AnalyticScene scene;
    if (!spec_path.empty()) {
        std::ifstream f(spec_path);
        if (!f) throw Error("cannot open scene spec: " + spec_path);
        json j;
        f >> j;
        scene = scene_spec_from_json(j);
    } else {
        scene = scene_by_name(scene_name);
    }
    BundleOptions opt;
    opt.n_views = views;
    opt.image_size = size;
    opt.modalities = split_list(modalities);
    opt.seed = seed;
    opt.write_masks = !no_masks;
    const fs::path manifest = make_scene_bundle(scene, out_dir, opt);
    std::cout << "wrote " << manifest.string() << "\n";
    return 0;
}

int cmd_validate(const std::string& manifest_path) {
    const SceneManifest m = read_manifest(manifest_path);
    const auto report = validate(m, fs::path(manifest_path).parent_path());
    for (const auto& line : report) std::cout << line << "\n";
    if (report.empty()) {
        std::cout << "ok\n";
        return 0;
    }
    return 1;
}

int cmd_train(const std::string& manifest_path, const TrainConfig& cfg,
              const std::string& out_dir, const std::string& unbalanced_mod,
              int unbalanced_views) {
    const SceneDataset ds = load_scene(manifest_path);
    ViewBudget budget = full_budget(ds);
    if (!unbalanced_mod.empty())
        budget = unbalanced_budget(ds, unbalanced_mod, unbalanced_views, cfg.seed);

    fs::create_directories(out_dir);
    const std::string ckpt = (fs::path(out_dir) / "model.ckpt").string();

    json resolved = train_config_json(cfg);
    resolved["manifest"] = manifest_path;
    resolved["checkpoint"] = ckpt;
    if (!unbalanced_mod.empty()) {
        resolved["unbalanced_modality"] = unbalanced_mod;
        resolved["unbalanced_views"] = unbalanced_views;
    }
    write_text(fs::path(out_dir) / "config.json", resolved.dump(2) + "\n");

    const TrainResult res = train(ds, budget, cfg, ckpt);
    write_text(fs::path(out_dir) / "metrics.csv", res.metrics_csv);
    std::cout << "checkpoint " << res.checkpoint_path << "\n";
    std::cout << "final_loss " << res.final_total_loss << "\n";
    return 0;
}

int cmd_render(const std::string& checkpoint, const std::string& manifest_path, int view,
               const std::string& modalities, const std::string& mode_name,
               const std::string& out_dir, int samples) {
    RenderModel model = model_from_checkpoint(checkpoint);
    const SceneDataset ds = load_scene(manifest_path);
    const RenderMode mode =
        mode_name == "full" ? RenderMode::FullChannel : RenderMode::Mosaicked;
    std::vector<std::string> mods = split_list(modalities);
    if (mods.empty())
        for (const auto& m : model.modalities) mods.push_back(m.name);

    RenderOptions opt;
    opt.samples_per_ray = samples;
    opt.background_samples = 16;
    fs::create_directories(out_dir);
    const int slot = ds.view_slot(view);
    for (const auto& name : mods) {
        const FrameRender fr =
            render_frame(model, ds.cameras.at(name)[slot], name, mode, opt);
        const ModalitySpec& spec = model.modality(name);
        const fs::path base = fs::path(out_dir) / (name + "_" + std::to_string(view));
        if (fr.channels == 1) {
            Image16 img;
            img.width = fr.width;
            img.height = fr.height;
            img.data.resize(fr.image.size());
            const double peak = double((1u << spec.bit_depth) - 1u);
            for (std::size_t i = 0; i < fr.image.size(); ++i)
                img.data[i] = std::uint16_t(std::lround(
                    std::clamp(double(fr.image[i]), 0.0, 1.0) * peak));
            write_png16(base.string() + ".png", img);
        } else {
            write_float_map(base.string() + ".bin", fr.width, fr.height, fr.channels,
                            fr.image);
        }
        write_float_map(base.string() + "_depth.bin", fr.width, fr.height, 1, fr.depth);
        write_float_map(base.string() + "_normal.bin", fr.width, fr.height, 3, fr.normal);
        std::cout << "rendered " << base.string() << " (" << fr.channels << " channels)\n";
    }
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& manifest_path,
             const std::string& split, const std::string& out_path, int samples) {
    const SceneDataset ds = load_scene(manifest_path);
    const auto& views = split == "train" ? ds.split.train : ds.split.test;
    if (views.empty()) throw Error("split has no views: " + split);
    const EvalReport report = evaluate_checkpoint(checkpoint, ds, views, samples);
    if (!out_path.empty()) write_text(out_path, report.to_csv());
    for (const auto& [name, agg] : report.by_modality())
        std::cout << name << " psnr " << agg.psnr_mean << " dB (std " << agg.psnr_std
                  << ")\n";
    return 0;
}

// --- experiment plans -------------------------------------------------------

struct JobSpec {
    std::string label;
    std::vector<std::string> modalities;
    std::string unbalanced_mod;  // empty = full budget
    int unbalanced_views = 0;
    bool half_views = false;
    bool half_rays = false;
    bool demosaicked = false;
    int few_shot_views = 0;  // >0 limits every modality to the first n train views
};

double job_psnr(const SceneDataset& ds, const TrainConfig& base, const JobSpec& job,
                std::uint64_t seed, const fs::path& out_dir,
                const std::string& report_modality) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    cfg.demosaicked = job.demosaicked;
    if (job.half_rays) cfg.rays_per_modality = std::max(1, cfg.rays_per_modality / 2);

    ViewBudget budget = full_budget(ds);
    if (job.half_views || job.few_shot_views > 0) {
        for (auto& [name, views] : budget.views) {
            const int keep = job.few_shot_views > 0 ? job.few_shot_views
                                                    : std::max(1, int(views.size()) / 2);
            views.resize(std::min<std::size_t>(views.size(), keep));
        }
    }
    if (!job.unbalanced_mod.empty())
        budget = unbalanced_budget(ds, job.unbalanced_mod, job.unbalanced_views, seed);

    fs::create_directories(out_dir);
    const std::string ckpt = (out_dir / "model.ckpt").string();
    json resolved = train_config_json(cfg);
    resolved["label"] = job.label;
    resolved["modalities"] = job.modalities;
    write_text(out_dir / "config.json", resolved.dump(2) + "\n");

    const TrainResult res = train(ds, budget, cfg, ckpt);
    write_text(out_dir / "metrics.csv", res.metrics_csv);

    const EvalReport report = evaluate_checkpoint(ckpt, ds, ds.split.test,
                                                  cfg.samples_per_ray);
    write_text(out_dir / "eval.csv", report.to_csv());
    const auto agg = report.by_modality();
    if (!agg.count(report_modality))
        throw Error("experiment: no eval rows for " + report_modality);
    return agg.at(report_modality).psnr_mean;
}

int cmd_experiment(const std::string& plan, const std::string& out_dir,
                   const std::string& seeds_arg, const TrainConfig& base, int views,
                   int size, bool half_views, bool half_rays, int shots) {
    std::vector<std::uint64_t> seeds;
    for (const auto& s : split_list(seeds_arg)) seeds.push_back(std::stoull(s));
    if (seeds.empty()) seeds = {0};

    // job pairs: (baseline, variant); the report prints variant deltas
    std::string report_modality = "rgb";
    std::vector<JobSpec> jobs;
    if (plan == "single-modality") {
        jobs.push_back({"rgb_only", {"rgb"}});
    } else if (plan == "two-modality") {
        jobs.push_back({"rgb_only", {"rgb"}});
        JobSpec joint{"rgb_nir", {"rgb", "nir"}};
        joint.half_views = half_views;
        joint.half_rays = half_rays;
        jobs.push_back(joint);
    } else if (plan == "three-modality") {
        jobs.push_back({"rgb_only", {"rgb"}});
        jobs.push_back({"rgb_nir_mono", {"rgb", "nir", "mono"}});
    } else if (plan == "five-modality") {
        jobs.push_back({"rgb_only", {"rgb"}});
        jobs.push_back({"all_five", {"rgb", "mono", "nir", "pol", "ms"}});
    } else if (plan == "unbalanced") {
        report_modality = "ms";
        for (int n : {1, 3, 5, 10, 25, 45}) {
            JobSpec j{"rgb45_ms" + std::to_string(n), {"rgb", "ms"}};
            j.unbalanced_mod = "ms";
            j.unbalanced_views = n;
            jobs.push_back(j);
        }
    } else if (plan == "mosaicked-vs-demosaicked") {
        jobs.push_back({"mosaicked", {"rgb", "mono", "nir", "pol", "ms"}});
        JobSpec demo{"demosaicked", {"rgb", "mono", "nir", "pol", "ms"}};
        demo.demosaicked = true;
        jobs.push_back(demo);
    } else if (plan == "few-shot") {
        JobSpec j{"few_shot_" + std::to_string(shots), {"rgb", "nir"}};
        j.few_shot_views = shots;
        jobs.push_back(j);
        jobs.push_back({"all_views", {"rgb", "nir"}});
    } else {
        throw Error("unknown experiment plan: " + plan);
    }

    fs::create_directories(out_dir);
    std::ostringstream table;
    table << "plan " << plan << ", seeds";
    for (auto s : seeds) table << " " << s;
    table << ", reporting " << report_modality << " PSNR\n";

    // one bundle per distinct modality set, shared across seeds
    std::map<std::string, fs::path> bundles;
    double baseline = 0;
    for (std::size_t ji = 0; ji < jobs.size(); ++ji) {
        const JobSpec& job = jobs[ji];
        std::string key;
        for (const auto& m : job.modalities) key += m + ",";
        if (!bundles.count(key)) {
            BundleOptions bopt;
            bopt.n_views = views;
            bopt.image_size = size;
            bopt.modalities = job.modalities;
            bopt.seed = 101;
            const fs::path dir = fs::path(out_dir) / ("scene_" + std::to_string(bundles.size()));
            bundles[key] = make_scene_bundle(default_duo_scene(), dir, bopt);
        }
        const SceneDataset ds = load_scene(bundles[key]);

        double mean = 0;
        for (auto seed : seeds) {
            const fs::path job_dir =
                fs::path(out_dir) / (job.label + "_seed" + std::to_string(seed));
            const double p = job_psnr(ds, base, job, seed, job_dir, report_modality);
            mean += p;
        }
        mean /= double(seeds.size());
        if (ji == 0) baseline = mean;
        char delta[32] = "";
        if (ji > 0)
            std::snprintf(delta, sizeof(delta), " (%+.2f)", mean - baseline);
        char line[160];
        std::snprintf(line, sizeof(line), "%-24s %6.2f dB%s\n", job.label.c_str(), mean,
                      delta);
        table << line;
        std::cout << line;
    }
    write_text(fs::path(out_dir) / "report.txt", table.str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multimodal neural field engine"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic scene bundle");
    std::string sy_scene = "sphere", sy_spec, sy_out = "scene";
    std::string sy_mods = "rgb,mono,nir,pol,ms";
    int sy_views = 50, sy_size = 64;
    std::uint64_t sy_seed = 0;
    bool sy_no_masks = false;
    synth->add_option("--scene", sy_scene, "preset: sphere or duo");
    synth->add_option("--spec", sy_spec, "scene spec json (overrides --scene)");
    synth->add_option("--out", sy_out, "output directory");
    synth->add_option("--views", sy_views, "number of views");
    synth->add_option("--size", sy_size, "image size in pixels");
    synth->add_option("--modalities", sy_mods, "comma-separated modality list");
    synth->add_option("--seed", sy_seed, "rng seed");
    synth->add_flag("--no-masks", sy_no_masks, "skip silhouette masks");

    // validate
    auto* val = app.add_subcommand("validate", "check a dataset manifest");
    std::string va_manifest;
    val->add_option("--manifest", va_manifest, "manifest.json path")->required();

    // train
    auto* tr = app.add_subcommand("train", "train a model on a scene");
    std::string tr_manifest, tr_out = "run", tr_config, tr_unb_mod;
    int tr_unb_views = 0;
    TrainConfig tr_cfg;
    std::uint64_t tr_seed = 0;
    int tr_iters = tr_cfg.total_iters, tr_rays = tr_cfg.rays_per_modality;
    int tr_samples = tr_cfg.samples_per_ray, tr_pretrain = tr_cfg.sdf_pretrain_steps;
    bool tr_demosaicked = false;
    tr->add_option("--manifest", tr_manifest, "manifest.json path")->required();
    tr->add_option("--out", tr_out, "output directory");
    tr->add_option("--config", tr_config, "train config json");
    tr->add_option("--seed", tr_seed, "rng seed");
    tr->add_option("--iters", tr_iters, "total iterations");
    tr->add_option("--rays", tr_rays, "rays per modality per batch");
    tr->add_option("--samples", tr_samples, "samples per ray");
    tr->add_option("--pretrain", tr_pretrain, "sdf sphere pretrain steps");
    tr->add_flag("--demosaicked", tr_demosaicked, "supervise demosaicked channels");
    tr->add_option("--unbalanced-modality", tr_unb_mod, "restrict one modality's views");
    tr->add_option("--unbalanced-views", tr_unb_views, "view count for that modality");

    // render
    auto* rd = app.add_subcommand("render", "render views from a checkpoint");
    std::string rd_ckpt, rd_manifest, rd_mods, rd_mode = "full", rd_out = "renders";
    int rd_view = 0, rd_samples = 64;
    rd->add_option("--checkpoint", rd_ckpt, "checkpoint path")->required();
    rd->add_option("--manifest", rd_manifest, "manifest.json path")->required();
    rd->add_option("--view", rd_view, "view index");
    rd->add_option("--modalities", rd_mods, "comma list; default all");
    rd->add_option("--mode", rd_mode, "mosaicked or full");
    rd->add_option("--out", rd_out, "output directory");
    rd->add_option("--samples", rd_samples, "samples per ray");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a split");
    std::string ev_ckpt, ev_manifest, ev_split = "test", ev_out;
    int ev_samples = 64;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint path")->required();
    ev->add_option("--manifest", ev_manifest, "manifest.json path")->required();
    ev->add_option("--split", ev_split, "test or train");
    ev->add_option("--out", ev_out, "report csv path");
    ev->add_option("--samples", ev_samples, "samples per ray");

    // experiment
    auto* ex = app.add_subcommand("experiment", "run a canned experiment plan");
    std::string ex_plan, ex_out = "experiment", ex_seeds = "0,1,2", ex_config;
    int ex_views = 20, ex_size = 32, ex_shots = 5;
    bool ex_half_views = false, ex_half_rays = false;
    TrainConfig ex_cfg;
    ex_cfg.rays_per_modality = 256;
    ex_cfg.samples_per_ray = 24;
    ex_cfg.total_iters = 400;
    ex_cfg.eikonal_points = 64;
    ex_cfg.background_samples = 8;
    ex_cfg.sdf_pretrain_steps = 200;
    int ex_iters = ex_cfg.total_iters, ex_rays = ex_cfg.rays_per_modality;
    int ex_samples = ex_cfg.samples_per_ray;
    ex->add_option("--plan", ex_plan,
                   "single-modality | two-modality | three-modality | five-modality | "
                   "unbalanced | mosaicked-vs-demosaicked | few-shot")
        ->required();
    ex->add_option("--out", ex_out, "output directory");
    ex->add_option("--seeds", ex_seeds, "comma list of seeds");
    ex->add_option("--config", ex_config, "train config json");
    ex->add_option("--views", ex_views, "views in the synthetic bundle");
    ex->add_option("--size", ex_size, "image size");
    ex->add_option("--iters", ex_iters, "total iterations per run");
    ex->add_option("--rays", ex_rays, "rays per modality per batch");
    ex->add_option("--samples", ex_samples, "samples per ray");
    ex->add_flag("--half-views", ex_half_views, "halve the view budget");
    ex->add_flag("--half-rays", ex_half_rays, "halve the ray budget");
    ex->add_option("--shots", ex_shots, "few-shot view count (5 or 10)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth)
            return cmd_synth(sy_scene, sy_spec, sy_out, sy_views, sy_size, sy_mods,
                             sy_seed, sy_no_masks);
        if (*val) return cmd_validate(va_manifest);
        if (*tr) {
            if (!tr_config.empty()) {
                std::ifstream f(tr_config);
                if (!f) throw Error("cannot open config: " + tr_config);
                json j;
                f >> j;
                apply_config_json(tr_cfg, j);
            }
            // explicit flags override the config file
            if (tr->count("--seed")) tr_cfg.seed = tr_seed;
            if (tr->count("--iters")) tr_cfg.total_iters = tr_iters;
            if (tr->count("--rays")) tr_cfg.rays_per_modality = tr_rays;
            if (tr->count("--samples")) tr_cfg.samples_per_ray = tr_samples;
            if (tr->count("--pretrain")) tr_cfg.sdf_pretrain_steps = tr_pretrain;
            if (tr->count("--demosaicked")) tr_cfg.demosaicked = tr_demosaicked;
            return cmd_train(tr_manifest, tr_cfg, tr_out, tr_unb_mod, tr_unb_views);
        }
        if (*rd)
            return cmd_render(rd_ckpt, rd_manifest, rd_view, rd_mods, rd_mode, rd_out,
                              rd_samples);
        if (*ev) return cmd_eval(ev_ckpt, ev_manifest, ev_split, ev_out, ev_samples);
        if (*ex) {
            if (!ex_config.empty()) {
                std::ifstream f(ex_config);
                if (!f) throw Error("cannot open config: " + ex_config);
                json j;
                f >> j;
                apply_config_json(ex_cfg, j);
            }
            if (ex->count("--iters")) ex_cfg.total_iters = ex_iters;
            if (ex->count("--rays")) ex_cfg.rays_per_modality = ex_rays;
            if (ex->count("--samples")) ex_cfg.samples_per_ray = ex_samples;
            return cmd_experiment(ex_plan, ex_out, ex_seeds, ex_cfg, ex_views, ex_size,
                                  ex_half_views, ex_half_rays, ex_shots);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
