#include "agg/agg.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace {

struct Failure {
    agg_status status;
};

void check(agg_status s) {
    if (s != AGG_OK) throw Failure{s};
}

void print_line(const char* line, void*) {
    std::printf("%s\n", line);
    std::fflush(stdout);
}

template <class T, void (*Destroy)(T*)>
struct Deleter {
    void operator()(T* p) const { Destroy(p); }
};
using ConfigPtr = std::unique_ptr<agg_config, Deleter<agg_config, agg_config_destroy>>;
using SetPtr = std::unique_ptr<agg_gaussians, Deleter<agg_gaussians, agg_gaussians_destroy>>;
using ImagePtr = std::unique_ptr<agg_image, Deleter<agg_image, agg_image_destroy>>;
using ModelPtr = std::unique_ptr<agg_model, Deleter<agg_model, agg_model_destroy>>;

// Preset, optional config file and one flag per config key; flags win.
struct ConfigOptions {
    std::string preset = "desk";
    std::string file;
    std::map<std::string, std::string> values;

    void attach(CLI::App* app, const std::vector<std::string>& keys, const std::vector<std::string>& skip = {}) {
        app->add_option("--preset", preset, "Configuration preset")->check(CLI::IsMember({"desk", "paper"}));
        app->add_option("--config", file, "Flat key = value configuration file")->check(CLI::ExistingFile);
        for (const auto& k : keys) {
            if (std::find(skip.begin(), skip.end(), k) != skip.end()) continue;
            app->add_option("--" + k, values[k], "Config key " + k)->group("Config keys");
        }
    }

    ConfigPtr build(CLI::App* app) const {
        agg_config* raw = nullptr;
        check(agg_config_create(preset.c_str(), &raw));
        ConfigPtr c(raw);
        if (!file.empty()) check(agg_config_load(c.get(), file.c_str()));
        for (const auto& [k, v] : values) {
            if (app->count("--" + k) > 0) check(agg_config_set(c.get(), k.c_str(), v.c_str()));
        }
        check(agg_config_validate(c.get()));
        return c;
    }
};

std::vector<std::string> config_keys() {
    agg_config* raw = nullptr;
    check(agg_config_create("desk", &raw));
    ConfigPtr c(raw);
    std::vector<std::string> keys;
    for (size_t i = 0; i < agg_config_key_count(c.get()); ++i) keys.emplace_back(agg_config_key(c.get(), i));
    return keys;
}

nlohmann::json metrics_json(const agg_eval_metrics& m) {
    return {{"psnr", m.psnr}, {"ssim", m.ssim},     {"l1", m.l1},         {"perceptual_proxy", m.perceptual_proxy},
            {"iou", m.iou},   {"objects", m.objects}, {"views", m.views}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Single-image to 3D Gaussian generation: data, training, inference and checks"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(agg_version()));

    std::vector<std::string> keys;
    try {
        keys = config_keys();
    } catch (const Failure& f) {
        std::fprintf(stderr, "error: %s\n", agg_last_error());
        return 2;
    }

    std::string data_dir = "data";
    std::string out_dir = "runs/full";
    bool force = false;

    auto* gen = app.add_subcommand("gen-data", "Generate synthetic objects, cameras and stored views");
    ConfigOptions gen_cfg;
    gen_cfg.attach(gen, keys);
    gen->add_option("--data", data_dir, "Dataset root");

    auto* fit = app.add_subcommand("fit-labels", "Fit per-object pseudo labels for the training split");
    ConfigOptions fit_cfg;
    fit_cfg.attach(fit, keys);
    fit->add_option("--data", data_dir, "Dataset root");
    fit->add_flag("--force", force, "Refit labels even when cached");

    auto* train = app.add_subcommand("train", "Run the three training stages (resumes completed stages)");
    ConfigOptions train_cfg;
    train_cfg.attach(train, keys);
    train->add_option("--data", data_dir, "Dataset root (built on demand)");
    train->add_option("--out", out_dir, "Run directory for checkpoints and metrics");

    std::string image_path, checkpoint, ply_path, output;
    bool coarse_only = false;
    int frames = 8;
    int size = 0;  // 0: per-subcommand default
    double elevation = 20.0, azimuth = 0.0, radius = 2.4, fov = 45.0;

    auto* inf = app.add_subcommand("infer", "Predict Gaussians from one image with a trained checkpoint");
    ConfigOptions inf_cfg;
    inf_cfg.attach(inf, keys, {"fov"});
    inf->add_option("--image", image_path, "Input PNG")->required()->check(CLI::ExistingFile);
    inf->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    inf->add_option("--out", output, "Output directory for the PLY and turntable PNGs")->required();
    inf->add_option("--frames", frames, "Turntable frames")->check(CLI::PositiveNumber);
    inf->add_option("--elevation", elevation, "Turntable elevation in degrees");
    inf->add_option("--radius", radius, "Turntable camera distance")->check(CLI::PositiveNumber);
    inf->add_option("--fov", fov, "Vertical field of view in degrees")->check(CLI::Range(1.0, 179.0));
    inf->add_option("--size", size, "Turntable image size")->check(CLI::PositiveNumber);
    inf->add_flag("--coarse-only", coarse_only, "Skip super resolution");

    auto* ren = app.add_subcommand("render", "Render a PLY from an orbit camera");
    ren->add_option("--ply", ply_path, "Input PLY")->required()->check(CLI::ExistingFile);
    ren->add_option("--azimuth", azimuth, "Azimuth in degrees");
    ren->add_option("--elevation", elevation, "Elevation in degrees");
    ren->add_option("--radius", radius, "Camera distance")->check(CLI::PositiveNumber);
    ren->add_option("--fov", fov, "Vertical field of view in degrees")->check(CLI::Range(1.0, 179.0));
    ren->add_option("--size", size, "Image size")->check(CLI::PositiveNumber);
    ren->add_option("--out", output, "Output PNG (default: <ply stem>_<azimuth>_<elevation>.png)");

    std::uint64_t seed = 0;
    int scenes = 20, gaussians = 32;
    bool suite = false;
    auto* grad = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");
    grad->add_option("--seed", seed, "First scene seed");
    grad->add_option("--scenes", scenes, "Random renderer scenes")->check(CLI::PositiveNumber);
    grad->add_option("--gaussians", gaussians, "Gaussians per scene")->check(CLI::Range(1, 64));
    grad->add_option("--size", size, "Render size")->check(CLI::Range(1, 64));
    grad->add_flag("--suite", suite, "Also check every network operation and layer");

    std::string full_ckpt, no_sr_ckpt, no_tf_ckpt, json_out;
    auto* ev = app.add_subcommand("eval", "Score held-out novel views (PSNR, SSIM, L1, perceptual proxy, IoU)");
    ev->add_option("--data", data_dir, "Dataset root");
    ev->add_option("--full", full_ckpt, "Full model checkpoint (stage 3)")->check(CLI::ExistingFile);
    ev->add_option("--no-sr", no_sr_ckpt, "Checkpoint whose coarse output is scored (w/o super resolution)")
        ->check(CLI::ExistingFile);
    ev->add_option("--no-tf", no_tf_ckpt, "Checkpoint of the model trained without the texture field")
        ->check(CLI::ExistingFile);
    ev->add_option("--json", json_out, "Write metrics as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (gen->parsed()) {
            auto cfg = gen_cfg.build(gen);
            check(agg_generate_dataset(cfg.get(), data_dir.c_str(), print_line, nullptr));
        } else if (fit->parsed()) {
            auto cfg = fit_cfg.build(fit);
            check(agg_fit_labels(cfg.get(), data_dir.c_str(), force ? 1 : 0, print_line, nullptr));
        } else if (train->parsed()) {
            auto cfg = train_cfg.build(train);
            agg_train_report r{};
            check(agg_train(cfg.get(), data_dir.c_str(), out_dir.c_str(), print_line, nullptr, &r));
            std::printf("probe rendering loss (full output): %.5f -> %.5f (ratio %.3f)\n", r.initial_full_loss,
                        r.final_full_loss, r.final_full_loss / r.initial_full_loss);
            std::printf("probe rendering loss (coarse output): %.5f -> %.5f\n", r.initial_coarse_loss,
                        r.final_coarse_loss);
            std::printf("probe psnr (full output): %.2f -> %.2f dB\n", r.initial_full_psnr, r.final_full_psnr);
            std::printf("stage-2 coarse parameters unchanged: %s\n", r.coarse_frozen_in_stage2 ? "yes" : "no");
            std::printf("iterations this run: %lld in %.1f s%s\n", static_cast<long long>(r.iterations), r.seconds,
                        r.resumed ? " (resumed)" : "");
        } else if (inf->parsed()) {
            ConfigPtr cfg;
            if (inf->count("--config") > 0) cfg = inf_cfg.build(inf);
            agg_model* raw_model = nullptr;
            check(agg_model_load(checkpoint.c_str(), cfg.get(), &raw_model));
            ModelPtr model(raw_model);
            agg_image* raw_image = nullptr;
            check(agg_image_load_png(image_path.c_str(), &raw_image));
            ImagePtr image(raw_image);
            agg_gaussians* raw_set = nullptr;
            agg_infer_report r{};
            check(agg_model_infer(model.get(), image.get(), coarse_only ? 1 : 0, &raw_set, &r));
            SetPtr set(raw_set);
            std::filesystem::create_directories(output);
            const std::string ply = (std::filesystem::path(output) / "gaussians.ply").string();
            check(agg_gaussians_save_ply(set.get(), ply.c_str()));
            check(agg_render_turntable(set.get(), frames, elevation, radius, fov, size > 0 ? size : 128,
                                       output.c_str(), "turntable"));
            std::printf("gaussians: %zu -> %s\n", r.count, ply.c_str());
            std::printf("forward passes: %lld, optimizer steps: %lld\n", static_cast<long long>(r.forward_passes),
                        static_cast<long long>(r.optimizer_steps));
            std::printf("time: encoder+coarse %.3f s, super resolution %.3f s, total %.3f s\n", r.coarse_seconds,
                        r.sr_seconds, r.total_seconds);
            std::printf("turntable: %d frames in %s\n", frames, output.c_str());
        } else if (ren->parsed()) {
            agg_gaussians* raw_set = nullptr;
            check(agg_gaussians_load_ply(ply_path.c_str(), &raw_set));
            SetPtr set(raw_set);
            agg_image* raw_image = nullptr;
            check(agg_render(set.get(), azimuth, elevation, radius, fov, size > 0 ? size : 256, &raw_image));
            ImagePtr image(raw_image);
            if (output.empty()) {
                char buf[64];
                std::snprintf(buf, sizeof buf, "_%g_%g.png", azimuth, elevation);
                output = (std::filesystem::path(ply_path).parent_path() /
                          (std::filesystem::path(ply_path).stem().string() + buf))
                             .string();
            }
            check(agg_image_save_png(image.get(), output.c_str()));
            std::printf("%s\n", output.c_str());
        } else if (grad->parsed()) {
            agg_gradcheck_report r{};
            check(agg_gradcheck(seed, scenes, gaussians, size > 0 ? size : 32, print_line, nullptr, &r));
            std::printf("renderer: %d/%d scenes pass, max rel err %.3e, %d entries, %.1f s\n", r.passed, r.scenes,
                        r.max_rel_err, r.entries_checked, r.seconds);
            bool ok = r.passed == r.scenes;
            if (suite) {
                agg_gradcheck_report s{};
                check(agg_fd_suite(seed, print_line, nullptr, &s));
                std::printf("network: %d/%d cases pass, max rel err %.3e, %.1f s\n", s.passed, s.scenes,
                            s.max_rel_err, s.seconds);
                ok = ok && s.passed == s.scenes;
            }
            std::printf("%s\n", ok ? "PASS" : "FAIL");
            return ok ? 0 : 1;
        } else if (ev->parsed()) {
            std::vector<std::pair<std::string, std::pair<std::string, bool>>> runs;
            if (!full_ckpt.empty()) runs.push_back({"full", {full_ckpt, false}});
            if (!no_sr_ckpt.empty()) runs.push_back({"w/o-SR", {no_sr_ckpt, true}});
            if (!no_tf_ckpt.empty()) runs.push_back({"w/o-TF", {no_tf_ckpt, false}});
            if (runs.empty()) {
                std::fprintf(stderr, "error: give at least one of --full, --no-sr, --no-tf\n");
                return 2;
            }
            nlohmann::json out = nlohmann::json::object();
            std::printf("%-8s %8s %7s %7s %9s %7s %6s\n", "variant", "PSNR", "SSIM", "L1", "proxy*", "IoU", "views");
            for (const auto& [name, run] : runs) {
                agg_model* raw_model = nullptr;
                check(agg_model_load(run.first.c_str(), nullptr, &raw_model));
                ModelPtr model(raw_model);
                agg_eval_metrics m{};
                check(agg_model_evaluate(model.get(), data_dir.c_str(), run.second ? 1 : 0, &m));
                std::printf("%-8s %8.3f %7.4f %7.4f %9.5f %7.4f %6d\n", name.c_str(), m.psnr, m.ssim, m.l1,
                            m.perceptual_proxy, m.iou, m.views);
                out[name] = metrics_json(m);
            }
            std::printf("* perceptual proxy (fixed random conv features) in place of a learned perceptual metric\n");
            if (!json_out.empty()) std::ofstream(json_out) << out.dump(2) << "\n";
        }
    } catch (const Failure& f) {
        std::fprintf(stderr, "error (%s): %s\n", agg_status_name(f.status), agg_last_error());
        return 1;
    }
    return 0;
}
