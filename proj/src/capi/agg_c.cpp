#include "agg/agg.h"

#include "agg/error.hpp"
#include "agg/nn/fd_check.hpp"
#include "agg/pipeline/infer.hpp"
#include "agg/pipeline/train.hpp"
#include "agg/ply.hpp"

#include <chrono>
#include <cstring>
#include <new>
#include <string>

struct agg_config {
    agg::TrainConfig config;
    std::vector<std::string> keys;
};

struct agg_gaussians {
    agg::GaussianSet set;
};

struct agg_image {
    agg::ImageRGBA image;
};

struct agg_model {
    std::unique_ptr<agg::Model> model;
    int stage = 0;
};

namespace {

thread_local std::string last_error;

agg_status fail(agg_status status, const std::string& message) {
    last_error = message;
    return status;
}

// Runs `f`, mapping exceptions onto status codes.
template <class F>
agg_status guarded(F&& f) {
    try {
        f();
        last_error.clear();
        return AGG_OK;
    } catch (const agg::Error& e) {
        return fail(static_cast<agg_status>(static_cast<int>(e.code())), e.what());
    } catch (const std::bad_alloc&) {
        return fail(AGG_ERR_INTERNAL, "out of memory");
    } catch (const std::exception& e) {
        return fail(AGG_ERR_INTERNAL, e.what());
    }
}

agg::LogFn make_log(agg_log_fn log, void* user) {
    if (!log) return {};
    return [log, user](const std::string& line) { log(line.c_str(), user); };
}

#define AGG_REQUIRE(cond, what) \
    if (!(cond)) return fail(AGG_ERR_INVALID_ARGUMENT, what)

}  // namespace

extern "C" {

const char* agg_last_error(void) { return last_error.c_str(); }

const char* agg_status_name(agg_status status) {
    if (status == AGG_OK) return "Ok";
    if (status == AGG_ERR_INTERNAL) return "Internal";
    if (status >= AGG_ERR_NON_FINITE_INPUT && status <= AGG_ERR_INVALID_ARGUMENT) {
        return agg::error_code_name(static_cast<agg::ErrorCode>(static_cast<int>(status)));
    }
    return "Unknown";
}

const char* agg_version(void) { return "0.1.0"; }

agg_status agg_config_create(const char* preset, agg_config** out) {
    AGG_REQUIRE(out, "out is null");
    *out = nullptr;
    const std::string p = preset ? preset : "desk";
    if (p != "desk" && p != "paper") return fail(AGG_ERR_CONFIG, "unknown preset '" + p + "' (desk or paper)");
    return guarded([&] {
        auto c = std::make_unique<agg_config>();
        c->config = p == "paper" ? agg::TrainConfig::paper() : agg::TrainConfig::desk();
        c->keys = c->config.keys();
        *out = c.release();
    });
}

void agg_config_destroy(agg_config* config) { delete config; }

agg_status agg_config_load(agg_config* config, const char* path) {
    AGG_REQUIRE(config && path, "null argument");
    return guarded([&] { config->config.load(path); });
}

agg_status agg_config_set(agg_config* config, const char* key, const char* value) {
    AGG_REQUIRE(config && key && value, "null argument");
    return guarded([&] { config->config.set(key, value); });
}

agg_status agg_config_validate(const agg_config* config) {
    AGG_REQUIRE(config, "null config");
    return guarded([&] { config->config.validate(); });
}

size_t agg_config_key_count(const agg_config* config) { return config ? config->keys.size() : 0; }

const char* agg_config_key(const agg_config* config, size_t index) {
    if (!config || index >= config->keys.size()) return nullptr;
    return config->keys[index].c_str();
}

agg_status agg_config_to_text(const agg_config* config, char* buffer, size_t capacity, size_t* needed) {
    AGG_REQUIRE(config, "null config");
    return guarded([&] {
        const std::string text = config->config.to_text();
        if (needed) *needed = text.size() + 1;
        if (buffer && capacity > 0) {
            const size_t n = std::min(capacity - 1, text.size());
            std::memcpy(buffer, text.data(), n);
            buffer[n] = '\0';
        }
    });
}

agg_status agg_gaussians_load_ply(const char* path, agg_gaussians** out) {
    AGG_REQUIRE(path && out, "null argument");
    *out = nullptr;
    return guarded([&] { *out = new agg_gaussians{agg::import_ply(path)}; });
}

agg_status agg_gaussians_save_ply(const agg_gaussians* set, const char* path) {
    AGG_REQUIRE(set && path, "null argument");
    return guarded([&] { agg::export_ply(set->set, path); });
}

size_t agg_gaussians_count(const agg_gaussians* set) { return set ? set->set.size() : 0; }

agg_status agg_gaussians_get(const agg_gaussians* set, double* means, double* colors, double* opacities,
                             double* scale) {
    AGG_REQUIRE(set, "null set");
    const auto& s = set->set;
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            if (means) means[3 * i + k] = s.means[i][k];
            if (colors) colors[3 * i + k] = s.colors[i][k];
        }
        if (opacities) opacities[i] = s.opacities[i];
    }
    if (scale) *scale = s.scale;
    last_error.clear();
    return AGG_OK;
}

void agg_gaussians_destroy(agg_gaussians* set) { delete set; }

agg_status agg_image_load_png(const char* path, agg_image** out) {
    AGG_REQUIRE(path && out, "null argument");
    *out = nullptr;
    return guarded([&] { *out = new agg_image{agg::read_png(path)}; });
}

agg_status agg_image_save_png(const agg_image* image, const char* path) {
    AGG_REQUIRE(image && path, "null argument");
    return guarded([&] { agg::write_png(image->image, path); });
}

agg_status agg_image_size(const agg_image* image, int* width, int* height) {
    AGG_REQUIRE(image, "null image");
    if (width) *width = image->image.width;
    if (height) *height = image->image.height;
    last_error.clear();
    return AGG_OK;
}

agg_status agg_image_get(const agg_image* image, double* rgba) {
    AGG_REQUIRE(image && rgba, "null argument");
    const auto& im = image->image;
    for (std::size_t p = 0; p < im.pixels(); ++p) {
        for (int c = 0; c < 3; ++c) rgba[4 * p + c] = im.rgb[3 * p + c];
        rgba[4 * p + 3] = im.alpha[p];
    }
    last_error.clear();
    return AGG_OK;
}

void agg_image_destroy(agg_image* image) { delete image; }

agg_status agg_render(const agg_gaussians* set, double azimuth, double elevation, double radius, double fov, int size,
                      agg_image** out) {
    AGG_REQUIRE(set && out, "null argument");
    *out = nullptr;
    if (size < 1 || !(radius > 0) || !(fov > 0 && fov < 180)) return fail(AGG_ERR_INVALID_RANGE, "bad camera");
    return guarded([&] {
        *out = new agg_image{agg::rasterize(set->set, agg::orbit_camera(azimuth, elevation, radius, size, fov))};
    });
}

agg_status agg_render_turntable(const agg_gaussians* set, int frames, double elevation, double radius, double fov,
                                int size, const char* directory, const char* prefix) {
    AGG_REQUIRE(set && directory && prefix, "null argument");
    return guarded([&] {
        agg::TurntableOptions o{frames, elevation, radius, fov, size};
        const auto images = agg::turntable(set->set, o);
        std::filesystem::create_directories(directory);
        for (std::size_t k = 0; k < images.size(); ++k) {
            agg::write_png(images[k], std::filesystem::path(directory) /
                                          (std::string(prefix) + "_" + std::to_string(k) + ".png"));
        }
    });
}

agg_status agg_generate_dataset(const agg_config* config, const char* root, agg_log_fn log, void* user) {
    AGG_REQUIRE(config && root, "null argument");
    return guarded([&] { agg::generate_dataset(config->config, root, make_log(log, user)); });
}

agg_status agg_fit_labels(const agg_config* config, const char* root, int force, agg_log_fn log, void* user) {
    AGG_REQUIRE(config && root, "null argument");
    return guarded([&] { agg::fit_labels(config->config, root, force != 0, make_log(log, user)); });
}

agg_status agg_train(const agg_config* config, const char* data_root, const char* out_dir, agg_log_fn log, void* user,
                     agg_train_report* report) {
    AGG_REQUIRE(config && data_root && out_dir, "null argument");
    return guarded([&] {
        const agg::TrainResult r = agg::train(config->config, data_root, out_dir, make_log(log, user));
        if (report) {
            report->initial_full_loss = r.initial.full_loss;
            report->final_full_loss = r.final.full_loss;
            report->initial_coarse_loss = r.initial.coarse_loss;
            report->final_coarse_loss = r.final.coarse_loss;
            report->initial_full_psnr = r.initial.full_psnr;
            report->final_full_psnr = r.final.full_psnr;
            report->iterations = r.iterations;
            report->coarse_frozen_in_stage2 = r.coarse_frozen_in_stage2 ? 1 : 0;
            report->resumed = r.resumed ? 1 : 0;
            report->seconds = r.seconds;
        }
    });
}

agg_status agg_model_load(const char* checkpoint, const agg_config* expected, agg_model** out) {
    AGG_REQUIRE(checkpoint && out, "null argument");
    *out = nullptr;
    return guarded([&] {
        auto m = std::make_unique<agg_model>();
        m->model = expected ? agg::load_model(checkpoint, expected->config.model) : agg::load_model(checkpoint);
        m->stage = agg::checkpoint_stage(checkpoint);
        *out = m.release();
    });
}

void agg_model_destroy(agg_model* model) { delete model; }

int agg_model_stage(const agg_model* model) { return model ? model->stage : 0; }

agg_status agg_model_infer(agg_model* model, const agg_image* image, int coarse_only, agg_gaussians** out,
                           agg_infer_report* report) {
    AGG_REQUIRE(model && image && out, "null argument");
    *out = nullptr;
    return guarded([&] {
        agg::InferenceResult r = agg::infer(*model->model, image->image, coarse_only != 0);
        if (report) {
            report->coarse_seconds = r.coarse_seconds;
            report->sr_seconds = r.sr_seconds;
            report->total_seconds = r.total_seconds;
            report->forward_passes = r.forward_passes;
            report->optimizer_steps = r.optimizer_steps;
            report->count = r.set.size();
        }
        *out = new agg_gaussians{std::move(r.set)};
    });
}

agg_status agg_model_evaluate(agg_model* model, const char* data_root, int coarse_only, agg_eval_metrics* metrics) {
    AGG_REQUIRE(model && data_root && metrics, "null argument");
    return guarded([&] {
        const auto split = agg::read_split(data_root);
        const agg::EvalMetrics m = agg::evaluate(*model->model, data_root, split.test, coarse_only != 0, "");
        *metrics = {m.psnr, m.ssim, m.l1, m.perceptual_proxy, m.iou, m.objects, m.views};
    });
}

agg_status agg_gradcheck(uint64_t seed, int scenes, int gaussians, int size, agg_log_fn log, void* user,
                         agg_gradcheck_report* report) {
    AGG_REQUIRE(report, "null report");
    if (scenes < 1 || gaussians < 1 || size < 1) return fail(AGG_ERR_INVALID_RANGE, "counts must be positive");
    const auto say = make_log(log, user);
    return guarded([&] {
        const auto t0 = std::chrono::steady_clock::now();
        *report = {};
        for (int i = 0; i < scenes; ++i) {
            agg::GradcheckOptions o;
            o.gaussians = gaussians;
            o.size = size;
            const agg::GradcheckReport r = agg::gradcheck(seed + static_cast<uint64_t>(i), o);
            const double worst = std::max({r.max_rel_err_means, r.max_rel_err_colors, r.max_rel_err_opacities});
            report->max_rel_err = std::max(report->max_rel_err, worst);
            report->entries_checked += r.entries_checked;
            report->passed += r.pass ? 1 : 0;
            ++report->scenes;
            if (say) {
                char buf[200];
                std::snprintf(buf, sizeof buf, "scene seed %llu: %s max rel err %.3e (%d entries, %d refined)",
                              static_cast<unsigned long long>(seed + static_cast<uint64_t>(i)),
                              r.pass ? "pass" : "FAIL", worst, r.entries_checked, r.entries_refined);
                say(buf);
            }
        }
        report->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });
}

agg_status agg_fd_suite(uint64_t seed, agg_log_fn log, void* user, agg_gradcheck_report* report) {
    AGG_REQUIRE(report, "null report");
    const auto say = make_log(log, user);
    return guarded([&] {
        const auto t0 = std::chrono::steady_clock::now();
        *report = {};
        for (const auto& r : agg::nn::run_fd_suite(seed)) {
            report->max_rel_err = std::max(report->max_rel_err, r.max_rel_err);
            report->entries_checked += r.checked;
            report->passed += r.pass ? 1 : 0;
            ++report->scenes;
            if (say) {
                char buf[200];
                std::snprintf(buf, sizeof buf, "%-26s %s max rel err %.3e (%d entries)", r.name.c_str(),
                              r.pass ? "pass" : "FAIL", r.max_rel_err, r.checked);
                say(buf);
            }
        }
        report->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    });
}

}  // extern "C"
