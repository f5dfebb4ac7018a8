#include "agg/pipeline/train.hpp"

#include "agg/error.hpp"
#include "agg/model/losses.hpp"
#include "agg/nn/ops.hpp"
#include "agg/nn/param_store.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace agg {

namespace fs = std::filesystem;
using nlohmann::json;

TrainingExample make_example(const SceneSample& scene, const GaussianSet& ground_truth, const GaussianSet& label,
                             const RasterSettings& settings) {
    TrainingExample ex;
    ex.scene = scene;
    const GaussianSet gt = rotate_set(ground_truth, scene.object_ticks);
    ex.input = rasterize(gt, scene.input.camera(), settings);
    for (const auto& v : scene.views) {
        ex.cameras.push_back(v.camera());
        ex.targets.push_back(image_to_tensor(rasterize(gt, ex.cameras.back(), settings)));
    }
    ex.label = rotate_set(label, scene.object_ticks);
    return ex;
}

LossTerms example_loss(const GaussianTensors& pred, const TrainingExample& example, double perceptual_weight,
                       double render_weight, double chamfer_weight) {
    if (example.cameras.empty()) throw Error(ErrorCode::InvalidArgument, "example has no supervision views");
    LossTerms t;
    nn::Tensor render;
    for (std::size_t v = 0; v < example.cameras.size(); ++v) {
        nn::Tensor image = render_tensor(pred, example.cameras[v]);
        nn::Tensor l = rendering_loss(image, example.targets[v], perceptual_weight);
        render = render.defined() ? nn::add(render, l) : l;
        t.psnr += psnr(tensor_to_image(image), tensor_to_image(example.targets[v]));
    }
    const double n = static_cast<double>(example.cameras.size());
    render = nn::scale(render, 1.0 / n);
    t.psnr /= n;
    t.render = render.item();
    t.total = nn::scale(render, render_weight);
    if (chamfer_weight > 0) {
        nn::Tensor c = chamfer_attribute_loss(pred, example.label);
        t.chamfer = c.item();
        t.total = nn::add(t.total, nn::scale(c, chamfer_weight));
    }
    return t;
}

std::pair<double, double> ramp_weights(const TrainConfig& config, int epoch) {
    const int last = std::max(config.coarse_epochs - 1, 1);
    const double t = std::clamp(static_cast<double>(epoch) / last, 0.0, 1.0);
    return {config.chamfer_start + (config.chamfer_end - config.chamfer_start) * t,
            config.render_start + (config.render_end - config.render_start) * t};
}

double coarse_learning_rate(const TrainConfig& config, std::int64_t iteration) {
    const std::int64_t per = config.epoch_iterations();
    const std::int64_t total = static_cast<std::int64_t>(config.coarse_epochs) * per;
    const std::int64_t warm = static_cast<std::int64_t>(config.warmup_epochs) * per;
    if (iteration < warm) return config.lr_max * static_cast<double>(iteration + 1) / static_cast<double>(warm);
    const double span = static_cast<double>(std::max<std::int64_t>(total - warm, 1));
    const double t = std::clamp(static_cast<double>(iteration - warm) / span, 0.0, 1.0);
    return config.lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

std::string checkpoint_meta(const ModelConfig& config, int stage, const std::string& extra_json) {
    json j{{"model", json::parse(model_config_json(config))}, {"stage", stage}, {"extra", json::parse(extra_json)}};
    return j.dump();
}

namespace {

json parse_meta(const fs::path& checkpoint) {
    try {
        json j = json::parse(nn::read_checkpoint_meta(checkpoint));
        if (!j.contains("model")) throw Error(ErrorCode::CheckpointMismatch, "checkpoint carries no model config");
        return j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::CheckpointMismatch, std::string("checkpoint meta: ") + e.what());
    }
}

}  // namespace

int checkpoint_stage(const fs::path& checkpoint) { return parse_meta(checkpoint).value("stage", 0); }

std::unique_ptr<Model> load_model(const fs::path& checkpoint) {
    const json meta = parse_meta(checkpoint);
    auto model = std::make_unique<Model>(model_config_from_json(meta.at("model").dump()));
    nn::load_checkpoint(model->params(), checkpoint);
    return model;
}

std::unique_ptr<Model> load_model(const fs::path& checkpoint, const ModelConfig& config) {
    const json meta = parse_meta(checkpoint);
    if (meta.at("model") != json::parse(model_config_json(config))) {
        throw Error(ErrorCode::CheckpointMismatch, checkpoint.string() + " was written for a different model config");
    }
    auto model = std::make_unique<Model>(config);
    nn::load_checkpoint(model->params(), checkpoint);
    return model;
}

namespace {

json probe_json(const ProbeResult& p) {
    return {{"coarse_loss", p.coarse_loss}, {"full_loss", p.full_loss}, {"coarse_psnr", p.coarse_psnr},
            {"full_psnr", p.full_psnr}};
}

ProbeResult probe_from_json(const json& j) {
    ProbeResult p;
    p.coarse_loss = j.at("coarse_loss").get<double>();
    p.full_loss = j.at("full_loss").get<double>();
    p.coarse_psnr = j.at("coarse_psnr").get<double>();
    p.full_psnr = j.at("full_psnr").get<double>();
    return p;
}

// Rendering loss of the coarse and refined outputs on fixed examples.
ProbeResult run_probe(Model& model, const std::vector<TrainingExample>& probes, double perceptual_weight) {
    nn::NoGradGuard guard;
    ProbeResult r;
    for (const auto& ex : probes) {
        const ImageFeatures f = model.encode(ex.input);
        const GaussianTensors coarse = model.coarse(f);
        const GaussianTensors full = model.refine(coarse, f);
        const LossTerms c = example_loss(coarse, ex, perceptual_weight, 1.0, 0.0);
        const LossTerms s = example_loss(full, ex, perceptual_weight, 1.0, 0.0);
        r.coarse_loss += c.render;
        r.coarse_psnr += c.psnr;
        r.full_loss += s.render;
        r.full_psnr += s.psnr;
    }
    const double n = static_cast<double>(probes.size());
    r.coarse_loss /= n;
    r.coarse_psnr /= n;
    r.full_loss /= n;
    r.full_psnr /= n;
    return r;
}

std::mt19937_64 seeded(std::initializer_list<std::uint64_t> parts) {
    std::vector<std::uint32_t> words;
    for (std::uint64_t p : parts) {
        words.push_back(static_cast<std::uint32_t>(p));
        words.push_back(static_cast<std::uint32_t>(p >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

CameraRange camera_range(const TrainConfig& c) { return {c.elevation_min, c.elevation_max, c.camera_radius, c.fov}; }

// Keeps only records of stages before `stage`, so a resumed run matches a fresh one.
void truncate_metrics(const fs::path& path, int stage) {
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    std::vector<std::string> keep;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            if (json::parse(line).value("stage", 0) < stage) keep.push_back(line);
        } catch (const json::exception&) {
        }
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : keep) out << l << "\n";
}

std::vector<std::vector<double>> snapshot(const nn::ParamStore& store, const std::vector<std::string>& prefixes) {
    std::vector<std::vector<double>> s;
    for (const auto& e : store.entries()) {
        for (const auto& p : prefixes) {
            if (e.name.starts_with(p)) {
                s.emplace_back(e.value.data().begin(), e.value.data().end());
                break;
            }
        }
    }
    return s;
}

std::string fmt(const char* f, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

}  // namespace

TrainResult train(const TrainConfig& config, const fs::path& data_root, const fs::path& out_dir, const LogFn& log) {
    config.validate();
    const auto start = std::chrono::steady_clock::now();
    auto say = [&](const std::string& s) {
        if (log) log(s);
    };
    const DatasetSplit split = ensure_dataset(config, data_root, log);
    if (split.train.empty()) throw Error(ErrorCode::ConfigError, "no training objects");
    fs::create_directories(out_dir);
    {
        std::ofstream cfg(out_dir / "config.txt");
        cfg << config.to_text();
    }

    std::vector<GaussianSet> ground_truth, labels;
    for (const auto& id : split.train) {
        ground_truth.push_back(ground_truth_gaussians(load_object(data_root, id)));
        labels.push_back(load_label(data_root, id));
    }
    const CameraRange range = camera_range(config);
    const int input_size = config.model.image_size;
    std::vector<TrainingExample> probes;
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        auto rng = seeded({config.seed, 0x9e0be, i});
        const SceneSample s =
            normalize_scene(sample_world_scene(rng, config.views_per_iteration, range, input_size, config.render_size));
        probes.push_back(make_example(s, ground_truth[i], labels[i]));
    }

    auto model = std::make_unique<Model>(config.model);
    const fs::path metrics_path = out_dir / "metrics.jsonl";
    TrainResult result;
    json probe_history = json::array();
    double prior_seconds = 0.0;  // training time recorded by earlier runs

    int completed = 0;
    for (int stage = 3; stage >= 1; --stage) {
        const fs::path ckpt = out_dir / ("stage" + std::to_string(stage) + ".ckpt");
        if (!fs::exists(ckpt)) continue;
        model = load_model(ckpt, config.model);
        const json meta = parse_meta(ckpt);
        probe_history = meta.at("extra").at("probes");
        prior_seconds = meta.at("extra").value("seconds", 0.0);
        if (meta.at("extra").contains("coarse_unchanged")) {
            result.coarse_frozen_in_stage2 = meta.at("extra").at("coarse_unchanged").get<bool>();
        }
        completed = stage;
        result.resumed = true;
        say(fmt("resuming after stage %d from %s", stage, ckpt.string().c_str()));
        break;
    }
    nn::ParamStore& params = model->params();

    if (completed == 0) {
        truncate_metrics(metrics_path, 0);
        result.initial = run_probe(*model, probes, config.perceptual_weight);
        probe_history = json::array({probe_json(result.initial)});
        std::ofstream m(metrics_path, std::ios::app);
        json rec{{"stage", 0}, {"type", "probe"}};
        rec.update(probe_json(result.initial));
        m << rec.dump() << "\n";
        say(fmt("initial probe: coarse loss %.5f, full loss %.5f, full psnr %.2f dB", result.initial.coarse_loss,
                result.initial.full_loss, result.initial.full_psnr));
    } else {
        result.initial = probe_from_json(probe_history.at(0));
    }

    const int per_epoch = config.epoch_iterations();
    const int epochs[3] = {config.coarse_epochs, config.sr_epochs, config.joint_epochs};
    for (int stage = completed + 1; stage <= 3; ++stage) {
        truncate_metrics(metrics_path, stage);
        // Each stage starts with a fresh optimizer so a resumed run matches a continuous one.
        params.reset_optimizer();
        model->set_coarse_trainable(stage != 2);
        params.set_trainable("sr.", stage != 1);
        const std::vector<std::string> coarse_prefixes{"encoder.", "geometry.", "texture."};
        const auto before = stage == 2 ? snapshot(params, coarse_prefixes) : std::vector<std::vector<double>>{};
        std::ofstream metrics(metrics_path, std::ios::app);
        std::int64_t stage_iteration = 0;
        for (int epoch = 0; epoch < epochs[stage - 1]; ++epoch) {
            auto order_rng = seeded({config.seed, static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(epoch)});
            std::vector<std::size_t> order(split.train.size());
            std::iota(order.begin(), order.end(), 0);
            std::shuffle(order.begin(), order.end(), order_rng);
            const auto [w_chamfer, w_render] =
                stage == 1 ? ramp_weights(config, epoch) : std::pair<double, double>{0.0, 1.0};
            double epoch_loss = 0.0, epoch_psnr = 0.0, lr = 0.0;
            for (int it = 0; it < per_epoch; ++it, ++stage_iteration) {
                const std::size_t obj = order[static_cast<std::size_t>(it) % order.size()];
                auto rng = seeded({config.seed, static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(epoch),
                                   static_cast<std::uint64_t>(it), 0x17});
                const SceneSample s = normalize_scene(
                    sample_world_scene(rng, config.views_per_iteration, range, input_size, config.render_size));
                const TrainingExample ex = make_example(s, ground_truth[obj], labels[obj]);
                const ImageFeatures f = model->encode(ex.input);
                GaussianTensors pred = model->coarse(f);
                if (stage > 1) pred = model->refine(pred, f);
                const LossTerms t = example_loss(pred, ex, config.perceptual_weight, w_render, w_chamfer);
                const double total = t.total.item();
                if (!std::isfinite(total)) throw Error(ErrorCode::NonFiniteInput, "training loss became non-finite");
                lr = stage == 1 ? coarse_learning_rate(config, stage_iteration)
                                : (stage == 2 ? config.sr_lr : config.joint_lr);
                nn::backward(t.total, params);
                params.adam_step(lr);
                ++result.iterations;
                epoch_loss += t.render;
                epoch_psnr += t.psnr;
                json rec{{"stage", stage},       {"type", "iteration"}, {"epoch", epoch},
                         {"iteration", it},      {"step", params.step()}, {"object", split.train[obj]},
                         {"lr", lr},             {"loss", total},       {"render", t.render},
                         {"chamfer", t.chamfer}, {"w_chamfer", w_chamfer}, {"w_render", w_render},
                         {"psnr", t.psnr}};
                metrics << rec.dump() << "\n";
            }
            metrics.flush();
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            say(fmt("stage %d epoch %d/%d: render %.5f psnr %.2f dB lr %.2e (%.0f s)", stage, epoch + 1,
                    epochs[stage - 1], epoch_loss / per_epoch, epoch_psnr / per_epoch, lr, secs));
        }
        json extra{{"probes", probe_history}};
        extra["seconds"] = prior_seconds + std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (stage == 2) {
            result.coarse_frozen_in_stage2 = snapshot(params, coarse_prefixes) == before;
            extra["coarse_unchanged"] = result.coarse_frozen_in_stage2;
            say(std::string("stage 2 coarse parameters ") + (result.coarse_frozen_in_stage2 ? "unchanged" : "CHANGED"));
        }
        const ProbeResult p = run_probe(*model, probes, config.perceptual_weight);
        probe_history.push_back(probe_json(p));
        extra["probes"] = probe_history;
        json rec{{"stage", stage}, {"type", "probe"}};
        rec.update(probe_json(p));
        metrics << rec.dump() << "\n";
        metrics.close();
        nn::save_checkpoint(params, out_dir / ("stage" + std::to_string(stage) + ".ckpt"),
                            checkpoint_meta(config.model, stage, extra.dump()));
        say(fmt("stage %d probe: coarse loss %.5f, full loss %.5f, full psnr %.2f dB", stage, p.coarse_loss,
                p.full_loss, p.full_psnr));
    }

    for (const auto& p : probe_history) result.after_stage.push_back(probe_from_json(p));
    result.after_stage.erase(result.after_stage.begin());
    result.final = result.after_stage.empty() ? result.initial : result.after_stage.back();
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.total_seconds = prior_seconds + result.seconds;

    json summary{{"initial", probe_json(result.initial)},
                 {"final", probe_json(result.final)},
                 {"iterations_this_run", result.iterations},
                 {"coarse_frozen_in_stage2", result.coarse_frozen_in_stage2},
                 {"resumed", result.resumed},
                 {"seconds_this_run", result.seconds},
                 {"seconds_total", result.total_seconds}};
    std::ofstream(out_dir / "summary.json") << summary.dump(2) << "\n";
    return result;
}

}  // namespace agg
