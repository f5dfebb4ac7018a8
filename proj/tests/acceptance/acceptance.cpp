// Runs every acceptance check and prints one PASS/FAIL line per criterion.
// Training runs are cached under --work and resumed on later invocations.

#include "agg/model/fitter.hpp"
#include "agg/model/losses.hpp"
#include "agg/model/model_ops.hpp"
#include "agg/nn/fd_check.hpp"
#include "agg/pipeline/config.hpp"
#include "agg/pipeline/dataset.hpp"
#include "agg/pipeline/infer.hpp"
#include "agg/pipeline/synthetic.hpp"
#include "agg/pipeline/train.hpp"
#include "agg/render.hpp"
#include "common/oracles.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

using namespace agg;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// PSNR gain of the sphere-fixture fit measured by a reference run; a later
// run may fall short of it by at most kGainTolerance.
constexpr double kSphereGainReference = 43.49;
constexpr double kGainTolerance = 0.5;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome gradient_fidelity() {
    const auto t0 = std::chrono::steady_clock::now();
    int passed = 0;
    double worst = 0.0;
    GradcheckOptions o;
    o.gaussians = 64;
    o.size = 32;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const GradcheckReport r = gradcheck(seed, o);
        passed += r.pass ? 1 : 0;
        worst = std::max({worst, r.max_rel_err_means, r.max_rel_err_colors, r.max_rel_err_opacities});
    }
    const double secs = seconds_since(t0);
    return {passed == 20 && worst < 1e-3 && secs < 120.0,
            fmt("%d/20 scenes (64 Gaussians, 32x32), max rel err %.2e (< 1e-3), %.1f s (< 120 s)", passed, worst,
                secs)};
}

Outcome blending_oracle() {
    double worst = 0.0, bare = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        GradcheckOptions o;
        o.gaussians = 64;
        o.size = 32;
        const GradcheckScene s = make_gradcheck_scene(seed + 1000, o);
        const ImageRGBA fast = rasterize(s.set, s.camera, s.settings);
        worst = std::max(worst, oracle::max_abs_diff(fast, oracle::direct_blend(s.set, s.camera, s.settings.background,
                                                                                s.settings.min_alpha)));
        bare = std::max(bare, oracle::max_abs_diff(fast, oracle::direct_blend(s.set, s.camera, s.settings.background, 0.0)));
    }
    return {worst <= 1.0 / 255.0,
            fmt("10 scenes (64 Gaussians, 32x32), max channel diff %.2e (<= %.2e); without the 1/255 contribution "
                "floor in the reference: %.2e (informational)",
                worst, 1.0 / 255.0, bare)};
}

Outcome chamfer_oracle() {
    std::mt19937_64 rng(31337);
    std::uniform_int_distribution<std::size_t> count(1, 128);
    int exact = 0, unequal = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const GaussianSet a = oracle::random_set(count(rng), rng);
        const GaussianSet b = oracle::random_set(count(rng), rng);
        unequal += a.size() != b.size() ? 1 : 0;
        exact += chamfer_attribute_loss(a, b) == oracle::naive_chamfer(a, b) ? 1 : 0;
    }
    const GaussianSet same = oracle::random_set(100, rng);
    const double self = chamfer_attribute_loss(same, same);
    return {exact == 100 && unequal > 0 && self == 0.0,
            fmt("%d/100 pairs bitwise equal to the double loop (%d with unequal counts), identical-set loss %g", exact,
                unequal, self)};
}

Outcome expansion_exactness() {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int cases = 0, exact = 0;
    for (std::int64_t n : {1, 2, 17, 256, 1024}) {
        for (std::int64_t c : {1, 3, 8, 32}) {
            for (std::int64_t r : {1, 2, 4, 8}) {
                std::vector<double> v(static_cast<std::size_t>(n * c * r));
                for (double& x : v) x = u(rng);
                const nn::Tensor f = nn::Tensor::from_data({n, c * r}, v);
                const nn::Tensor e = expand_features(f, r);
                const nn::Tensor back = collapse_features(e, r);
                ++cases;
                exact += e.shape() == nn::Shape{n * r, c} && std::ranges::equal(back.data(), f.data()) ? 1 : 0;
            }
        }
    }
    return {exact == cases, fmt("%d/%d (N, C, r) cases round-trip bitwise, N <= 1024, r in {1,2,4,8}", exact, cases)};
}

Outcome fd_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto reports = nn::run_fd_suite(0);
    const double secs = seconds_since(t0);
    int passed = 0;
    double worst = 0.0;
    std::string failed;
    for (const auto& r : reports) {
        passed += r.pass ? 1 : 0;
        worst = std::max(worst, r.max_rel_err);
        if (!r.pass) failed += " " + r.name;
    }
    const bool ok = passed == static_cast<int>(reports.size()) && secs < 300.0;
    return {ok, fmt("%d/%zu layer checks, max rel err %.2e (< 1e-3), %.1f s (< 300 s)%s%s", passed, reports.size(),
                    worst, secs, failed.empty() ? "" : "; failing:", failed.c_str())};
}

Outcome fitting_regression() {
    const SphereFixture f = make_sphere_fixture(0);
    FitOptions o;
    o.scale = f.target.scale;
    o.max_iterations = 2000;
    const FitResult r = fit_pseudo_label(f.views, f.init_means, o);
    const double gain = r.final_psnr - r.initial_psnr;
    const double floor = std::max(6.0, kSphereGainReference - kGainTolerance);
    return {gain >= floor && r.iterations <= 2000,
            fmt("PSNR %.2f -> %.2f dB, gain %.2f dB (>= %.2f) in %d iterations (%s)", r.initial_psnr, r.final_psnr,
                gain, floor, r.iterations, fit_status_name(r.status))};
}

struct Runs {
    TrainConfig config;
    fs::path data;
    fs::path full;
    fs::path no_tf;
    TrainResult full_result;
    TrainResult no_tf_result;
};

LogFn progress(const std::string& tag) {
    return [tag](const std::string& line) { std::cerr << "  [" << tag << "] " << line << "\n"; };
}

Outcome desk_overfit(const Runs& runs) {
    const TrainResult& r = runs.full_result;
    const double ratio = r.final.full_loss / r.initial.full_loss;
    const bool ok = ratio <= 0.5 && r.coarse_frozen_in_stage2 && r.total_seconds <= 3600.0;
    return {ok, fmt("probe rendering loss %.4f -> %.4f (ratio %.3f <= 0.5), stage-2 coarse parameters %s, "
                    "training %.0f s (<= 3600 s)",
                    r.initial.full_loss, r.final.full_loss, ratio,
                    r.coarse_frozen_in_stage2 ? "bitwise unchanged" : "CHANGED", r.total_seconds)};
}

Outcome ablation_ordering(const Runs& runs, json& record) {
    const auto split = read_split(runs.data, runs.config);
    auto full = load_model(runs.full / "stage3.ckpt");
    auto coarse = load_model(runs.full / "stage1.ckpt");
    auto no_tf = load_model(runs.no_tf / "stage3.ckpt");
    const EvalMetrics a = evaluate(*full, runs.data, split.test, false, "full");
    const EvalMetrics b = evaluate(*coarse, runs.data, split.test, true, "w/o SR");
    const EvalMetrics c = evaluate(*no_tf, runs.data, split.test, false, "w/o TF");
    for (const EvalMetrics* m : {&a, &b, &c}) {
        record[m->variant] = {{"psnr", m->psnr}, {"ssim", m->ssim}, {"l1", m->l1},
                              {"perceptual_proxy", m->perceptual_proxy}, {"iou", m->iou}};
    }
    const bool psnr_order = a.psnr > b.psnr;
    const bool iou_worst = c.iou < a.iou && c.iou < b.iou;
    return {psnr_order && iou_worst,
            fmt("PSNR full %.2f vs w/o SR %.2f dB (%s); IoU full %.3f, w/o SR %.3f, w/o TF %.3f (w/o TF %s)", a.psnr,
                b.psnr, psnr_order ? "full higher" : "full NOT higher", a.iou, b.iou, c.iou,
                iou_worst ? "worst" : "NOT worst")};
}

Outcome amortization(const Runs& runs) {
    const auto split = read_split(runs.data, runs.config);
    auto model = load_model(runs.full / "stage3.ckpt");
    double slowest = 0.0;
    bool contract = true;
    std::int64_t passes = 0, steps = 0;
    for (const auto& id : split.test) {
        const ImageRGBA input = load_views(runs.data, id).front().image;
        const InferenceResult r = infer(*model, input);
        contract = contract && r.forward_passes == 2 && r.optimizer_steps == 0 &&
                   r.set.size() == static_cast<std::size_t>(runs.config.model.coarse_count * runs.config.model.ratio);
        passes = r.forward_passes;
        steps = r.optimizer_steps;
        slowest = std::max(slowest, r.total_seconds);
    }
    return {contract && slowest < 5.0,
            fmt("%lld forward passes, %lld optimizer steps per object, slowest inference %.3f s (< 5 s) over %zu objects",
                static_cast<long long>(passes), static_cast<long long>(steps), slowest, split.test.size())};
}

Outcome equivariance(const Runs& runs) {
    const auto split = read_split(runs.data, runs.config);
    auto model = load_model(runs.full / "stage3.ckpt");
    const TrainConfig& c = runs.config;
    const CameraRange range{c.elevation_min, c.elevation_max, c.camera_radius, c.fov};
    std::mt19937_64 rng(2718);
    bool bitwise = true;
    double worst = 0.0;
    int trials = 0;
    for (const auto& id : split.train) {
        const GaussianSet gt = ground_truth_gaussians(load_object(runs.data, id));
        const GaussianSet label = load_label(runs.data, id);
        const SceneSample world = sample_world_scene(rng, c.views_per_iteration, range, c.model.image_size, c.render_size);
        const int t = std::uniform_int_distribution<int>(1, kAzimuthTicks - 1)(rng);
        const TrainingExample a = make_example(normalize_scene(world), gt, label);
        const TrainingExample b = make_example(normalize_scene(rotate_scene(world, t)), gt, label);
        bitwise = bitwise && a.input.rgb == b.input.rgb && a.input.alpha == b.input.alpha;
        for (std::size_t v = 0; v < a.targets.size(); ++v) {
            bitwise = bitwise && std::ranges::equal(a.targets[v].data(), b.targets[v].data());
        }
        auto loss = [&](const TrainingExample& ex) {
            const ImageFeatures f = model->encode(ex.input);
            return example_loss(model->refine(model->coarse(f), f), ex, c.perceptual_weight, 1.0, 1.0).total.item();
        };
        worst = std::max(worst, std::abs(loss(a) - loss(b)));
        ++trials;
    }
    return {bitwise && worst < 1e-6,
            fmt("%d joint rotations: supervision images %s, max loss change %.1e (< 1e-6)", trials,
                bitwise ? "bitwise identical" : "DIFFER", worst)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::string work = "acceptance_work";
    bool fresh = false;
    app.add_option("--work", work, "Directory for the dataset and cached training runs");
    app.add_flag("--fresh", fresh, "Discard cached runs and retrain");
    CLI11_PARSE(app, argc, argv);

    const fs::path root(work);
    if (fresh) fs::remove_all(root);
    fs::create_directories(root);

    std::vector<std::pair<std::string, Outcome>> results;
    json record;
    auto run = [&](const std::string& name, const std::function<Outcome()>& check) {
        std::cerr << "running: " << name << "\n";
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
        std::fflush(stdout);
        record["criteria"][name] = {{"pass", o.pass}, {"detail", o.detail}};
        results.emplace_back(name, o);
    };

    run("1 gradient fidelity", gradient_fidelity);
    run("2 blending oracle", blending_oracle);
    run("3 chamfer oracle", chamfer_oracle);
    run("4 expansion exactness", expansion_exactness);
    run("5 layer finite differences", fd_suite);
    run("6 fitting regression", fitting_regression);

    Runs runs;
    runs.config = TrainConfig::desk();
    runs.data = root / "data";
    runs.full = root / "runs" / "full";
    runs.no_tf = root / "runs" / "no_tf";
    std::string setup_error;
    try {
        std::cerr << "preparing dataset and training runs under " << root << "\n";
        ensure_dataset(runs.config, runs.data, progress("data"));
        runs.full_result = train(runs.config, runs.data, runs.full, progress("full"));
        TrainConfig no_tf = runs.config;
        no_tf.model.texture_field = false;
        runs.no_tf_result = train(no_tf, runs.data, runs.no_tf, progress("w/o TF"));
    } catch (const std::exception& e) {
        setup_error = std::string("training setup failed: ") + e.what();
    }
    auto needs_runs = [&](const std::function<Outcome()>& check) {
        return [&, check] { return setup_error.empty() ? check() : Outcome{false, setup_error}; };
    };
    run("7 desk-scale overfit", needs_runs([&] { return desk_overfit(runs); }));
    json ablation;
    run("8 ablation ordering", needs_runs([&] { return ablation_ordering(runs, ablation); }));
    record["ablation"] = ablation;
    run("9 amortization", needs_runs([&] { return amortization(runs); }));
    run("10 equivariance", needs_runs([&] { return equivariance(runs); }));

    const auto passed = std::count_if(results.begin(), results.end(), [](const auto& r) { return r.second.pass; });
    std::printf("%lld/%zu criteria passed\n", static_cast<long long>(passed), results.size());
    std::ofstream(root / "acceptance.json") << record.dump(2) << "\n";
    return passed == static_cast<long long>(results.size()) ? 0 : 1;
}
