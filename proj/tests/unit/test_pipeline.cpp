#include "agg/error.hpp"
#include "agg/model/losses.hpp"
#include "agg/nn/param_store.hpp"
#include "agg/ply.hpp"
#include "agg/pipeline/config.hpp"
#include "agg/pipeline/dataset.hpp"
#include "agg/pipeline/infer.hpp"
#include "agg/pipeline/synthetic.hpp"
#include "agg/pipeline/train.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <unistd.h>

using namespace agg;
namespace fs = std::filesystem;

namespace {

template <class F>
void expect_error(ErrorCode code, F&& f) {
    try {
        f();
        ADD_FAILURE() << "no error thrown";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), code) << e.what();
    }
}

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("agg_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

bool same_parameters(const fs::path& a, const fs::path& b) {
    auto ma = load_model(a), mb = load_model(b);
    const auto& ea = ma->params().entries();
    const auto& eb = mb->params().entries();
    if (ea.size() != eb.size()) return false;
    for (std::size_t i = 0; i < ea.size(); ++i) {
        if (ea[i].name != eb[i].name || !std::ranges::equal(ea[i].value.data(), eb[i].value.data())) return false;
    }
    return true;
}

TrainConfig tiny_config() {
    TrainConfig c = TrainConfig::desk();
    ModelConfig& m = c.model;
    m.image_size = 16;
    m.patch_size = 8;
    m.dim = 16;
    m.heads = 2;
    m.encoder_blocks = 1;
    m.coarse_count = 12;
    m.geometry_blocks = 1;
    m.texture_blocks = 1;
    m.plane_resolution = 8;
    m.plane_features = 4;
    m.plane_patch = 4;
    m.decoder_hidden = 8;
    m.ratio = 2;
    m.sr_channels = 4;
    m.voxel_resolution = 4;
    c.train_objects = 2;
    c.test_objects = 1;
    c.stored_views = 4;
    c.render_size = 16;
    c.views_per_iteration = 2;
    c.coarse_epochs = 2;
    c.sr_epochs = 1;
    c.joint_epochs = 1;
    c.warmup_epochs = 1;
    c.iterations_per_epoch = 1;
    c.label_iterations = 5;
    return c;
}

}  // namespace

// ------------------------------------------------------------------ config

TEST(Config, SetRoundTripsThroughText) {
    TrainConfig a = TrainConfig::desk();
    a.set("coarse_count", "64");
    a.set("texture_field", "false");
    a.set("lr_max", "3e-4");
    a.set("data_seed", "18446744073709551615");
    EXPECT_EQ(a.model.coarse_count, 64);
    EXPECT_FALSE(a.model.texture_field);
    EXPECT_EQ(a.lr_max, 3e-4);

    const fs::path dir = temp_dir("config");
    {
        std::ofstream out(dir / "c.txt");
        out << "# comment\n" << a.to_text();
    }
    TrainConfig b = TrainConfig::desk();
    b.load(dir / "c.txt");
    EXPECT_EQ(b.to_text(), a.to_text());
    fs::remove_all(dir);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    TrainConfig c = TrainConfig::desk();
    expect_error(ErrorCode::ConfigError, [&] { c.set("no_such_key", "1"); });
    expect_error(ErrorCode::ConfigError, [&] { c.set("coarse_count", "12x"); });
    expect_error(ErrorCode::ConfigError, [&] { c.set("texture_field", "maybe"); });
}

TEST(Config, ValidateCatchesInconsistentSettings) {
    EXPECT_NO_THROW(TrainConfig::desk().validate());
    EXPECT_NO_THROW(TrainConfig::paper().validate());
    TrainConfig c = TrainConfig::desk();
    c.warmup_epochs = c.coarse_epochs + 1;
    EXPECT_THROW(c.validate(), Error);
    c = TrainConfig::desk();
    c.elevation_min = 50.0;
    EXPECT_THROW(c.validate(), Error);
    c = TrainConfig::desk();
    c.render_size = 18;
    EXPECT_THROW(c.validate(), Error);
}

TEST(Config, ModelJsonRoundTrip) {
    const ModelConfig m = tiny_config().model;
    const ModelConfig back = model_config_from_json(model_config_json(m));
    EXPECT_EQ(model_config_json(back), model_config_json(m));
    expect_error(ErrorCode::CheckpointMismatch, [] { model_config_from_json("{\"dim\": 4}"); });
}

// --------------------------------------------------------------- synthetic

TEST(Synthetic, DeterministicInSeed) {
    const SyntheticObject a = generate_synthetic_object(42), b = generate_synthetic_object(42);
    EXPECT_EQ(a.points, b.points);
    EXPECT_EQ(a.colors, b.colors);
    EXPECT_NE(generate_synthetic_object(43).points, a.points);
}

TEST(Synthetic, ObjectsStayInBoundsAndHaveSilhouettes) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const SyntheticObject o = generate_synthetic_object(seed, 512);
        ASSERT_GE(o.parts.size(), 2u);
        ASSERT_LE(o.parts.size(), 5u);
        EXPECT_GE(o.points.size(), 512u);
        for (const Vec3& p : o.points) {
            ASSERT_LE(p.cwiseAbs().maxCoeff(), 0.8) << seed;
        }
        for (const Vec3& c : o.colors) {
            ASSERT_GE(c.minCoeff(), 0.0);
            ASSERT_LE(c.maxCoeff(), 1.0);
        }
        if (seed % 20 == 0) {
            CameraSpec cam;
            cam.size = 32;
            const ImageRGBA im = rasterize(ground_truth_gaussians(o), cam.camera());
            const auto covered = std::count_if(im.alpha.begin(), im.alpha.end(), [](double a) { return a > 0.5; });
            EXPECT_GT(covered, 20) << seed;
        }
    }
}

TEST(Synthetic, SurfaceSamplesAvoidOtherPartsInteriors) {
    const SyntheticObject o = generate_synthetic_object(5);
    for (std::size_t i = 0; i < o.points.size(); i += 7) {
        int inside = 0;
        for (const Part& p : o.parts) inside += p.inside(o.points[i] - 1e-6 * o.normals[i]) ? 1 : 0;
        EXPECT_LE(inside, 1);
    }
}

TEST(Synthetic, RedAlbedoRendersRed) {
    Part p;
    p.albedo = Vec3(0.9, 0.05, 0.05);
    const SyntheticObject o = object_from_parts({p}, 1);
    CameraSpec cam;
    cam.size = 32;
    const ImageRGBA im = rasterize(ground_truth_gaussians(o), cam.camera());
    const double r = im.r(16, 16, 0), g = im.r(16, 16, 1), b = im.r(16, 16, 2);
    EXPECT_GT(r, 3.0 * g);
    EXPECT_GT(r, 3.0 * b);
    expect_error(ErrorCode::InvalidArgument, [] { object_from_parts({}, 1); });
}

TEST(Synthetic, SpecJsonRebuildsObject) {
    const SyntheticObject a = generate_synthetic_object(11, 600);
    const SyntheticObject b = object_from_spec_json(object_spec_json(a));
    EXPECT_EQ(a.parts.size(), b.parts.size());
    EXPECT_EQ(a.points, b.points);
    expect_error(ErrorCode::MalformedHeader, [] { object_from_spec_json("{not json"); });
}

TEST(Synthetic, TickRotationIsExactAtZeroAndWraps) {
    EXPECT_EQ(ticks_rotation(0), Mat3::Identity());
    EXPECT_EQ(wrap_ticks(-1), kAzimuthTicks - 1);
    EXPECT_EQ(wrap_ticks(2 * kAzimuthTicks + 5), 5);
    EXPECT_NEAR((ticks_rotation(900) * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm(), 0.0, 1e-15);
}

// ----------------------------------------------------------------- cameras

TEST(Cameras, InputAtZeroAzimuthAndViewsDistinct) {
    std::mt19937_64 rng(3);
    CameraRange range;
    for (int trial = 0; trial < 50; ++trial) {
        const auto cams = sample_cameras(rng, 12, range, 32);
        ASSERT_EQ(cams.size(), 12u);
        EXPECT_EQ(cams[0].azimuth_ticks, 0);
        std::set<int> az;
        for (const auto& c : cams) {
            az.insert(c.azimuth_ticks);
            EXPECT_GE(c.elevation, range.elevation_min);
            EXPECT_LE(c.elevation, range.elevation_max);
        }
        EXPECT_EQ(az.size(), cams.size());
    }
    expect_error(ErrorCode::InvalidRange, [&] { sample_world_scene(rng, 0, range, 16, 16); });
    range.elevation_min = 60.0;
    expect_error(ErrorCode::InvalidRange, [&] { sample_world_scene(rng, 2, range, 16, 16); });
}

// ------------------------------------------------------------ equivariance

TEST(Equivariance, JointRotationIsInvisibleAfterNormalization) {
    std::mt19937_64 rng(17);
    const GaussianSet gt = ground_truth_gaussians(generate_synthetic_object(2, 1024));
    const ModelConfig mc = tiny_config().model;
    Model model(mc);
    for (int trial = 0; trial < 5; ++trial) {
        const SceneSample world = sample_world_scene(rng, 3, CameraRange{}, 16, 16);
        const int t = std::uniform_int_distribution<int>(1, kAzimuthTicks - 1)(rng);
        const SceneSample a = normalize_scene(world);
        const SceneSample b = normalize_scene(rotate_scene(world, t));
        EXPECT_EQ(a.object_ticks, b.object_ticks);
        EXPECT_EQ(a.input, b.input);
        EXPECT_EQ(a.views, b.views);
        EXPECT_EQ(a.input.azimuth_ticks, 0);

        const GaussianSet label = rotate_set(gt, 0);
        const TrainingExample ea = make_example(a, gt, label), eb = make_example(b, gt, label);
        EXPECT_EQ(ea.input.rgb, eb.input.rgb);
        ASSERT_EQ(ea.targets.size(), eb.targets.size());
        for (std::size_t v = 0; v < ea.targets.size(); ++v) {
            EXPECT_TRUE(std::ranges::equal(ea.targets[v].data(), eb.targets[v].data()));
        }
        const ImageFeatures fa = model.encode(ea.input), fb = model.encode(eb.input);
        const double la = example_loss(model.coarse(fa), ea, 2.0, 1.0, 1.0).total.item();
        const double lb = example_loss(model.coarse(fb), eb, 2.0, 1.0, 1.0).total.item();
        EXPECT_LT(std::abs(la - lb), 1e-6);
    }
}

TEST(Equivariance, RotatingObjectAndCameraTogetherKeepsTheImage) {
    const GaussianSet gt = ground_truth_gaussians(generate_synthetic_object(4, 1024));
    CameraSpec cam;
    cam.size = 32;
    cam.elevation = 15.0;
    cam.azimuth_ticks = 300;
    const ImageRGBA a = rasterize(gt, cam.camera());
    for (int t : {450, 1800, 3599}) {
        CameraSpec moved = cam;
        moved.azimuth_ticks = wrap_ticks(cam.azimuth_ticks + t);
        const ImageRGBA b = rasterize(rotate_set(gt, t), moved.camera());
        EXPECT_LT(mean_l1(a, b), 1e-6) << t;
    }
}

// ------------------------------------------------------ dataset and training

class TinyPipeline : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = new fs::path(temp_dir("pipeline"));
        config_ = new TrainConfig(tiny_config());
        ensure_dataset(*config_, *root_ / "data");
        result_ = new TrainResult(train(*config_, *root_ / "data", *root_ / "run"));
    }
    void SetUp() override { ASSERT_NE(result_, nullptr) << "pipeline setup failed"; }
    static void TearDownTestSuite() {
        fs::remove_all(*root_);
        delete root_;
        delete config_;
        delete result_;
        result_ = nullptr;
    }
    static fs::path* root_;
    static TrainConfig* config_;
    static TrainResult* result_;
};

fs::path* TinyPipeline::root_ = nullptr;
TrainConfig* TinyPipeline::config_ = nullptr;
TrainResult* TinyPipeline::result_ = nullptr;

TEST_F(TinyPipeline, DatasetLayout) {
    const fs::path data = *root_ / "data";
    const DatasetSplit split = read_split(data, *config_);
    ASSERT_EQ(split.train.size(), 2u);
    ASSERT_EQ(split.test.size(), 1u);
    for (const auto& id : split.train) {
        EXPECT_TRUE(fs::exists(data / "objects" / id / "spec"));
        EXPECT_TRUE(fs::exists(data / "labels" / (id + ".ply")));
        EXPECT_EQ(load_label(data, id).size(), 12u);
        const auto views = load_views(data, id);
        ASSERT_EQ(views.size(), 4u);
        EXPECT_EQ(views[0].image.width, 16);
    }
    EXPECT_EQ(load_cameras(data, split.test[0])[0].azimuth_ticks, 0);
    TrainConfig other = *config_;
    other.data_seed += 1;
    expect_error(ErrorCode::ConfigError, [&] { read_split(data, other); });
    expect_error(ErrorCode::IoError, [&] { read_split(*root_ / "missing"); });
}

TEST_F(TinyPipeline, LabelsAreCached) {
    const auto summaries = fit_labels(*config_, *root_ / "data");
    ASSERT_EQ(summaries.size(), 2u);
    for (const auto& s : summaries) EXPECT_TRUE(s.cached);
}

TEST_F(TinyPipeline, TrainingWritesStagesAndFreezesCoarse) {
    const fs::path run = *root_ / "run";
    for (const char* f : {"stage1.ckpt", "stage2.ckpt", "stage3.ckpt", "metrics.jsonl", "summary.json", "config.txt"}) {
        EXPECT_TRUE(fs::exists(run / f)) << f;
    }
    EXPECT_EQ(result_->after_stage.size(), 3u);
    EXPECT_EQ(result_->iterations, 4);
    EXPECT_TRUE(result_->coarse_frozen_in_stage2);
    EXPECT_EQ(checkpoint_stage(run / "stage2.ckpt"), 2);

    std::ifstream in(run / "metrics.jsonl");
    std::string line;
    int probes = 0, iterations = 0;
    while (std::getline(in, line)) {
        probes += line.find("\"probe\"") != std::string::npos;
        iterations += line.find("\"iteration\"") != std::string::npos;
    }
    EXPECT_EQ(probes, 4);
    EXPECT_EQ(iterations, 4);
}

TEST_F(TinyPipeline, ResumeSkipsCompletedStages) {
    const TrainResult again = train(*config_, *root_ / "data", *root_ / "run");
    EXPECT_TRUE(again.resumed);
    EXPECT_EQ(again.iterations, 0);
    EXPECT_EQ(again.final.full_loss, result_->final.full_loss);
}

TEST_F(TinyPipeline, InferenceIsTwoPassesAndDeterministic) {
    const fs::path data = *root_ / "data";
    const auto id = read_split(data).test[0];
    const ImageRGBA input = load_views(data, id)[0].image;
    auto model = load_model(*root_ / "run" / "stage3.ckpt");
    const InferenceResult a = infer(*model, input);
    EXPECT_EQ(a.forward_passes, 2);
    EXPECT_EQ(a.optimizer_steps, 0);
    EXPECT_EQ(a.set.size(), 12u * 2u);
    const InferenceResult coarse = infer(*model, input, true);
    EXPECT_EQ(coarse.forward_passes, 1);
    EXPECT_EQ(coarse.set.size(), 12u);

    const InferenceResult b = infer(*load_model(*root_ / "run" / "stage3.ckpt"), input);
    export_ply(a.set, *root_ / "a.ply");
    export_ply(b.set, *root_ / "b.ply");
    EXPECT_EQ(read_bytes(*root_ / "a.ply"), read_bytes(*root_ / "b.ply"));

    const auto frames = turntable(a.set, {.frames = 3, .size = 16});
    EXPECT_EQ(frames.size(), 3u);
}

TEST_F(TinyPipeline, EvaluationCoversHeldOutViews) {
    const fs::path data = *root_ / "data";
    auto model = load_model(*root_ / "run" / "stage3.ckpt");
    const EvalMetrics m = evaluate(*model, data, read_split(data).test, false, "full");
    EXPECT_EQ(m.objects, 1);
    EXPECT_EQ(m.views, 3);
    EXPECT_GT(m.psnr, 0.0);
    EXPECT_GE(m.iou, 0.0);
    EXPECT_LE(m.iou, 1.0);
    EXPECT_LE(m.ssim, 1.0);
}

TEST_F(TinyPipeline, CheckpointForOtherConfigIsRejected) {
    ModelConfig other = config_->model;
    other.coarse_count = 16;
    expect_error(ErrorCode::CheckpointMismatch,
                 [&] { load_model(*root_ / "run" / "stage3.ckpt", other); });
    EXPECT_NO_THROW(load_model(*root_ / "run" / "stage3.ckpt", config_->model));
}

TEST_F(TinyPipeline, SameSeedGivesIdenticalMetricsLog) {
    const fs::path again = *root_ / "run_again";
    train(*config_, *root_ / "data", again);
    EXPECT_EQ(read_bytes(again / "metrics.jsonl"), read_bytes(*root_ / "run" / "metrics.jsonl"));
    EXPECT_TRUE(same_parameters(again / "stage3.ckpt", *root_ / "run" / "stage3.ckpt"));
}

TEST_F(TinyPipeline, ResumingMidwayMatchesContinuousRun) {
    const fs::path partial = *root_ / "run_partial";
    fs::create_directories(partial);
    fs::copy_file(*root_ / "run" / "stage1.ckpt", partial / "stage1.ckpt");
    fs::copy_file(*root_ / "run" / "metrics.jsonl", partial / "metrics.jsonl");
    const TrainResult r = train(*config_, *root_ / "data", partial);
    EXPECT_TRUE(r.resumed);
    EXPECT_EQ(r.iterations, 2);
    EXPECT_TRUE(same_parameters(partial / "stage3.ckpt", *root_ / "run" / "stage3.ckpt"));
    EXPECT_EQ(read_bytes(partial / "metrics.jsonl"), read_bytes(*root_ / "run" / "metrics.jsonl"));
}
