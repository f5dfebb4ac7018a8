#pragma once

#include "agg/model/model.hpp"
#include "agg/model/render_op.hpp"
#include "agg/pipeline/dataset.hpp"

#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace agg {

/// One normalized training example: input image, supervision targets and the
/// pseudo label, all in the input-view frame.
struct TrainingExample {
    SceneSample scene;
    ImageRGBA input;
    std::vector<Camera> cameras;
    std::vector<nn::Tensor> targets;  // [H,W,4]
    GaussianSet label;                // rotated into the input-view frame
};

/// Renders a (normalized) scene for an object given its ground-truth set and
/// canonical-frame label.
TrainingExample make_example(const SceneSample& scene, const GaussianSet& ground_truth, const GaussianSet& label,
                             const RasterSettings& settings = {});

struct LossTerms {
    nn::Tensor total;
    double render = 0.0;
    double chamfer = 0.0;
    double psnr = 0.0;
};

/// Mean rendering loss over the example's views, plus the weighted Chamfer
/// term when chamfer_weight > 0.
LossTerms example_loss(const GaussianTensors& pred, const TrainingExample& example, double perceptual_weight,
                       double render_weight, double chamfer_weight);

/// Stage-1 loss weights at an epoch: linear from the start to the end value
/// over the stage's epochs.
std::pair<double, double> ramp_weights(const TrainConfig& config, int epoch);
/// Stage-1 learning rate: linear warmup then cosine decay, per iteration.
double coarse_learning_rate(const TrainConfig& config, std::int64_t iteration);

struct ProbeResult {
    double coarse_loss = 0.0;
    double full_loss = 0.0;
    double coarse_psnr = 0.0;
    double full_psnr = 0.0;
};

struct TrainResult {
    ProbeResult initial;
    ProbeResult final;
    std::vector<ProbeResult> after_stage;  // one per completed stage
    std::int64_t iterations = 0;
    bool coarse_frozen_in_stage2 = true;
    bool resumed = false;
    double seconds = 0.0;        // this run
    double total_seconds = 0.0;  // including stages loaded from earlier runs
};

/// Three-stage training into `out_dir` (stage1.ckpt, stage2.ckpt,
/// stage3.ckpt, metrics.jsonl, summary.json). Completed stages found in
/// `out_dir` are loaded instead of retrained.
TrainResult train(const TrainConfig& config, const std::filesystem::path& data_root,
                  const std::filesystem::path& out_dir, const LogFn& log = {});

/// Checkpoint meta text for a model and stage; and the reverse check.
std::string checkpoint_meta(const ModelConfig& config, int stage, const std::string& extra_json = "{}");
/// Builds a model from a checkpoint's stored config and loads its weights.
std::unique_ptr<Model> load_model(const std::filesystem::path& checkpoint);
/// Loads into a model built from `config`; throws CheckpointMismatch when the
/// checkpoint was written for a different configuration.
std::unique_ptr<Model> load_model(const std::filesystem::path& checkpoint, const ModelConfig& config);
int checkpoint_stage(const std::filesystem::path& checkpoint);

}  // namespace agg
