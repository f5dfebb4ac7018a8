#pragma once

#include "agg/model/model.hpp"
#include "agg/pipeline/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace agg {

struct InferenceResult {
    GaussianSet set;
    double coarse_seconds = 0.0;  // encoder + coarse generator
    double sr_seconds = 0.0;
    double total_seconds = 0.0;
    std::int64_t forward_passes = 0;
    std::int64_t optimizer_steps = 0;
};

/// Single feed-forward prediction from one image; no camera pose is used.
/// With `coarse_only` the super-resolution pass is skipped.
InferenceResult infer(Model& model, const ImageRGBA& image, bool coarse_only = false);

struct TurntableOptions {
    int frames = 8;
    double elevation = 20.0;
    double radius = 2.4;
    double fov = 45.0;
    int size = 128;
};

std::vector<ImageRGBA> turntable(const GaussianSet& set, const TurntableOptions& options = {});

struct EvalMetrics {
    std::string variant;
    double psnr = 0.0;
    double ssim = 0.0;
    double l1 = 0.0;
    double perceptual_proxy = 0.0;  // stands in for a learned perceptual metric
    double iou = 0.0;
    int objects = 0;
    int views = 0;
};

/// Predicts each held-out object from its stored view 0 and scores the
/// stored novel views 1..k.
EvalMetrics evaluate(Model& model, const std::filesystem::path& data_root, const std::vector<std::string>& ids,
                     bool coarse_only, const std::string& variant);

}  // namespace agg
