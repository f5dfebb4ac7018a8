#pragma once

#include "agg/model/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace agg {

struct TrainConfig {
    ModelConfig model;

    // Dataset.
    int train_objects = 8;
    int test_objects = 4;
    int stored_views = 12;  // per object, view 0 is the input view
    std::uint64_t data_seed = 1;
    double elevation_min = -10.0;
    double elevation_max = 40.0;
    double camera_radius = 2.4;
    double fov = 45.0;

    // Supervision.
    int render_size = 64;
    int views_per_iteration = 8;
    double perceptual_weight = 2.0;
    double chamfer_start = 10.0;
    double chamfer_end = 1.0;
    double render_start = 1.0;
    double render_end = 10.0;

    // Schedule.
    int coarse_epochs = 30;
    int sr_epochs = 10;
    int joint_epochs = 5;
    int iterations_per_epoch = 0;  // 0: one pass over the training objects
    int warmup_epochs = 3;
    double lr_max = 1e-4;
    double sr_lr = 1e-4;
    double joint_lr = 1e-5;

    // Pseudo labels.
    int label_iterations = 400;
    double label_lr = 0.05;

    std::uint64_t seed = 0;

    /// Desk-scale defaults (256 coarse Gaussians, r = 4, 64x64).
    static TrainConfig desk();
    /// Paper-scale constants (4096 -> 16384 Gaussians, 256 px input, 128 px
    /// supervision, 10/5/3 epochs).
    static TrainConfig paper();

    /// Sets a key from text; throws ConfigError for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    /// Flat `key = value` lines; `#` starts a comment.
    void load(const std::filesystem::path& path);
    std::string to_text() const;
    std::vector<std::string> keys() const;
    void validate() const;
    int epoch_iterations() const { return iterations_per_epoch > 0 ? iterations_per_epoch : train_objects; }
};

/// Model configuration as a JSON object text (stored in checkpoints) and back.
std::string model_config_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json);

}  // namespace agg
