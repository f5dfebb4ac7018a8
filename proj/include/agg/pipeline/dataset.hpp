#pragma once

#include "agg/model/fitter.hpp"
#include "agg/pipeline/config.hpp"
#include "agg/pipeline/synthetic.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace agg {

using LogFn = std::function<void(const std::string&)>;

/// Directory layout under the dataset root:
///   split.json                      train/test ids and the generating settings
///   objects/<id>/spec               object parts (JSON)
///   objects/<id>/cams               stored camera specs (JSON), view 0 is the input
///   objects/<id>/views/<k>.png      stored renders
///   labels/<id>.ply                 fitted pseudo labels (training objects)
///   labels/manifest.json            fit status per label
struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

std::string object_id(int index);
std::uint64_t object_seed(std::uint64_t data_seed, int index);

/// Writes every object, its cameras and its stored views. Existing object
/// directories are overwritten.
DatasetSplit generate_dataset(const TrainConfig& config, const std::filesystem::path& root, const LogFn& log = {});

/// Throws IoError when split.json is absent, ConfigError when it was generated
/// with settings that differ from `config`.
DatasetSplit read_split(const std::filesystem::path& root, const TrainConfig& config);
DatasetSplit read_split(const std::filesystem::path& root);

SyntheticObject load_object(const std::filesystem::path& root, const std::string& id);
std::vector<CameraSpec> load_cameras(const std::filesystem::path& root, const std::string& id);
/// Stored cameras paired with their PNG views.
std::vector<View> load_views(const std::filesystem::path& root, const std::string& id);

struct LabelSummary {
    std::string id;
    FitStatus status = FitStatus::MaxIterations;
    int iterations = 0;
    double initial_psnr = 0.0;
    double final_psnr = 0.0;
    bool cached = false;
};

/// Fits one pseudo label per training object (coarse_count Gaussians at the
/// coarse scale, initialized from a seeded subset of surface samples). Labels
/// whose manifest entry matches the current settings are reused unless
/// `force` is set.
std::vector<LabelSummary> fit_labels(const TrainConfig& config, const std::filesystem::path& root, bool force = false,
                                     const LogFn& log = {});
GaussianSet load_label(const std::filesystem::path& root, const std::string& id);

/// Generates the dataset and fits labels when they are missing.
DatasetSplit ensure_dataset(const TrainConfig& config, const std::filesystem::path& root, const LogFn& log = {});

}  // namespace agg
