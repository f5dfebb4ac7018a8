#pragma once

#include "agg/nn/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace agg::nn {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Named trainable tensors with Adam moments. Insertion order is kept, so
/// iteration (and the checkpoint layout) is deterministic.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor value;
        std::vector<double> m;
        std::vector<double> v;
        double lr_scale = 1.0;
    };

    explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;

    Tensor add(const std::string& name, Shape shape, std::vector<double> init);
    Tensor zeros(const std::string& name, Shape shape);
    Tensor constant(const std::string& name, Shape shape, double value);
    /// Uniform(-a, a) with a = gain * sqrt(6 / (fan_in + fan_out)).
    Tensor xavier(const std::string& name, Shape shape, std::int64_t fan_in, std::int64_t fan_out, double gain = 1.0);
    Tensor normal(const std::string& name, Shape shape, double stddev);

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    Tensor get(const std::string& name) const;
    Entry& entry(const std::string& name);
    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    std::int64_t parameter_count() const;

    /// Freezes (requires_grad off) or thaws every parameter whose name starts
    /// with `prefix`.
    void set_trainable(const std::string& prefix, bool trainable);
    void set_lr_scale(const std::string& prefix, double scale);

    void zero_grad();
    /// Bias-corrected Adam on every trainable parameter; clears gradients.
    /// Throws MissingGradient when a trainable parameter has no gradient.
    void adam_step(double lr, const AdamOptions& options = {});
    /// Zeroes the Adam moments and the step counter.
    void reset_optimizer();
    std::int64_t step() const { return step_; }
    void set_step(std::int64_t step) { step_ = step; }

    std::mt19937_64& rng() { return rng_; }

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t> index_;
    std::int64_t step_ = 0;
    std::mt19937_64 rng_;
};

/// Reverse pass from `loss`, then zero-fills gradients of trainable
/// parameters the loss did not reach.
void backward(const Tensor& loss, ParamStore& store);

/// Checkpoint container: "AGGCKPT\0", u64 manifest length, JSON manifest,
/// then float64 little-endian payloads (value, m, v per tensor) in manifest
/// order. `meta` is an arbitrary JSON object text stored in the manifest.
void save_checkpoint(const ParamStore& store, const std::filesystem::path& path, const std::string& meta = "{}");
/// Loads values and optimizer state into an already constructed store.
/// Throws CheckpointMismatch when names or shapes disagree. Returns `meta`.
std::string load_checkpoint(ParamStore& store, const std::filesystem::path& path);
/// Reads only the manifest `meta` field.
std::string read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace agg::nn
