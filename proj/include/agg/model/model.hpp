#pragma once

#include "agg/image.hpp"
#include "agg/model/model_ops.hpp"
#include "agg/model/render_op.hpp"
#include "agg/nn/layers.hpp"

#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace agg {

struct ModelConfig {
    // Image encoder.
    int image_size = 64;
    int patch_size = 8;
    int dim = 256;
    int heads = 4;
    int encoder_blocks = 4;
    bool freeze_encoder = false;
    // Geometry branch.
    int coarse_count = 256;
    int geometry_blocks = 2;
    // Texture field.
    bool texture_field = true;
    int texture_blocks = 2;
    int plane_resolution = 32;
    int plane_features = 16;
    int plane_patch = 8;
    int decoder_hidden = 64;
    double initial_opacity = 0.1;
    // Canonical scales (coarse / fine).
    double coarse_scale = 0.05;
    double fine_scale = 0.025;
    // Super resolution.
    int ratio = 4;
    int sr_channels = 32;
    int voxel_resolution = 16;
    // Maximum |offset| per axis in units of the coarse scale.
    double offset_bound = 2.0;

    std::uint64_t seed = 0;

    void validate() const;
    int patches() const { return (image_size / patch_size) * (image_size / patch_size); }
    int plane_tokens() const { return 3 * (plane_resolution / plane_patch) * (plane_resolution / plane_patch); }
};

/// Output interface of the image encoder: one global token and the patch
/// tokens, both of width `dim`.
struct ImageFeatures {
    nn::Tensor global;   // [1, D]
    nn::Tensor patches;  // [P, D]
};

/// [H,W,3] image tensor from the rgb part of an image (alpha dropped).
nn::Tensor image_rgb_tensor(const ImageRGBA& image);

class ImageEncoder {
public:
    ImageEncoder(nn::ParamStore& store, const ModelConfig& config);
    ImageFeatures operator()(const nn::Tensor& image_rgb) const;

private:
    ModelConfig config_;
    nn::Linear embed_;
    nn::Tensor position_;
    nn::Tensor global_token_;
    std::vector<nn::TransformerBlock> blocks_;
    nn::LayerNorm norm_;
};

class GeometryPredictor {
public:
    GeometryPredictor(nn::ParamStore& store, const ModelConfig& config);
    /// [N,3] locations in [-1,1]^3; when the texture field is disabled the
    /// head also emits color/opacity logits, returned through `extra` [N,4].
    nn::Tensor operator()(const ImageFeatures& features, nn::Tensor* extra = nullptr) const;
    nn::Tensor& queries() { return queries_; }
    nn::Mlp& head() { return head_; }

private:
    ModelConfig config_;
    nn::Tensor queries_;
    std::vector<nn::TransformerBlock> blocks_;
    nn::LayerNorm norm_;
    nn::Mlp head_;
};

struct Triplane {
    nn::Tensor planes;  // [3, R, R, F]
};

class TextureField {
public:
    TextureField(nn::ParamStore& store, const ModelConfig& config);
    Triplane generate(const ImageFeatures& features) const;
    /// Colors [N,3] and opacities [N] at the given locations.
    std::pair<nn::Tensor, nn::Tensor> query(const Triplane& tri, const nn::Tensor& locations) const;
    /// Rearranges per-token patches [T, t*t*F] into planes [3, R, R, F].
    nn::Tensor unpatchify(const nn::Tensor& tokens) const;

private:
    ModelConfig config_;
    nn::Tensor queries_;
    std::vector<nn::TransformerBlock> blocks_;
    nn::LayerNorm norm_;
    nn::Linear to_patch_;
    nn::Linear dec1_, dec2_, dec3_;
};

class CoarseGenerator {
public:
    CoarseGenerator(nn::ParamStore& store, const ModelConfig& config);
    GaussianTensors forward(const ImageFeatures& features) const;
    GeometryPredictor& geometry() { return geometry_; }
    TextureField* texture() { return texture_ ? texture_.get() : nullptr; }

private:
    ModelConfig config_;
    GeometryPredictor geometry_;
    std::unique_ptr<TextureField> texture_;
};

class PointVoxelBlock {
public:
    PointVoxelBlock(nn::ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out,
                    int resolution);
    nn::Tensor operator()(const nn::Tensor& features, std::shared_ptr<const VoxelMap> map) const;
    int resolution() const { return resolution_; }
    nn::Tensor conv1_w, conv1_b, conv2_w, conv2_b;
    nn::Linear point;

private:
    int resolution_;
};

/// Residual cross-attention from point features to image patch tokens.
class RgbInjection {
public:
    RgbInjection(nn::ParamStore& store, const std::string& name, std::int64_t width, std::int64_t context, int heads);
    nn::Tensor operator()(const nn::Tensor& features, const ImageFeatures& image) const;
    nn::Attention& attention() { return attn_; }

private:
    nn::LayerNorm ln_, ln_ctx_;
    nn::Attention attn_;
};

/// Fixed offsets of the r children around their parent: points on a sphere
/// whose spread lets r fine splats cover the footprint of one coarse splat.
/// All zero when r < 2 or the fine scale is not smaller.
std::vector<double> child_pattern(int r, double coarse_scale, double fine_scale);

class SrModule {
public:
    SrModule(nn::ParamStore& store, const ModelConfig& config);
    GaussianTensors forward(const GaussianTensors& coarse, const ImageFeatures& features) const;
    nn::Linear& offset_head() { return offset_; }

private:
    ModelConfig config_;
    PointVoxelBlock enc1_, enc2_;
    RgbInjection inject1_;
    nn::Linear pre_expand_;
    RgbInjection inject2_;
    PointVoxelBlock dec1_, dec2_;
    nn::Linear offset_, color_, opacity_;
};

/// Both generator stages with their parameters. Parameter names are prefixed
/// "encoder.", "geometry.", "texture." (coarse stage) and "sr.".
class Model {
public:
    explicit Model(const ModelConfig& config);
    const ModelConfig& config() const { return config_; }
    nn::ParamStore& params() { return store_; }

    ImageFeatures encode(const ImageRGBA& image) const;
    GaussianTensors coarse(const ImageFeatures& features) const;
    GaussianTensors refine(const GaussianTensors& coarse, const ImageFeatures& features) const;

    /// Network forward passes run so far (encoder+coarse counts as one, SR as one).
    std::int64_t forward_passes() const { return forward_passes_.load(); }
    void reset_forward_passes() { forward_passes_ = 0; }

    ImageEncoder& encoder() { return *encoder_; }
    CoarseGenerator& coarse_generator() { return *coarse_; }
    SrModule& sr() { return *sr_; }

    void set_coarse_trainable(bool on);

private:
    ModelConfig config_;
    nn::ParamStore store_;
    std::unique_ptr<ImageEncoder> encoder_;
    std::unique_ptr<CoarseGenerator> coarse_;
    std::unique_ptr<SrModule> sr_;
    mutable std::atomic<std::int64_t> forward_passes_{0};
};

}  // namespace agg
