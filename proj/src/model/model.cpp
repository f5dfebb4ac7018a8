#include "agg/model/model.hpp"

#include "agg/error.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace agg {

using nn::Tensor;

void ModelConfig::validate() const {
    auto positive = [](int v, const char* what) {
        if (v <= 0) throw Error(ErrorCode::ConfigError, std::string(what) + " must be positive");
    };
    positive(image_size, "image_size");
    positive(patch_size, "patch_size");
    positive(dim, "dim");
    positive(heads, "heads");
    positive(coarse_count, "coarse_count");
    positive(plane_resolution, "plane_resolution");
    positive(plane_features, "plane_features");
    positive(plane_patch, "plane_patch");
    positive(decoder_hidden, "decoder_hidden");
    positive(ratio, "ratio");
    positive(sr_channels, "sr_channels");
    if (image_size % patch_size) throw Error(ErrorCode::ConfigError, "image_size must be a multiple of patch_size");
    if (dim % heads) throw Error(ErrorCode::ConfigError, "dim must be divisible by heads");
    if (plane_resolution % plane_patch) {
        throw Error(ErrorCode::ConfigError, "plane_resolution must be a multiple of plane_patch");
    }
    if (voxel_resolution < 4 || (voxel_resolution & (voxel_resolution - 1))) {
        throw Error(ErrorCode::ConfigError, "voxel_resolution must be a power of two >= 4");
    }
    if (!(coarse_scale > 0) || !(fine_scale > 0) || !(offset_bound > 0)) {
        throw Error(ErrorCode::ConfigError, "scales and offset bound must be positive");
    }
    if (!(initial_opacity > 0 && initial_opacity < 1)) {
        throw Error(ErrorCode::ConfigError, "initial_opacity must lie in (0,1)");
    }
    if (encoder_blocks < 0 || geometry_blocks < 0 || texture_blocks < 0) {
        throw Error(ErrorCode::ConfigError, "block counts must be non-negative");
    }
}

Tensor image_rgb_tensor(const ImageRGBA& image) {
    return Tensor::from_data({image.height, image.width, 3}, image.rgb);
}

namespace {

double logit_of(double p) { return std::log(p / (1.0 - p)); }

void set_bias(nn::Linear& l, std::int64_t index, double value) { l.b.mutable_data()[index] = value; }

}  // namespace

// ---------------------------------------------------------------- encoder

ImageEncoder::ImageEncoder(nn::ParamStore& store, const ModelConfig& c)
    : config_(c),
      embed_(store, "encoder.embed", 3 * c.patch_size * c.patch_size, c.dim),
      position_(store.normal("encoder.position", {c.patches(), c.dim}, 0.02)),
      global_token_(store.normal("encoder.global", {1, c.dim}, 0.02)) {
    for (int i = 0; i < c.encoder_blocks; ++i) {
        blocks_.emplace_back(store, "encoder.block" + std::to_string(i), c.dim, 0, c.heads);
    }
    norm_ = nn::LayerNorm(store, "encoder.norm", c.dim);
}

ImageFeatures ImageEncoder::operator()(const Tensor& image) const {
    const std::int64_t s = config_.image_size, p = config_.patch_size;
    if (image.rank() != 3 || image.dim(0) != s || image.dim(1) != s || image.dim(2) != 3) {
        throw Error(ErrorCode::ShapeMismatch, "encoder expects a " + std::to_string(s) + "x" + std::to_string(s) +
                                                  "x3 image, got " + nn::shape_string(image.shape()));
    }
    const std::int64_t g = s / p;
    std::vector<std::int64_t> idx;
    idx.reserve(static_cast<std::size_t>(s * s * 3));
    for (std::int64_t py = 0; py < g; ++py) {
        for (std::int64_t px = 0; px < g; ++px) {
            for (std::int64_t y = 0; y < p; ++y) {
                for (std::int64_t x = 0; x < p; ++x) {
                    for (int c = 0; c < 3; ++c) idx.push_back(((py * p + y) * s + px * p + x) * 3 + c);
                }
            }
        }
    }
    Tensor patches = nn::gather_flat(image, std::move(idx), {g * g, p * p * 3});
    Tensor tokens = nn::add(embed_(patches), position_);
    tokens = nn::concat_rows({global_token_, tokens});
    for (const auto& b : blocks_) tokens = b(tokens);
    tokens = norm_(tokens);
    return {nn::slice_rows(tokens, 0, 1), nn::slice_rows(tokens, 1, g * g)};
}

// --------------------------------------------------------------- geometry

GeometryPredictor::GeometryPredictor(nn::ParamStore& store, const ModelConfig& c)
    : config_(c), queries_(store.normal("geometry.queries", {c.coarse_count, c.dim}, 1.0)) {
    for (int i = 0; i < c.geometry_blocks; ++i) {
        blocks_.emplace_back(store, "geometry.block" + std::to_string(i), c.dim, c.dim, c.heads);
    }
    norm_ = nn::LayerNorm(store, "geometry.norm", c.dim);
    head_ = nn::Mlp(store, "geometry.head", c.dim, c.dim, c.texture_field ? 3 : 7);
    if (!c.texture_field) set_bias(head_.fc2, 6, logit_of(c.initial_opacity));
}

Tensor GeometryPredictor::operator()(const ImageFeatures& f, Tensor* extra) const {
    Tensor x = nn::add(queries_, nn::repeat_rows(f.global, config_.coarse_count));
    for (const auto& b : blocks_) x = b(x, f.patches);
    Tensor out = head_(norm_(x));
    if (config_.texture_field) return nn::tanh(out);
    if (extra) *extra = nn::slice_cols(out, 3, 4);
    return nn::tanh(nn::slice_cols(out, 0, 3));
}

// ---------------------------------------------------------- texture field

TextureField::TextureField(nn::ParamStore& store, const ModelConfig& c)
    : config_(c), queries_(store.normal("texture.queries", {c.plane_tokens(), c.dim}, 1.0)) {
    for (int i = 0; i < c.texture_blocks; ++i) {
        blocks_.emplace_back(store, "texture.block" + std::to_string(i), c.dim, c.dim, c.heads);
    }
    norm_ = nn::LayerNorm(store, "texture.norm", c.dim);
    to_patch_ = nn::Linear(store, "texture.to_patch", c.dim, c.plane_patch * c.plane_patch * c.plane_features);
    const int f3 = 3 * c.plane_features;
    dec1_ = nn::Linear(store, "texture.dec1", f3, c.decoder_hidden);
    dec2_ = nn::Linear(store, "texture.dec2", c.decoder_hidden, c.decoder_hidden);
    dec3_ = nn::Linear(store, "texture.dec3", c.decoder_hidden, 4);
    set_bias(dec3_, 3, logit_of(c.initial_opacity));
}

Tensor TextureField::unpatchify(const Tensor& tokens) const {
    const std::int64_t r = config_.plane_resolution, t = config_.plane_patch, f = config_.plane_features;
    const std::int64_t per_side = r / t;
    if (tokens.rank() != 2 || tokens.dim(0) != 3 * per_side * per_side || tokens.dim(1) != t * t * f) {
        throw Error(ErrorCode::ShapeMismatch, "unpatchify: unexpected token shape " + nn::shape_string(tokens.shape()));
    }
    std::vector<std::int64_t> idx(static_cast<std::size_t>(3 * r * r * f));
    std::size_t o = 0;
    for (std::int64_t p = 0; p < 3; ++p) {
        for (std::int64_t y = 0; y < r; ++y) {
            for (std::int64_t x = 0; x < r; ++x) {
                const std::int64_t token = p * per_side * per_side + (y / t) * per_side + x / t;
                const std::int64_t within = ((y % t) * t + x % t) * f;
                for (std::int64_t c = 0; c < f; ++c) idx[o++] = token * t * t * f + within + c;
            }
        }
    }
    return nn::gather_flat(tokens, std::move(idx), {3, r, r, f});
}

Triplane TextureField::generate(const ImageFeatures& f) const {
    Tensor x = nn::add(queries_, nn::repeat_rows(f.global, config_.plane_tokens()));
    for (const auto& b : blocks_) x = b(x, f.patches);
    return {unpatchify(to_patch_(norm_(x)))};
}

std::pair<Tensor, Tensor> TextureField::query(const Triplane& tri, const Tensor& locations) const {
    Tensor h = triplane_sample(tri.planes, locations);
    h = nn::gelu(dec1_(h));
    h = nn::gelu(dec2_(h));
    Tensor out = dec3_(h);
    const std::int64_t n = locations.dim(0);
    return {nn::sigmoid(nn::slice_cols(out, 0, 3)), nn::reshape(nn::sigmoid(nn::slice_cols(out, 3, 1)), {n})};
}

CoarseGenerator::CoarseGenerator(nn::ParamStore& store, const ModelConfig& c) : config_(c), geometry_(store, c) {
    if (c.texture_field) texture_ = std::make_unique<TextureField>(store, c);
}

GaussianTensors CoarseGenerator::forward(const ImageFeatures& f) const {
    GaussianTensors g;
    g.scale = config_.coarse_scale;
    if (texture_) {
        g.means = geometry_(f);
        auto [colors, opacities] = texture_->query(texture_->generate(f), g.means);
        g.colors = colors;
        g.opacities = opacities;
    } else {
        Tensor extra;
        g.means = geometry_(f, &extra);
        g.colors = nn::sigmoid(nn::slice_cols(extra, 0, 3));
        g.opacities = nn::reshape(nn::sigmoid(nn::slice_cols(extra, 3, 1)), {g.means.dim(0)});
    }
    return g;
}

// -------------------------------------------------------- super resolution

PointVoxelBlock::PointVoxelBlock(nn::ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out,
                                 int resolution)
    : conv1_w(store.xavier(name + ".conv1.w", {27 * in, out}, 27 * in, out)),
      conv1_b(store.zeros(name + ".conv1.b", {out})),
      conv2_w(store.xavier(name + ".conv2.w", {27 * out, out}, 27 * out, out)),
      conv2_b(store.zeros(name + ".conv2.b", {out})),
      point(store, name + ".point", in, out),
      resolution_(resolution) {}

Tensor PointVoxelBlock::operator()(const Tensor& features, std::shared_ptr<const VoxelMap> map) const {
    if (map->resolution != resolution_) throw Error(ErrorCode::ShapeMismatch, "voxel map resolution differs");
    Tensor grid = voxel_scatter(features, map);
    grid = nn::gelu(nn::conv3d(grid, conv1_w, conv1_b));
    grid = nn::gelu(nn::conv3d(grid, conv2_w, conv2_b));
    return nn::add(voxel_gather(grid, map), nn::gelu(point(features)));
}

RgbInjection::RgbInjection(nn::ParamStore& store, const std::string& name, std::int64_t width, std::int64_t context,
                           int heads)
    : ln_(store, name + ".ln", width), ln_ctx_(store, name + ".ln_ctx", context),
      attn_(store, name + ".attn", width, context, heads) {}

Tensor RgbInjection::operator()(const Tensor& features, const ImageFeatures& image) const {
    return nn::add(features, attn_(ln_(features), ln_ctx_(image.patches)));
}

namespace {

int injection_heads(std::int64_t width, int preferred) {
    int h = preferred;
    while (h > 1 && width % h) --h;
    return h;
}


}  // namespace

std::vector<double> child_pattern(int r, double coarse_scale, double fine_scale) {
    std::vector<double> out(3 * static_cast<std::size_t>(r), 0.0);
    const double excess = coarse_scale * coarse_scale - fine_scale * fine_scale;
    if (r < 2 || excess <= 0.0) return out;
    const double radius = std::sqrt(3.0 * excess);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < r; ++k) {
        const double z = 1.0 - (2.0 * k + 1.0) / r;
        const double ring = std::sqrt(1.0 - z * z);
        out[3 * k] = radius * ring * std::cos(golden * k);
        out[3 * k + 1] = radius * ring * std::sin(golden * k);
        out[3 * k + 2] = radius * z;
    }
    return out;
}

SrModule::SrModule(nn::ParamStore& store, const ModelConfig& c)
    : config_(c),
      enc1_(store, "sr.enc1", 7, c.sr_channels, c.voxel_resolution),
      enc2_(store, "sr.enc2", c.sr_channels, 2 * c.sr_channels, c.voxel_resolution / 2),
      inject1_(store, "sr.inject1", 2 * c.sr_channels, c.dim, injection_heads(2 * c.sr_channels, c.heads)),
      pre_expand_(store, "sr.pre_expand", 2 * c.sr_channels, static_cast<std::int64_t>(c.ratio) * c.sr_channels),
      inject2_(store, "sr.inject2", c.sr_channels, c.dim, injection_heads(c.sr_channels, c.heads)),
      dec1_(store, "sr.dec1", c.sr_channels, c.sr_channels, c.voxel_resolution / 2),
      dec2_(store, "sr.dec2", 2 * c.sr_channels, c.sr_channels, c.voxel_resolution),
      offset_(store, "sr.offset", c.sr_channels, 3, 0.1),
      color_(store, "sr.color", c.sr_channels, 3, 0.1),
      opacity_(store, "sr.opacity", c.sr_channels, 1, 0.1) {}

GaussianTensors SrModule::forward(const GaussianTensors& coarse, const ImageFeatures& image) const {
    const std::int64_t n = static_cast<std::int64_t>(coarse.size());
    const std::int64_t r = config_.ratio;
    // Positions only steer voxelization; they are constants there.
    std::vector<double> parent(coarse.means.data().begin(), coarse.means.data().end());
    auto fine_map = VoxelMap::build(parent, config_.voxel_resolution);
    auto low_map = VoxelMap::build(parent, config_.voxel_resolution / 2);
    std::vector<double> replicated;
    replicated.reserve(parent.size() * r);
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t k = 0; k < r; ++k) replicated.insert(replicated.end(), parent.begin() + 3 * i, parent.begin() + 3 * i + 3);
    }
    auto fine_map_r = VoxelMap::build(replicated, config_.voxel_resolution);
    auto low_map_r = VoxelMap::build(replicated, config_.voxel_resolution / 2);

    Tensor input = nn::concat_cols({coarse.means, coarse.colors, nn::reshape(coarse.opacities, {n, 1})});
    Tensor e1 = enc1_(input, fine_map);
    Tensor e2 = enc2_(e1, low_map);
    e2 = inject1_(e2, image);
    Tensor x = expand_features(pre_expand_(e2), r);
    x = inject2_(x, image);
    x = dec1_(x, low_map_r);
    x = nn::concat_cols({x, nn::repeat_rows(e1, r)});
    x = dec2_(x, fine_map_r);

    GaussianTensors fine;
    fine.scale = config_.fine_scale;
    fine.rotation = coarse.rotation;
    const double bound = config_.offset_bound * config_.coarse_scale;
    const std::vector<double> pattern = child_pattern(r, config_.coarse_scale, config_.fine_scale);
    std::vector<double> base;
    base.reserve(static_cast<std::size_t>(3 * n * r));
    for (std::int64_t i = 0; i < n; ++i) base.insert(base.end(), pattern.begin(), pattern.end());
    Tensor anchors = nn::add(nn::repeat_rows(coarse.means, r), Tensor::from_data({n * r, 3}, std::move(base)));
    fine.means = nn::add(anchors, nn::scale(nn::tanh(offset_(x)), bound));
    fine.colors = nn::sigmoid(nn::add(nn::repeat_rows(logit(coarse.colors), r), color_(x)));
    Tensor parent_opacity = nn::repeat_rows(logit(nn::reshape(coarse.opacities, {n, 1})), r);
    fine.opacities = nn::reshape(nn::sigmoid(nn::add(parent_opacity, opacity_(x))), {n * r});
    return fine;
}

// ------------------------------------------------------------------ model

Model::Model(const ModelConfig& config) : config_(config), store_(config.seed) {
    config_.validate();
    encoder_ = std::make_unique<ImageEncoder>(store_, config_);
    coarse_ = std::make_unique<CoarseGenerator>(store_, config_);
    sr_ = std::make_unique<SrModule>(store_, config_);
    if (config_.freeze_encoder) store_.set_trainable("encoder.", false);
}

ImageFeatures Model::encode(const ImageRGBA& image) const {
    const ImageRGBA& in = image.width == config_.image_size && image.height == config_.image_size
                              ? image
                              : resize_image(image, config_.image_size);
    return (*encoder_)(image_rgb_tensor(in));
}

GaussianTensors Model::coarse(const ImageFeatures& features) const {
    ++forward_passes_;
    return coarse_->forward(features);
}

GaussianTensors Model::refine(const GaussianTensors& coarse, const ImageFeatures& features) const {
    ++forward_passes_;
    return sr_->forward(coarse, features);
}

void Model::set_coarse_trainable(bool on) {
    store_.set_trainable("geometry.", on);
    store_.set_trainable("texture.", on);
    store_.set_trainable("encoder.", on && !config_.freeze_encoder);
}

}  // namespace agg
