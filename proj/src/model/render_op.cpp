#include "agg/model/render_op.hpp"

#include "agg/error.hpp"
#include "agg/nn/ops.hpp"

#include <algorithm>

namespace agg {

GaussianSet GaussianTensors::to_set() const {
    GaussianSet set;
    set.scale = scale;
    set.rotation = rotation;
    const std::size_t n = size();
    if (static_cast<std::size_t>(colors.dim(0)) != n || static_cast<std::size_t>(opacities.numel()) != n) {
        throw Error(ErrorCode::CountMismatch, "gaussian tensors disagree on count");
    }
    set.means.resize(n);
    set.colors.resize(n);
    set.opacities.resize(n);
    const auto m = means.data(), c = colors.data(), o = opacities.data();
    for (std::size_t i = 0; i < n; ++i) {
        set.means[i] = Vec3(m[3 * i], m[3 * i + 1], m[3 * i + 2]);
        set.colors[i] = Vec3(c[3 * i], c[3 * i + 1], c[3 * i + 2]);
        set.opacities[i] = o[i];
    }
    return set;
}

GaussianTensors GaussianTensors::from_set(const GaussianSet& set, bool requires_grad) {
    const auto n = static_cast<std::int64_t>(set.size());
    std::vector<double> m(3 * n), c(3 * n);
    for (std::int64_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            m[3 * i + k] = set.means[i][k];
            c[3 * i + k] = set.colors[i][k];
        }
    }
    GaussianTensors g;
    g.means = nn::Tensor::from_data({n, 3}, std::move(m), requires_grad);
    g.colors = nn::Tensor::from_data({n, 3}, std::move(c), requires_grad);
    g.opacities = nn::Tensor::from_data({n}, set.opacities, requires_grad);
    g.scale = set.scale;
    g.rotation = set.rotation;
    return g;
}

nn::Tensor render_tensor(const GaussianTensors& g, const Camera& cam, const RasterSettings& settings) {
    GaussianSet set = g.to_set();
    ImageRGBA image = rasterize(set, cam, settings);
    std::vector<double> packed = pack_rgba(image);
    const nn::Shape shape{cam.height, cam.width, 4};
    return nn::make_result(shape, std::move(packed), {g.means, g.colors, g.opacities},
                           [set = std::move(set), cam, settings](nn::detail::Node& n) {
                               RenderGradients grads = rasterize_backward(set, cam, settings, n.grad);
                               auto& in = n.inputs;
                               if (in[0]->requires_grad) {
                                   for (std::size_t i = 0; i < set.size(); ++i) {
                                       for (int k = 0; k < 3; ++k) in[0]->grad[3 * i + k] += grads.d_means[i][k];
                                   }
                               }
                               if (in[1]->requires_grad) {
                                   for (std::size_t i = 0; i < set.size(); ++i) {
                                       for (int k = 0; k < 3; ++k) in[1]->grad[3 * i + k] += grads.d_colors[i][k];
                                   }
                               }
                               if (in[2]->requires_grad) {
                                   for (std::size_t i = 0; i < set.size(); ++i) {
                                       in[2]->grad[i] += grads.d_opacities[i];
                                   }
                               }
                           });
}

nn::Tensor image_to_tensor(const ImageRGBA& image) {
    return nn::Tensor::from_data({image.height, image.width, 4}, pack_rgba(image));
}

ImageRGBA tensor_to_image(const nn::Tensor& rgba) {
    if (rgba.rank() != 3 || rgba.dim(2) != 4) throw Error(ErrorCode::ShapeMismatch, "expected [H,W,4]");
    ImageRGBA image(static_cast<int>(rgba.dim(1)), static_cast<int>(rgba.dim(0)));
    const auto d = rgba.data();
    for (std::size_t p = 0; p < image.pixels(); ++p) {
        for (int c = 0; c < 3; ++c) image.rgb[3 * p + c] = std::clamp(d[4 * p + c], 0.0, 1.0);
        image.alpha[p] = std::clamp(d[4 * p + 3], 0.0, 1.0);
    }
    return image;
}

nn::Tensor rgb_channels(const nn::Tensor& rgba) {
    const auto h = rgba.dim(0), w = rgba.dim(1);
    std::vector<std::int64_t> idx;
    idx.reserve(static_cast<std::size_t>(h * w * 3));
    for (std::int64_t p = 0; p < h * w; ++p) {
        for (int c = 0; c < 3; ++c) idx.push_back(4 * p + c);
    }
    return nn::gather_flat(rgba, std::move(idx), {h, w, 3});
}

}  // namespace agg
