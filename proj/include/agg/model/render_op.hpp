#pragma once

#include "agg/gaussian.hpp"
#include "agg/image.hpp"
#include "agg/nn/tensor.hpp"
#include "agg/render.hpp"

namespace agg {

/// GaussianSet attributes as differentiable tensors: means [N,3],
/// colors [N,3], opacities [N].
struct GaussianTensors {
    nn::Tensor means;
    nn::Tensor colors;
    nn::Tensor opacities;
    double scale = 0.03;
    Quat rotation{};

    std::size_t size() const { return means.defined() ? static_cast<std::size_t>(means.dim(0)) : 0; }
    GaussianSet to_set() const;
    static GaussianTensors from_set(const GaussianSet& set, bool requires_grad = false);
};

/// Differentiable render: returns [H,W,4] with (r,g,b,alpha) per pixel, rgb
/// composited over the background.
nn::Tensor render_tensor(const GaussianTensors& gaussians, const Camera& cam, const RasterSettings& settings = {});

nn::Tensor image_to_tensor(const ImageRGBA& image);
ImageRGBA tensor_to_image(const nn::Tensor& rgba);
/// [H,W,3] rgb part of an [H,W,4] tensor.
nn::Tensor rgb_channels(const nn::Tensor& rgba);

}  // namespace agg
