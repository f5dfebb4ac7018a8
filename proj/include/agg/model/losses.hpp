#pragma once

#include "agg/gaussian.hpp"
#include "agg/image.hpp"
#include "agg/model/render_op.hpp"
#include "agg/nn/tensor.hpp"

#include <cstdint>
#include <vector>

namespace agg {

struct LossWeights {
    double perceptual = 2.0;  // omega_1
    double chamfer = 10.0;
    double render = 1.0;
    double chamfer_forward = 1.0;   // w_1
    double chamfer_backward = 1.0;  // w_2
};

/// Learned-perceptual-metric stand-in: three fixed random 3x3 conv layers
/// (GeLU) applied at scales 1, 1/2, 1/4; features are unit-normalized per
/// pixel and compared by mean squared distance, summed over layers.
class PerceptualProxy {
public:
    explicit PerceptualProxy(std::uint64_t seed = 7, int channels = 16);
    /// pred and gt are [H,W,3] with H, W >= 16 and divisible by 4.
    nn::Tensor operator()(const nn::Tensor& pred, const nn::Tensor& gt) const;

private:
    std::vector<nn::Tensor> weights_;
    std::vector<nn::Tensor> biases_;
};

/// Shared default instance.
const PerceptualProxy& default_perceptual_proxy();

/// L1 over the four (r,g,b,alpha) channels plus omega_1 * perceptual proxy on
/// rgb. pred and gt are [H,W,4].
nn::Tensor rendering_loss(const nn::Tensor& pred, const nn::Tensor& gt, double perceptual_weight,
                          const PerceptualProxy& proxy = default_perceptual_proxy());
/// Image-level convenience for evaluation (no gradient).
double rendering_loss(const ImageRGBA& pred, const ImageRGBA& gt, double perceptual_weight);

enum class NeighborSearch { BruteForce, Grid };

/// Index of the nearest mean in `targets` for each of `queries` by squared
/// Euclidean distance; ties go to the smaller index.
std::vector<std::size_t> nearest_neighbors(const std::vector<Vec3>& queries, const std::vector<Vec3>& targets,
                                           NeighborSearch search = NeighborSearch::Grid);

/// Bidirectional attribute-wise Chamfer loss. For each point of `pred` the
/// nearest `target` mean is found and the L1 differences of location,
/// opacity and color are accumulated in that order, point by point; the sum
/// is divided by |pred| and scaled by w1. The reverse direction uses |target|
/// and w2. Assignments are constant in the backward pass. Differentiable in
/// pred's attributes only.
nn::Tensor chamfer_attribute_loss(const GaussianTensors& pred, const GaussianSet& target, double w1 = 1.0,
                                  double w2 = 1.0, NeighborSearch search = NeighborSearch::Grid);
double chamfer_attribute_loss(const GaussianSet& a, const GaussianSet& b, double w1 = 1.0, double w2 = 1.0,
                              NeighborSearch search = NeighborSearch::Grid);

// Metrics on rgb composited over the background.
double psnr(const ImageRGBA& a, const ImageRGBA& b);
/// Mean SSIM over the three channels, 11x11 Gaussian window (sigma 1.5).
double ssim(const ImageRGBA& a, const ImageRGBA& b);
double mean_l1(const ImageRGBA& a, const ImageRGBA& b);
/// Intersection over union of alpha > 0.5 masks; 1 when both are empty.
double silhouette_iou(const ImageRGBA& a, const ImageRGBA& b);

}  // namespace agg
