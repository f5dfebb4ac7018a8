#pragma once

#include "agg/nn/tensor.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace agg {

/// Bilinear lookup on three planes [3, R, R, F] covering [-1,1]^2 (node i at
/// -1 + 2i/(R-1)). Plane 0 is indexed by (x, y), plane 1 by (x, z), plane 2
/// by (y, z); the first coordinate selects the column. Returns [N, 3F] with
/// the three samples concatenated. Differentiable in planes and coords;
/// coordinates outside [-1,1] are clamped (zero gradient there).
nn::Tensor triplane_sample(const nn::Tensor& planes, const nn::Tensor& coords);

/// Rearranges [N, C*r] into [N*r, C]: element (n, c*r + k) goes to (n*r + k, c).
/// Throws IndivisibleWidth when the width is not a multiple of r.
nn::Tensor expand_features(const nn::Tensor& features, std::int64_t r);
/// Inverse of expand_features.
nn::Tensor collapse_features(const nn::Tensor& features, std::int64_t r);

/// Trilinear weights of points into a D^3 voxel grid over [-1,1]^3 with
/// voxel centers at -1 + (i + 0.5) * 2 / D.
struct VoxelMap {
    int resolution = 0;
    std::int64_t points = 0;
    // 8 corners per point: flat voxel index and weight.
    std::vector<std::int64_t> voxel;
    std::vector<double> weight;
    // Per-voxel sum of weights.
    std::vector<double> total;

    static std::shared_ptr<const VoxelMap> build(const std::vector<double>& positions, int resolution);
};

inline constexpr double kScatterEpsilon = 1e-8;

/// [N, C] point features -> [D, D, D, C] grid, each voxel the weight-normalized
/// average of the points touching it.
nn::Tensor voxel_scatter(const nn::Tensor& features, std::shared_ptr<const VoxelMap> map);
/// [D, D, D, C] grid -> [N, C] trilinear interpolation at the points.
nn::Tensor voxel_gather(const nn::Tensor& grid, std::shared_ptr<const VoxelMap> map);

/// x / sqrt(sum_c x^2 + eps) over the last dimension.
nn::Tensor normalize_channels(const nn::Tensor& x, double eps = 1e-10);

}  // namespace agg

namespace agg {

/// log(p / (1 - p)) with p clamped to [eps, 1 - eps]; zero gradient where clamped.
nn::Tensor logit(const nn::Tensor& p, double eps = 1e-4);

}  // namespace agg
