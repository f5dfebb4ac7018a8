#pragma once

#include "agg/camera.hpp"
#include "agg/gaussian.hpp"
#include "agg/image.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace agg {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

struct RasterSettings {
    Vec3 background = Vec3::Zero();
    int tile_size = 16;
    int threads = 1;
    double low_pass = 0.3;
    double min_alpha = 1.0 / 255.0;
    double min_transmittance = 1e-4;
};

/// Screen-space image of one Gaussian.
struct Splat2D {
    Vec2 center;
    Mat2 cov2d;      // J W Sigma W^T J^T, before the low-pass term
    Mat2 conic;      // (cov2d + low_pass * I)^-1
    double depth = 0.0;
    Vec3 color;
    double opacity = 0.0;
    double radius = 0.0;  // 3 * sqrt(max eigenvalue of cov2d + low_pass * I)
    double extent = 0.0;  // binning radius: max(radius, contour where opacity * G = min_alpha)
    std::uint32_t index = 0;
};

/// Projects Gaussian `index`; std::nullopt means culled (behind the near plane,
/// past the far plane, or footprint outside the image).
std::optional<Splat2D> project_gaussian(std::size_t index, const GaussianSet& set, const Camera& cam,
                                        const Covariance3& cov, const RasterSettings& settings = {});
std::optional<Splat2D> project_gaussian(std::size_t index, const GaussianSet& set, const Camera& cam);

/// Front-to-back alpha blending of depth-sorted splats over 16x16 tiles.
ImageRGBA rasterize(const GaussianSet& set, const Camera& cam, const RasterSettings& settings = {});

struct RenderGradients {
    std::vector<Vec3> d_means;
    std::vector<Vec3> d_colors;
    std::vector<double> d_opacities;
};

/// Analytic gradients of a loss given dL/d(image). `upstream` holds H*W*4
/// values per pixel in (r, g, b, alpha) order, where rgb is the composited
/// color and alpha is 1 - final transmittance.
RenderGradients rasterize_backward(const GaussianSet& set, const Camera& cam, const RasterSettings& settings,
                                   std::span<const double> upstream);

/// Packs an image into the (r, g, b, alpha)-per-pixel layout used by
/// rasterize_backward.
std::vector<double> pack_rgba(const ImageRGBA& image);

struct GradcheckOptions {
    int gaussians = 8;
    int size = 32;
    double step = 1e-4;
    double tolerance = 1e-3;
    double magnitude_floor = 1e-6;
    bool include_culled = false;
    // Test hook applied to the analytic gradients before comparison.
    std::function<void(RenderGradients&)> corrupt;
};

struct GradcheckReport {
    double max_rel_err_means = 0.0;
    double max_rel_err_colors = 0.0;
    double max_rel_err_opacities = 0.0;
    int entries_checked = 0;
    // Entries where a kink (contribution floor / early exit) fell inside the
    // step and the central difference was retaken with a smaller step.
    int entries_refined = 0;
    // Culled Gaussian gradient magnitudes (analytic, numeric); zero when absent.
    double culled_analytic = 0.0;
    double culled_numeric = 0.0;
    bool pass = false;
};

struct GradcheckScene {
    GaussianSet set;
    Camera camera;
    RasterSettings settings;
    std::vector<double> weights;  // loss = sum(weights * packed image)
};

GradcheckScene make_gradcheck_scene(std::uint64_t seed, const GradcheckOptions& options);

/// Compares rasterize_backward against central finite differences of
/// rasterize on a seeded random scene.
GradcheckReport gradcheck(std::uint64_t seed, const GradcheckOptions& options = {});

}  // namespace agg
