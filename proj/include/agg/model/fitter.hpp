#pragma once

#include "agg/camera.hpp"
#include "agg/gaussian.hpp"
#include "agg/image.hpp"
#include "agg/render.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace agg {

struct View {
    Camera camera;
    ImageRGBA image;
};

struct FitOptions {
    int max_iterations = 2000;
    double lr = 0.05;
    // Learning-rate multiplier for means relative to color/opacity logits.
    double mean_lr_scale = 0.1;
    double perceptual_weight = 0.0;
    int plateau_window = 50;
    double plateau_tolerance = 1e-4;
    double scale = 0.05;
    Vec3 init_color = Vec3::Constant(0.5);
    double init_opacity = 0.5;
    RasterSettings settings{};
};

enum class FitStatus { Converged, MaxIterations, NonConvergence };

const char* fit_status_name(FitStatus status);

struct FitResult {
    GaussianSet set;
    FitStatus status = FitStatus::MaxIterations;
    int iterations = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double initial_psnr = 0.0;
    double final_psnr = 0.0;
};

/// Per-object multi-view fit of means, colors and opacities under the
/// rendering loss with fixed count and canonical scale/rotation. Stops at
/// max_iterations or when the relative loss improvement over the last
/// plateau_window iterations drops below plateau_tolerance.
FitResult fit_pseudo_label(const std::vector<View>& views, const std::vector<Vec3>& init_means,
                           const FitOptions& options = {});
/// Same, starting from given colors/opacities instead of the defaults.
FitResult fit_pseudo_label(const std::vector<View>& views, const GaussianSet& init, const FitOptions& options = {});

/// Mean rendering loss / PSNR of `set` over `views`.
double views_loss(const GaussianSet& set, const std::vector<View>& views, double perceptual_weight,
                  const RasterSettings& settings = {});
double views_psnr(const GaussianSet& set, const std::vector<View>& views, const RasterSettings& settings = {});

/// 64 Gaussians on a sphere of radius 0.5 with smoothly varying colors,
/// seen by 8 cameras at 64x64; init means are the target means with seeded
/// jitter.
struct SphereFixture {
    GaussianSet target;
    std::vector<View> views;
    std::vector<Vec3> init_means;
};
SphereFixture make_sphere_fixture(std::uint64_t seed = 0);

}  // namespace agg
