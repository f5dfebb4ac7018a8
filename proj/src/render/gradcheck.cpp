#include "agg/render.hpp"

#include "agg/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace agg {

namespace {

double weighted_loss(const GaussianSet& set, const GradcheckScene& scene) {
    const ImageRGBA img = rasterize(set, scene.camera, scene.settings);
    const std::vector<double> packed = pack_rgba(img);
    double loss = 0.0;
    for (std::size_t i = 0; i < packed.size(); ++i) loss += scene.weights[i] * packed[i];
    return loss;
}

double rel_err(double a, double n) {
    const double m = std::max(std::abs(a), std::abs(n));
    return m == 0.0 ? 0.0 : std::abs(a - n) / m;
}

}  // namespace

GradcheckScene make_gradcheck_scene(std::uint64_t seed, const GradcheckOptions& options) {
    if (options.gaussians < 1 || options.gaussians > 64 || options.size < 4 || options.size > 64) {
        throw Error(ErrorCode::InvalidRange, "gradcheck scenes are limited to 64 gaussians and 64x64 pixels");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);

    GradcheckScene scene;
    scene.camera.width = options.size;
    scene.camera.height = options.size;
    scene.camera.focal = 1.25 * options.size;
    scene.camera.cx = 0.5 * options.size;
    scene.camera.cy = 0.5 * options.size;
    scene.camera.near = 0.1;
    scene.camera.far = 100.0;

    GaussianSet& set = scene.set;
    const int n = options.gaussians;
    set.means.resize(n);
    set.colors.resize(n);
    set.opacities.resize(n);
    set.scale = 0.08 + 0.06 * u(rng);
    Quat q{u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5};
    const double qn = q.norm();
    set.rotation = {q.w / qn, q.x / qn, q.y / qn, q.z / qn};
    for (int i = 0; i < n; ++i) {
        const double z = 2.5 + u(rng);
        set.means[i] = Vec3((u(rng) - 0.5) * 1.4, (u(rng) - 0.5) * 1.4, z);
        set.colors[i] = Vec3(u(rng), u(rng), u(rng));
        set.opacities[i] = 0.1 + 0.85 * u(rng);
    }
    if (options.include_culled) {
        set.means[n - 1] = Vec3(0.1, -0.1, -1.0);
    }
    scene.settings.background = Vec3(u(rng), u(rng), u(rng));
    scene.weights.resize(static_cast<std::size_t>(options.size) * options.size * 4);
    for (double& w : scene.weights) w = 2.0 * u(rng) - 1.0;
    return scene;
}

GradcheckReport gradcheck(std::uint64_t seed, const GradcheckOptions& options) {
    const GradcheckScene scene = make_gradcheck_scene(seed, options);
    RenderGradients analytic = rasterize_backward(scene.set, scene.camera, scene.settings, scene.weights);
    if (options.corrupt) options.corrupt(analytic);

    GradcheckReport report;
    GaussianSet work = scene.set;

    auto central = [&](double* value, double h) {
        const double saved = *value;
        *value = saved + h;
        const double plus = weighted_loss(work, scene);
        *value = saved - h;
        const double minus = weighted_loss(work, scene);
        *value = saved;
        return (plus - minus) / (2.0 * h);
    };

    // A central difference straddling a hard threshold (contribution floor,
    // early termination) is detected by disagreement with the half step and
    // retaken with a step that no longer straddles it.
    auto numeric = [&](double* value) {
        double h = options.step;
        double d = central(value, h);
        for (int level = 0; level < 5; ++level) {
            const double half = central(value, 0.5 * h);
            const double scale = std::max({std::abs(d), std::abs(half), 1e-9});
            if (std::abs(d - half) <= 1e-4 * scale) {
                if (level > 0) ++report.entries_refined;
                return d;
            }
            h *= 0.25;
            d = central(value, h);
        }
        return d;
    };

    auto compare = [&](double a, double n, double& worst) {
        ++report.entries_checked;
        if (std::max(std::abs(a), std::abs(n)) > options.magnitude_floor) {
            worst = std::max(worst, rel_err(a, n));
        }
    };

    const std::size_t count = work.size();
    for (std::size_t i = 0; i < count; ++i) {
        for (int k = 0; k < 3; ++k) {
            compare(analytic.d_means[i][k], numeric(&work.means[i][k]), report.max_rel_err_means);
            compare(analytic.d_colors[i][k], numeric(&work.colors[i][k]), report.max_rel_err_colors);
        }
        compare(analytic.d_opacities[i], numeric(&work.opacities[i]), report.max_rel_err_opacities);
    }

    if (options.include_culled) {
        const std::size_t c = count - 1;
        report.culled_analytic = analytic.d_means[c].norm() + analytic.d_colors[c].norm() +
                                 std::abs(analytic.d_opacities[c]);
        double num = 0.0;
        for (int k = 0; k < 3; ++k) {
            num += std::abs(central(&work.means[c][k], options.step));
            num += std::abs(central(&work.colors[c][k], options.step));
        }
        num += std::abs(central(&work.opacities[c], options.step));
        report.culled_numeric = num;
    }

    report.pass = report.max_rel_err_means < options.tolerance && report.max_rel_err_colors < options.tolerance &&
                  report.max_rel_err_opacities < options.tolerance;
    return report;
}

}  // namespace agg
