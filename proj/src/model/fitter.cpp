#include "agg/model/fitter.hpp"

#include "agg/error.hpp"
#include "agg/model/losses.hpp"
#include "agg/model/render_op.hpp"
#include "agg/nn/ops.hpp"
#include "agg/nn/param_store.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace agg {

const char* fit_status_name(FitStatus status) {
    switch (status) {
        case FitStatus::Converged: return "converged";
        case FitStatus::MaxIterations: return "max_iterations";
        case FitStatus::NonConvergence: return "non_convergence";
    }
    return "unknown";
}

double views_loss(const GaussianSet& set, const std::vector<View>& views, double perceptual_weight,
                  const RasterSettings& settings) {
    double s = 0.0;
    for (const auto& v : views) s += rendering_loss(rasterize(set, v.camera, settings), v.image, perceptual_weight);
    return s / static_cast<double>(views.size());
}

double views_psnr(const GaussianSet& set, const std::vector<View>& views, const RasterSettings& settings) {
    double s = 0.0;
    for (const auto& v : views) s += psnr(rasterize(set, v.camera, settings), v.image);
    return s / static_cast<double>(views.size());
}

namespace {

double logit(double p) {
    p = std::clamp(p, 1e-4, 1.0 - 1e-4);
    return std::log(p / (1.0 - p));
}

}  // namespace

FitResult fit_pseudo_label(const std::vector<View>& views, const std::vector<Vec3>& init_means,
                           const FitOptions& options) {
    GaussianSet init = GaussianSet::with_count(init_means.size(), options.scale);
    init.means = init_means;
    for (auto& c : init.colors) c = options.init_color;
    for (auto& o : init.opacities) o = options.init_opacity;
    return fit_pseudo_label(views, init, options);
}

FitResult fit_pseudo_label(const std::vector<View>& views, const GaussianSet& init, const FitOptions& options) {
    if (views.size() < 4) throw Error(ErrorCode::InvalidArgument, "fitting needs at least 4 views");
    if (init.size() == 0) throw Error(ErrorCode::EmptySet, "fitting needs at least one Gaussian");
    const auto n = static_cast<std::int64_t>(init.size());

    nn::ParamStore store;
    std::vector<double> m(3 * n), c(3 * n), o(n);
    for (std::int64_t i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            m[3 * i + k] = init.means[i][k];
            c[3 * i + k] = logit(init.colors[i][k]);
        }
        o[i] = logit(init.opacities[i]);
    }
    nn::Tensor means = store.add("means", {n, 3}, std::move(m));
    nn::Tensor color_logits = store.add("colors", {n, 3}, std::move(c));
    nn::Tensor opacity_logits = store.add("opacities", {n}, std::move(o));
    store.set_lr_scale("means", options.mean_lr_scale);

    std::vector<nn::Tensor> targets;
    for (const auto& v : views) targets.push_back(image_to_tensor(v.image));

    auto current = [&] {
        GaussianTensors g;
        g.means = means;
        g.colors = nn::sigmoid(color_logits);
        g.opacities = nn::sigmoid(opacity_logits);
        g.scale = options.scale;
        g.rotation = init.rotation;
        return g;
    };

    FitResult result;
    GaussianSet start = current().to_set();
    result.initial_loss = views_loss(start, views, options.perceptual_weight, options.settings);
    result.initial_psnr = views_psnr(start, views, options.settings);

    std::vector<double> history;
    GaussianSet best = start;
    double best_value = std::numeric_limits<double>::infinity();
    result.status = FitStatus::MaxIterations;
    for (int it = 0; it < options.max_iterations; ++it) {
        GaussianTensors g = current();
        nn::Tensor loss;
        for (std::size_t v = 0; v < views.size(); ++v) {
            nn::Tensor l = rendering_loss(render_tensor(g, views[v].camera, options.settings), targets[v],
                                          options.perceptual_weight);
            loss = loss.defined() ? nn::add(loss, l) : l;
        }
        loss = nn::scale(loss, 1.0 / static_cast<double>(views.size()));
        const double value = loss.item();
        if (!std::isfinite(value)) {
            result.status = FitStatus::NonConvergence;
            break;
        }
        history.push_back(value);
        result.iterations = it + 1;
        if (value < best_value) {
            best_value = value;
            best = g.to_set();
        }
        const auto w = static_cast<std::size_t>(options.plateau_window);
        if (history.size() > w) {
            const double before = history[history.size() - 1 - w];
            if ((before - value) / std::max(before, 1e-12) < options.plateau_tolerance) {
                result.status = FitStatus::Converged;
                break;
            }
        }
        nn::backward(loss, store);
        store.adam_step(options.lr);
    }

    // The last step may overshoot; keep the best iterate seen.
    {
        GaussianSet last = current().to_set();
        const double last_value = views_loss(last, views, options.perceptual_weight, options.settings);
        result.set = last_value <= best_value ? std::move(last) : std::move(best);
    }
    result.final_loss = views_loss(result.set, views, options.perceptual_weight, options.settings);
    result.final_psnr = views_psnr(result.set, views, options.settings);
    if (!std::isfinite(result.final_loss) || result.final_loss > result.initial_loss) {
        result.status = FitStatus::NonConvergence;
    }
    return result;
}

SphereFixture make_sphere_fixture(std::uint64_t seed) {
    SphereFixture f;
    const int n = 64;
    f.target = GaussianSet::with_count(n, 0.09);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (i + 0.5) / n;
        const double r = std::sqrt(1.0 - z * z);
        const double phi = golden * i;
        const Vec3 dir(r * std::cos(phi), r * std::sin(phi), z);
        f.target.means[i] = 0.5 * dir;
        f.target.colors[i] = Vec3(0.5 + 0.45 * dir[0], 0.5 + 0.45 * dir[1], 0.5 - 0.45 * dir[2]);
        f.target.opacities[i] = 0.9;
    }
    for (int k = 0; k < 8; ++k) {
        const double az = 45.0 * k;
        const double el = (k % 2 == 0) ? 20.0 : -15.0;
        Camera cam = orbit_camera(az, el, 2.4, 64, 45.0);
        f.views.push_back({cam, rasterize(f.target, cam)});
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> jitter(0.0, 0.04);
    f.init_means = f.target.means;
    for (auto& m : f.init_means) m += Vec3(jitter(rng), jitter(rng), jitter(rng));
    return f;
}

}  // namespace agg
