#include "agg/pipeline/infer.hpp"

#include "agg/error.hpp"
#include "agg/model/losses.hpp"
#include "agg/model/render_op.hpp"

#include <chrono>

namespace agg {

InferenceResult infer(Model& model, const ImageRGBA& image, bool coarse_only) {
    nn::NoGradGuard guard;
    using clock = std::chrono::steady_clock;
    InferenceResult r;
    const std::int64_t passes = model.forward_passes();
    const std::int64_t steps = model.params().step();
    const auto t0 = clock::now();
    const ImageFeatures f = model.encode(image);
    GaussianTensors g = model.coarse(f);
    const auto t1 = clock::now();
    if (!coarse_only) g = model.refine(g, f);
    const auto t2 = clock::now();
    r.set = g.to_set();
    r.coarse_seconds = std::chrono::duration<double>(t1 - t0).count();
    r.sr_seconds = std::chrono::duration<double>(t2 - t1).count();
    r.total_seconds = std::chrono::duration<double>(clock::now() - t0).count();
    r.forward_passes = model.forward_passes() - passes;
    r.optimizer_steps = model.params().step() - steps;
    return r;
}

std::vector<ImageRGBA> turntable(const GaussianSet& set, const TurntableOptions& o) {
    if (o.frames < 1) throw Error(ErrorCode::InvalidArgument, "turntable needs at least one frame");
    std::vector<ImageRGBA> frames;
    for (int k = 0; k < o.frames; ++k) {
        const double az = 360.0 * k / o.frames;
        frames.push_back(rasterize(set, orbit_camera(az, o.elevation, o.radius, o.size, o.fov)));
    }
    return frames;
}

EvalMetrics evaluate(Model& model, const std::filesystem::path& data_root, const std::vector<std::string>& ids,
                     bool coarse_only, const std::string& variant) {
    if (ids.empty()) throw Error(ErrorCode::InvalidArgument, "no objects to evaluate");
    nn::NoGradGuard guard;
    EvalMetrics m;
    m.variant = variant;
    for (const auto& id : ids) {
        const auto views = load_views(data_root, id);
        if (views.size() < 2) throw Error(ErrorCode::InvalidArgument, id + " has no novel views");
        const GaussianSet pred = infer(model, views[0].image, coarse_only).set;
        for (std::size_t k = 1; k < views.size(); ++k) {
            const ImageRGBA img = rasterize(pred, views[k].camera);
            const ImageRGBA& gt = views[k].image;
            m.psnr += psnr(img, gt);
            m.ssim += ssim(img, gt);
            m.l1 += mean_l1(img, gt);
            m.iou += silhouette_iou(img, gt);
            m.perceptual_proxy +=
                default_perceptual_proxy()(rgb_channels(image_to_tensor(img)), rgb_channels(image_to_tensor(gt))).item();
            ++m.views;
        }
        ++m.objects;
    }
    const double n = m.views;
    m.psnr /= n;
    m.ssim /= n;
    m.l1 /= n;
    m.iou /= n;
    m.perceptual_proxy /= n;
    return m;
}

}  // namespace agg
