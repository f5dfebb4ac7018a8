#include "agg/model/losses.hpp"
#include "agg/model/model.hpp"
#include "agg/model/model_ops.hpp"
#include "agg/model/render_op.hpp"
#include "agg/nn/fd_check.hpp"
#include "agg/nn/ops.hpp"

#include <random>

namespace agg::nn {

namespace {

Tensor uniform(std::mt19937_64& rng, Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = d(rng);
    return Tensor::from_data(std::move(shape), std::move(v));
}

// Scalar loss = sum(f() * fixed random weights).
std::function<Tensor()> projected(std::mt19937_64& rng, std::function<Tensor()> f) {
    Shape shape;
    {
        NoGradGuard g;
        shape = f().shape();
    }
    Tensor w = uniform(rng, shape, -1.0, 1.0);
    return [f = std::move(f), w] { return sum(mul(f(), w)); };
}

std::vector<Tensor> with_params(std::vector<Tensor> inputs, ParamStore& store, const std::string& prefix = "") {
    for (auto& e : store.entries()) {
        if (e.name.starts_with(prefix) && e.value.requires_grad()) inputs.push_back(e.value);
    }
    return inputs;
}

ModelConfig tiny_config(std::uint64_t seed) {
    ModelConfig c;
    c.image_size = 16;
    c.patch_size = 8;
    c.dim = 8;
    c.heads = 2;
    c.encoder_blocks = 1;
    c.coarse_count = 6;
    c.geometry_blocks = 1;
    c.texture_blocks = 1;
    c.plane_resolution = 4;
    c.plane_features = 2;
    c.plane_patch = 2;
    c.decoder_hidden = 6;
    c.ratio = 2;
    c.sr_channels = 4;
    c.voxel_resolution = 4;
    c.seed = seed;
    return c;
}

}  // namespace

void run_model_fd_cases(std::uint64_t seed, const FdOptions& options, std::vector<FdReport>& out) {
    std::mt19937_64 rng(seed * 7919 + 13);
    auto check = [&](const std::string& name, std::vector<Tensor> inputs, std::function<Tensor()> f) {
        out.push_back(fd_check(name, std::move(inputs), projected(rng, std::move(f)), options));
    };

    {
        Tensor planes = uniform(rng, {3, 5, 5, 2}, -1, 1);
        Tensor coords = uniform(rng, {4, 3}, -0.95, 0.95);
        check("triplane_sample", {planes, coords}, [=] { return triplane_sample(planes, coords); });
    }
    {
        Tensor f = uniform(rng, {4, 6}, -1, 1);
        check("expand_features", {f}, [=] { return expand_features(f, 3); });
    }
    {
        Tensor pos = uniform(rng, {5, 3}, -0.9, 0.9);
        std::vector<double> p(pos.data().begin(), pos.data().end());
        auto map = VoxelMap::build(p, 4);
        Tensor f = uniform(rng, {5, 3}, -1, 1);
        check("voxel_scatter", {f}, [=] { return voxel_scatter(f, map); });
        Tensor grid = uniform(rng, {4, 4, 4, 3}, -1, 1);
        check("voxel_gather", {grid}, [=] { return voxel_gather(grid, map); });
    }
    {
        Tensor x = uniform(rng, {3, 5}, -1, 1);
        check("normalize_channels", {x}, [=] { return normalize_channels(x); });
        Tensor p = uniform(rng, {6}, 0.05, 0.95);
        check("logit", {p}, [=] { return logit(p); });
    }
    {
        Tensor a = uniform(rng, {16, 16, 4}, 0, 1), b = uniform(rng, {16, 16, 4}, 0, 1);
        check("rendering_loss", {a}, [=] { return rendering_loss(a, b, 2.0); });
        Tensor c = uniform(rng, {16, 16, 3}, 0, 1), d = uniform(rng, {16, 16, 3}, 0, 1);
        check("perceptual_proxy", {c}, [=] { return default_perceptual_proxy()(c, d); });
    }
    {
        GaussianSet target = GaussianSet::with_count(7, 0.05);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t i = 0; i < target.size(); ++i) {
            target.means[i] = Vec3(u(rng), u(rng), u(rng)) * 2.0 - Vec3::Ones();
            target.colors[i] = Vec3(u(rng), u(rng), u(rng));
            target.opacities[i] = u(rng);
        }
        GaussianTensors pred;
        pred.means = uniform(rng, {5, 3}, -1, 1);
        pred.colors = uniform(rng, {5, 3}, 0, 1);
        pred.opacities = uniform(rng, {5}, 0, 1);
        check("chamfer_attribute_loss", {pred.means, pred.colors, pred.opacities},
              [=] { return chamfer_attribute_loss(pred, target, 1.0, 1.5); });
    }
    {
        GradcheckOptions go;
        GradcheckScene scene = make_gradcheck_scene(seed, go);
        GaussianTensors g = GaussianTensors::from_set(scene.set);
        check("render", {g.means, g.colors, g.opacities}, [=] { return render_tensor(g, scene.camera, scene.settings); });
    }
    {
        ParamStore store(seed + 5);
        PointVoxelBlock block(store, "pvb", 3, 4, 4);
        Tensor pos = uniform(rng, {6, 3}, -0.9, 0.9);
        std::vector<double> p(pos.data().begin(), pos.data().end());
        auto map = VoxelMap::build(p, 4);
        Tensor f = uniform(rng, {6, 3}, -1, 1);
        check("point_voxel_block", with_params({f}, store), [=, &block] { return block(f, map); });
    }
    {
        ParamStore store(seed + 6);
        RgbInjection inject(store, "inj", 4, 6, 2);
        Tensor f = uniform(rng, {5, 4}, -1, 1);
        ImageFeatures img{uniform(rng, {1, 6}, -1, 1), uniform(rng, {3, 6}, -1, 1)};
        check("inject_rgb", with_params({f, img.patches}, store), [=, &inject] { return inject(f, img); });
    }
    {
        // Whole generator at toy size: coarse stage then super resolution.
        Model model(tiny_config(seed));
        ImageRGBA image(16, 16);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (double& v : image.rgb) v = u(rng);
        auto& m = model;
        check("coarse_forward", with_params(with_params({}, model.params(), "geometry."), model.params(), "encoder."), [&m, image] {
            GaussianTensors g = m.coarse(m.encode(image));
            return concat_cols({g.means, g.colors, reshape(g.opacities, {g.means.dim(0), 1})});
        });
        check("texture_field", with_params({}, model.params(), "texture."), [&m, image] {
            GaussianTensors g = m.coarse(m.encode(image));
            return concat_cols({g.colors, reshape(g.opacities, {g.means.dim(0), 1})});
        });
        check("sr_forward", with_params({}, model.params(), "sr."), [&m, image] {
            ImageFeatures f = m.encode(image);
            GaussianTensors g = m.refine(m.coarse(f), f);
            return concat_cols({g.means, g.colors, reshape(g.opacities, {g.means.dim(0), 1})});
        });
    }
}

}  // namespace agg::nn
