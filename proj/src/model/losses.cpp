#include "agg/model/losses.hpp"

#include "agg/error.hpp"
#include "agg/model/model_ops.hpp"
#include "agg/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace agg {

using nn::Tensor;

// ------------------------------------------------------------ perceptual

PerceptualProxy::PerceptualProxy(std::uint64_t seed, int channels) {
    std::mt19937_64 rng(seed);
    int in = 3;
    for (int l = 0; l < 3; ++l) {
        const double a = std::sqrt(6.0 / (9.0 * in + channels));
        std::uniform_real_distribution<double> d(-a, a);
        std::uniform_real_distribution<double> db(-0.1, 0.1);
        std::vector<double> w(static_cast<std::size_t>(9 * in * channels)), b(static_cast<std::size_t>(channels));
        for (double& v : w) v = d(rng);
        for (double& v : b) v = db(rng);
        weights_.push_back(Tensor::from_data({9 * in, channels}, std::move(w)));
        biases_.push_back(Tensor::from_data({channels}, std::move(b)));
        in = channels;
    }
}

Tensor PerceptualProxy::operator()(const Tensor& pred, const Tensor& gt) const {
    if (pred.shape() != gt.shape() || pred.rank() != 3 || pred.dim(2) != 3) {
        throw Error(ErrorCode::ShapeMismatch, "perceptual proxy needs matching [H,W,3] images");
    }
    if (pred.dim(0) < 16 || pred.dim(1) < 16 || pred.dim(0) % 4 || pred.dim(1) % 4) {
        throw Error(ErrorCode::ShapeMismatch, "perceptual proxy needs images >= 16 px with sides divisible by 4");
    }
    Tensor a = pred, b = gt;
    Tensor total;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        if (l > 0) {
            a = nn::avg_pool2d(a);
            b = nn::avg_pool2d(b);
        }
        a = nn::gelu(nn::conv2d(a, weights_[l], biases_[l]));
        b = nn::gelu(nn::conv2d(b, weights_[l], biases_[l]));
        // Mean over pixels of the squared distance summed over channels.
        const double pixels = static_cast<double>(a.dim(0) * a.dim(1));
        Tensor d = nn::scale(nn::sum(nn::square(nn::sub(normalize_channels(a), normalize_channels(b)))), 1.0 / pixels);
        total = total.defined() ? nn::add(total, d) : d;
    }
    return total;
}

const PerceptualProxy& default_perceptual_proxy() {
    static const PerceptualProxy proxy;
    return proxy;
}

Tensor rendering_loss(const Tensor& pred, const Tensor& gt, double perceptual_weight, const PerceptualProxy& proxy) {
    if (pred.shape() != gt.shape() || pred.rank() != 3 || pred.dim(2) != 4) {
        throw Error(ErrorCode::ShapeMismatch, "rendering_loss needs matching [H,W,4] images, got " +
                                                  nn::shape_string(pred.shape()) + " and " +
                                                  nn::shape_string(gt.shape()));
    }
    Tensor loss = nn::mean(nn::abs(nn::sub(pred, gt)));
    if (perceptual_weight != 0.0) {
        loss = nn::add(loss, nn::scale(proxy(rgb_channels(pred), rgb_channels(gt)), perceptual_weight));
    }
    return loss;
}

double rendering_loss(const ImageRGBA& pred, const ImageRGBA& gt, double perceptual_weight) {
    nn::NoGradGuard guard;
    return rendering_loss(image_to_tensor(pred), image_to_tensor(gt), perceptual_weight).item();
}

// --------------------------------------------------------------- chamfer

namespace {

double dist2(const Vec3& a, const Vec3& b) {
    const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
    return dx * dx + dy * dy + dz * dz;
}

std::vector<std::size_t> brute_force(const std::vector<Vec3>& queries, const std::vector<Vec3>& targets) {
    std::vector<std::size_t> out(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t j = 0; j < targets.size(); ++j) {
            const double d = dist2(queries[i], targets[j]);
            if (d < best) {
                best = d;
                arg = j;
            }
        }
        out[i] = arg;
    }
    return out;
}

// Uniform grid over the targets' bounding box. Cells are visited in
// Chebyshev rings around the query's (clamped) cell; after ring s every
// unvisited point is at least s * cell away, which bounds the search.
std::vector<std::size_t> grid_search(const std::vector<Vec3>& queries, const std::vector<Vec3>& targets) {
    Vec3 lo = targets[0], hi = targets[0];
    for (const auto& t : targets) {
        lo = lo.cwiseMin(t);
        hi = hi.cwiseMax(t);
    }
    const double extent = std::max((hi - lo).maxCoeff(), 1e-12);
    const int per_axis = std::clamp(static_cast<int>(std::cbrt(static_cast<double>(targets.size()) / 2.0)), 1, 64);
    const double cell = extent / per_axis;
    auto coord = [&](double v, int axis) {
        return std::clamp(static_cast<int>(std::floor((v - lo[axis]) / cell)), 0, per_axis - 1);
    };
    const int n = per_axis;
    std::vector<std::vector<std::size_t>> cells(static_cast<std::size_t>(n) * n * n);
    for (std::size_t j = 0; j < targets.size(); ++j) {
        const auto& t = targets[j];
        cells[(static_cast<std::size_t>(coord(t[2], 2)) * n + coord(t[1], 1)) * n + coord(t[0], 0)].push_back(j);
    }
    std::vector<std::size_t> out(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto& q = queries[i];
        const int cx = coord(q[0], 0), cy = coord(q[1], 1), cz = coord(q[2], 2);
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (int s = 0; s < n; ++s) {
            for (int z = std::max(cz - s, 0); z <= std::min(cz + s, n - 1); ++z) {
                for (int y = std::max(cy - s, 0); y <= std::min(cy + s, n - 1); ++y) {
                    for (int x = std::max(cx - s, 0); x <= std::min(cx + s, n - 1); ++x) {
                        if (std::max({std::abs(x - cx), std::abs(y - cy), std::abs(z - cz)}) != s) continue;
                        for (std::size_t j : cells[(static_cast<std::size_t>(z) * n + y) * n + x]) {
                            const double d = dist2(q, targets[j]);
                            if (d < best || (d == best && j < arg)) {
                                best = d;
                                arg = j;
                            }
                        }
                    }
                }
            }
            // Shrunk slightly so cell assignment rounding cannot cut the search short.
            const double reach = static_cast<double>(s) * cell * (1.0 - 1e-9);
            if (best < reach * reach) break;
        }
        out[i] = arg;
    }
    return out;
}

struct Attr {
    const Vec3* mean;
    const Vec3* color;
    double opacity;
};

// Accumulates |d location| + |d opacity| + |d color| in a fixed order.
double accumulate(double acc, const Attr& a, const Attr& b) {
    for (int k = 0; k < 3; ++k) acc += std::abs((*a.mean)[k] - (*b.mean)[k]);
    acc += std::abs(a.opacity - b.opacity);
    for (int k = 0; k < 3; ++k) acc += std::abs((*a.color)[k] - (*b.color)[k]);
    return acc;
}

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

std::vector<std::size_t> nearest_neighbors(const std::vector<Vec3>& queries, const std::vector<Vec3>& targets,
                                           NeighborSearch search) {
    if (targets.empty()) throw Error(ErrorCode::EmptySet, "nearest neighbour search over an empty set");
    return search == NeighborSearch::BruteForce ? brute_force(queries, targets) : grid_search(queries, targets);
}

double chamfer_attribute_loss(const GaussianSet& a, const GaussianSet& b, double w1, double w2, NeighborSearch search) {
    if (a.size() == 0 || b.size() == 0) throw Error(ErrorCode::EmptySet, "chamfer loss needs two nonempty sets");
    const auto ab = nearest_neighbors(a.means, b.means, search);
    const auto ba = nearest_neighbors(b.means, a.means, search);
    double fwd = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const std::size_t j = ab[i];
        fwd = accumulate(fwd, {&a.means[i], &a.colors[i], a.opacities[i]}, {&b.means[j], &b.colors[j], b.opacities[j]});
    }
    double bwd = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) {
        const std::size_t i = ba[j];
        bwd = accumulate(bwd, {&b.means[j], &b.colors[j], b.opacities[j]}, {&a.means[i], &a.colors[i], a.opacities[i]});
    }
    return w1 * (fwd / static_cast<double>(a.size())) + w2 * (bwd / static_cast<double>(b.size()));
}

Tensor chamfer_attribute_loss(const GaussianTensors& pred, const GaussianSet& target, double w1, double w2,
                              NeighborSearch search) {
    GaussianSet p = pred.to_set();
    const double value = chamfer_attribute_loss(p, target, w1, w2, search);
    auto ab = nearest_neighbors(p.means, target.means, search);
    auto ba = nearest_neighbors(target.means, p.means, search);
    return nn::make_result({}, {value}, {pred.means, pred.colors, pred.opacities},
                           [p = std::move(p), target, ab = std::move(ab), ba = std::move(ba), w1,
                            w2](nn::detail::Node& n) {
                               const double g = n.grad[0];
                               const double cf = g * w1 / static_cast<double>(p.size());
                               const double cb = g * w2 / static_cast<double>(target.size());
                               auto& in = n.inputs;
                               auto add = [&](std::size_t i, std::size_t j, double c) {
                                   if (in[0]->requires_grad) {
                                       for (int k = 0; k < 3; ++k) {
                                           in[0]->grad[3 * i + k] += c * sign(p.means[i][k] - target.means[j][k]);
                                       }
                                   }
                                   if (in[1]->requires_grad) {
                                       for (int k = 0; k < 3; ++k) {
                                           in[1]->grad[3 * i + k] += c * sign(p.colors[i][k] - target.colors[j][k]);
                                       }
                                   }
                                   if (in[2]->requires_grad) {
                                       in[2]->grad[i] += c * sign(p.opacities[i] - target.opacities[j]);
                                   }
                               };
                               for (std::size_t i = 0; i < p.size(); ++i) add(i, ab[i], cf);
                               for (std::size_t j = 0; j < target.size(); ++j) add(ba[j], j, cb);
                           });
}

// --------------------------------------------------------------- metrics

namespace {

void require_same_size(const ImageRGBA& a, const ImageRGBA& b) {
    if (a.width != b.width || a.height != b.height) throw Error(ErrorCode::ShapeMismatch, "image sizes differ");
}

}  // namespace

double mean_l1(const ImageRGBA& a, const ImageRGBA& b) {
    require_same_size(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.rgb.size(); ++i) s += std::abs(a.rgb[i] - b.rgb[i]);
    return s / static_cast<double>(a.rgb.size());
}

double psnr(const ImageRGBA& a, const ImageRGBA& b) {
    require_same_size(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.rgb.size(); ++i) s += (a.rgb[i] - b.rgb[i]) * (a.rgb[i] - b.rgb[i]);
    const double mse = s / static_cast<double>(a.rgb.size());
    return mse <= 1e-12 ? 120.0 : -10.0 * std::log10(mse);
}

double ssim(const ImageRGBA& a, const ImageRGBA& b) {
    require_same_size(a, b);
    const int w = a.width, h = a.height, radius = 5;
    std::vector<double> kernel(2 * radius + 1);
    double ks = 0.0;
    for (int i = -radius; i <= radius; ++i) ks += (kernel[i + radius] = std::exp(-0.5 * i * i / (1.5 * 1.5)));
    for (double& k : kernel) k /= ks;
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    // Separable blur with clamped borders.
    auto blur = [&](const std::vector<double>& src) {
        std::vector<double> tmp(src.size()), out(src.size());
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * src[y * w + std::clamp(x + i, 0, w - 1)];
                tmp[y * w + x] = s;
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = 0.0;
                for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
                out[y * w + x] = s;
            }
        }
        return out;
    };
    double total = 0.0;
    const std::size_t n = a.pixels();
    for (int c = 0; c < 3; ++c) {
        std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
        for (std::size_t p = 0; p < n; ++p) {
            x[p] = a.rgb[3 * p + c];
            y[p] = b.rgb[3 * p + c];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        auto mx = blur(x), my = blur(y), sxx = blur(xx), syy = blur(yy), sxy = blur(xy);
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            const double vx = sxx[p] - mx[p] * mx[p], vy = syy[p] - my[p] * my[p], cxy = sxy[p] - mx[p] * my[p];
            s += ((2 * mx[p] * my[p] + c1) * (2 * cxy + c2)) /
                 ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
        }
        total += s / static_cast<double>(n);
    }
    return total / 3.0;
}

double silhouette_iou(const ImageRGBA& a, const ImageRGBA& b) {
    require_same_size(a, b);
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < a.pixels(); ++p) {
        const bool ma = a.alpha[p] > 0.5, mb = b.alpha[p] > 0.5;
        inter += ma && mb;
        uni += ma || mb;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace agg
