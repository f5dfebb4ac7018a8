#pragma once

// Slow, independent references used by the unit tests and the acceptance run.

#include "agg/gaussian.hpp"
#include "agg/image.hpp"
#include "agg/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

namespace agg::oracle {

// Every projected splat is evaluated at every pixel in depth order, with no
// tiles and no early termination. Contributions below `min_alpha` are
// skipped, as in the rasterizer; pass 0 for the bare compositing sum.
inline ImageRGBA direct_blend(const GaussianSet& set, const Camera& cam, const Vec3& background = Vec3::Zero(),
                              double min_alpha = 1.0 / 255.0) {
    std::vector<Splat2D> splats;
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (auto s = project_gaussian(i, set, cam)) splats.push_back(*s);
    }
    std::stable_sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) { return a.depth < b.depth; });
    ImageRGBA image(cam.width, cam.height);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            Vec3 c = Vec3::Zero();
            double t = 1.0;
            for (const Splat2D& s : splats) {
                const Vec2 d(x - s.center.x(), y - s.center.y());
                const double a = s.opacity * std::exp(-0.5 * d.dot(s.conic * d));
                if (a < min_alpha) continue;
                c += t * a * s.color;
                t *= 1.0 - a;
            }
            c += t * background;
            for (int ch = 0; ch < 3; ++ch) image.r(x, y, ch) = c[ch];
            image.a(x, y) = 1.0 - t;
        }
    }
    return image;
}

// Nearest mean by a full scan (first index on ties), then L1 differences of
// location, opacity and color accumulated in that order.
inline double naive_chamfer(const GaussianSet& a, const GaussianSet& b, double w1 = 1.0, double w2 = 1.0) {
    auto direction = [](const GaussianSet& p, const GaussianSet& q) {
        double acc = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            std::size_t best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < q.size(); ++j) {
                const Vec3 diff = p.means[i] - q.means[j];
                const double d = diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2];
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            for (int k = 0; k < 3; ++k) acc += std::abs(p.means[i][k] - q.means[best][k]);
            acc += std::abs(p.opacities[i] - q.opacities[best]);
            for (int k = 0; k < 3; ++k) acc += std::abs(p.colors[i][k] - q.colors[best][k]);
        }
        return acc / static_cast<double>(p.size());
    };
    return w1 * direction(a, b) + w2 * direction(b, a);
}

inline GaussianSet random_set(std::size_t n, std::mt19937_64& rng, double scale = 0.05) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GaussianSet s = GaussianSet::with_count(n, scale);
    for (std::size_t i = 0; i < n; ++i) {
        s.means[i] = Vec3(u(rng), u(rng), u(rng)) * 2.0 - Vec3::Ones();
        s.colors[i] = Vec3(u(rng), u(rng), u(rng));
        s.opacities[i] = u(rng);
    }
    return s;
}

inline double max_abs_diff(const ImageRGBA& a, const ImageRGBA& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rgb.size(); ++i) m = std::max(m, std::abs(a.rgb[i] - b.rgb[i]));
    for (std::size_t i = 0; i < a.alpha.size(); ++i) m = std::max(m, std::abs(a.alpha[i] - b.alpha[i]));
    return m;
}

}  // namespace agg::oracle
