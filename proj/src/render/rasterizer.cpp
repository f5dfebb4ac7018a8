#include "agg/render.hpp"

#include "agg/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

namespace agg {

namespace {

struct Prepared {
    std::vector<Splat2D> splats;               // ascending (depth, index)
    std::vector<std::vector<std::uint32_t>> tiles;  // positions into `splats`, depth order
    int tiles_x = 0;
    int tiles_y = 0;
    Mat3 view_cov = Mat3::Zero();
};

void check_settings(const RasterSettings& s) {
    if (s.tile_size <= 0 || s.threads <= 0) {
        throw Error(ErrorCode::InvalidArgument, "tile size and thread count must be positive");
    }
    if (!s.background.allFinite()) {
        throw Error(ErrorCode::NonFiniteInput, "background is not finite");
    }
}

Mat2 projection_jacobian_outer(const Vec3& p, double f, const Mat3& v, Eigen::Matrix<double, 2, 3>& j) {
    const double iz = 1.0 / p.z();
    j << f * iz, 0.0, -f * p.x() * iz * iz,
         0.0, f * iz, -f * p.y() * iz * iz;
    return j * v * j.transpose();
}

std::optional<Splat2D> project_with_view_cov(std::size_t index, const GaussianSet& set, const Camera& cam,
                                             const Mat3& view_cov, const RasterSettings& settings) {
    const Vec3& mean = set.means[index];
    if (!mean.allFinite() || !set.colors[index].allFinite() || !std::isfinite(set.opacities[index])) {
        throw Error(ErrorCode::NonFiniteInput, "gaussian " + std::to_string(index) + " is not finite");
    }
    const Vec3 p = cam.to_view(mean);
    if (!(p.z() > cam.near) || p.z() >= cam.far) {
        return std::nullopt;
    }
    Eigen::Matrix<double, 2, 3> j;
    const Mat2 cov2d = projection_jacobian_outer(p, cam.focal, view_cov, j);
    Mat2 m = cov2d;
    m(0, 0) += settings.low_pass;
    m(1, 1) += settings.low_pass;
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    if (!(det > 0.0)) {
        return std::nullopt;
    }
    Splat2D s;
    s.center = Vec2(cam.focal * p.x() / p.z() + cam.cx, cam.focal * p.y() / p.z() + cam.cy);
    s.cov2d = cov2d;
    s.conic << m(1, 1) / det, -m(0, 1) / det, -m(1, 0) / det, m(0, 0) / det;
    s.depth = p.z();
    s.color = set.colors[index];
    s.opacity = set.opacities[index];
    const double mid = 0.5 * (m(0, 0) + m(1, 1));
    const double half_diff = 0.5 * (m(0, 0) - m(1, 1));
    const double lambda_max = mid + std::sqrt(half_diff * half_diff + m(0, 1) * m(1, 0));
    const double sigma = std::sqrt(lambda_max);
    s.radius = 3.0 * sigma;
    double contour = 0.0;
    if (s.opacity > settings.min_alpha) {
        contour = std::sqrt(2.0 * std::log(s.opacity / settings.min_alpha)) * sigma;
    }
    s.extent = std::max(s.radius, contour);
    s.index = static_cast<std::uint32_t>(index);
    if (s.center.x() + s.extent < 0.0 || s.center.x() - s.extent > cam.width - 1 ||
        s.center.y() + s.extent < 0.0 || s.center.y() - s.extent > cam.height - 1) {
        return std::nullopt;
    }
    return s;
}

Prepared prepare(const GaussianSet& set, const Camera& cam, const RasterSettings& settings) {
    cam.validate();
    check_settings(settings);
    if (set.colors.size() != set.size() || set.opacities.size() != set.size()) {
        throw Error(ErrorCode::CountMismatch, "means/colors/opacities lengths differ");
    }
    Prepared prep;
    prep.tiles_x = (cam.width + settings.tile_size - 1) / settings.tile_size;
    prep.tiles_y = (cam.height + settings.tile_size - 1) / settings.tile_size;
    prep.tiles.resize(static_cast<std::size_t>(prep.tiles_x) * prep.tiles_y);
    if (set.size() == 0) {
        return prep;
    }
    const Covariance3 cov = build_covariance(set.scale, set.rotation);
    prep.view_cov = cam.rotation * cov.sym * cam.rotation.transpose();

    prep.splats.reserve(set.size());
    for (std::size_t i = 0; i < set.size(); ++i) {
        if (auto s = project_with_view_cov(i, set, cam, prep.view_cov, settings)) {
            prep.splats.push_back(*s);
        }
    }
    std::sort(prep.splats.begin(), prep.splats.end(), [](const Splat2D& a, const Splat2D& b) {
        return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
    });

    const int ts = settings.tile_size;
    for (std::size_t k = 0; k < prep.splats.size(); ++k) {
        const Splat2D& s = prep.splats[k];
        // One pixel of margin keeps rounding at the contour from dropping a contribution.
        const double ext = s.extent + 1.0;
        const int x0 = std::max(0, static_cast<int>(std::floor(s.center.x() - ext)));
        const int x1 = std::min(cam.width - 1, static_cast<int>(std::ceil(s.center.x() + ext)));
        const int y0 = std::max(0, static_cast<int>(std::floor(s.center.y() - ext)));
        const int y1 = std::min(cam.height - 1, static_cast<int>(std::ceil(s.center.y() + ext)));
        if (x0 > x1 || y0 > y1) continue;
        for (int ty = y0 / ts; ty <= y1 / ts; ++ty) {
            for (int tx = x0 / ts; tx <= x1 / ts; ++tx) {
                prep.tiles[static_cast<std::size_t>(ty) * prep.tiles_x + tx].push_back(static_cast<std::uint32_t>(k));
            }
        }
    }
    return prep;
}

template <class Fn>
void for_each_tile(const Prepared& prep, int threads, Fn&& fn) {
    const int count = prep.tiles_x * prep.tiles_y;
    if (threads <= 1 || count <= 1) {
        for (int t = 0; t < count; ++t) fn(t);
        return;
    }
    std::vector<std::thread> pool;
    const int n = std::min(threads, count);
    pool.reserve(n);
    for (int w = 0; w < n; ++w) {
        pool.emplace_back([&, w] {
            for (int t = w; t < count; t += n) fn(t);
        });
    }
    for (auto& th : pool) th.join();
}

struct Contribution {
    std::uint32_t slot;  // position in the tile list
    double g;            // kernel value
    double a;            // opacity * g
    double t;            // transmittance before this splat
    Vec2 d;              // pixel - center
};

// Walks the depth-ordered list for one pixel, recording every contribution.
// Returns the final transmittance.
template <class Sink>
double blend_pixel(const Prepared& prep, const std::vector<std::uint32_t>& list, double px, double py,
                   const RasterSettings& settings, Sink&& sink) {
    double t = 1.0;
    for (std::uint32_t slot = 0; slot < list.size(); ++slot) {
        if (t < settings.min_transmittance) break;
        const Splat2D& s = prep.splats[list[slot]];
        const Vec2 d(px - s.center.x(), py - s.center.y());
        const double power = -0.5 * (s.conic(0, 0) * d.x() * d.x() + 2.0 * s.conic(0, 1) * d.x() * d.y() +
                                     s.conic(1, 1) * d.y() * d.y());
        if (power > 0.0) continue;
        const double g = std::exp(power);
        const double a = s.opacity * g;
        if (a < settings.min_alpha) continue;
        sink(Contribution{slot, g, a, t, d}, s);
        t *= (1.0 - a);
    }
    return t;
}

}  // namespace

std::optional<Splat2D> project_gaussian(std::size_t index, const GaussianSet& set, const Camera& cam,
                                        const Covariance3& cov, const RasterSettings& settings) {
    if (index >= set.size()) {
        throw Error(ErrorCode::InvalidArgument, "gaussian index out of range");
    }
    cam.validate();
    const Mat3 view_cov = cam.rotation * cov.sym * cam.rotation.transpose();
    return project_with_view_cov(index, set, cam, view_cov, settings);
}

std::optional<Splat2D> project_gaussian(std::size_t index, const GaussianSet& set, const Camera& cam) {
    return project_gaussian(index, set, cam, build_covariance(set.scale, set.rotation));
}

ImageRGBA rasterize(const GaussianSet& set, const Camera& cam, const RasterSettings& settings) {
    const Prepared prep = prepare(set, cam, settings);
    ImageRGBA image(cam.width, cam.height);
    const int ts = settings.tile_size;
    for_each_tile(prep, settings.threads, [&](int tile) {
        const int tx = tile % prep.tiles_x;
        const int ty = tile / prep.tiles_x;
        const auto& list = prep.tiles[tile];
        for (int y = ty * ts; y < std::min(cam.height, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(cam.width, (tx + 1) * ts); ++x) {
                Vec3 c = Vec3::Zero();
                const double t = blend_pixel(prep, list, x, y, settings, [&](const Contribution& k, const Splat2D& s) {
                    c += s.color * (k.a * k.t);
                });
                const Vec3 out = c + t * settings.background;
                for (int ch = 0; ch < 3; ++ch) image.r(x, y, ch) = out[ch];
                image.a(x, y) = 1.0 - t;
            }
        }
    });
    return image;
}

std::vector<double> pack_rgba(const ImageRGBA& image) {
    std::vector<double> out(image.pixels() * 4);
    for (std::size_t p = 0; p < image.pixels(); ++p) {
        for (int c = 0; c < 3; ++c) out[p * 4 + c] = image.rgb[p * 3 + c];
        out[p * 4 + 3] = image.alpha[p];
    }
    return out;
}

RenderGradients rasterize_backward(const GaussianSet& set, const Camera& cam, const RasterSettings& settings,
                                   std::span<const double> upstream) {
    const std::size_t expected = static_cast<std::size_t>(cam.width) * cam.height * 4;
    if (upstream.size() != expected) {
        throw Error(ErrorCode::ShapeMismatch, "upstream gradient has " + std::to_string(upstream.size()) +
                                                  " values, render needs " + std::to_string(expected));
    }
    const Prepared prep = prepare(set, cam, settings);

    RenderGradients grads;
    grads.d_means.assign(set.size(), Vec3::Zero());
    grads.d_colors.assign(set.size(), Vec3::Zero());
    grads.d_opacities.assign(set.size(), 0.0);
    if (prep.splats.empty()) return grads;

    // Per-splat screen-space gradient: center (2), conic as symmetric matrix (3), opacity, color (3).
    struct ScreenGrad {
        Vec2 center = Vec2::Zero();
        double conic_xx = 0.0, conic_xy = 0.0, conic_yy = 0.0;
        double opacity = 0.0;
        Vec3 color = Vec3::Zero();
    };
    // Tile-local accumulators are reduced in tile order, so the result does not
    // depend on the thread count.
    std::vector<std::vector<ScreenGrad>> tile_grads(prep.tiles.size());
    const int ts = settings.tile_size;

    for_each_tile(prep, settings.threads, [&](int tile) {
        const auto& list = prep.tiles[tile];
        if (list.empty()) return;
        auto& acc = tile_grads[tile];
        acc.assign(list.size(), ScreenGrad{});
        const int tx = tile % prep.tiles_x;
        const int ty = tile / prep.tiles_x;
        std::vector<Contribution> contribs;
        for (int y = ty * ts; y < std::min(cam.height, (ty + 1) * ts); ++y) {
            for (int x = tx * ts; x < std::min(cam.width, (tx + 1) * ts); ++x) {
                const double* up = upstream.data() + (static_cast<std::size_t>(y) * cam.width + x) * 4;
                const Vec3 g_rgb(up[0], up[1], up[2]);
                const double g_alpha = up[3];
                if (g_rgb.isZero(0.0) && g_alpha == 0.0) continue;
                contribs.clear();
                const double t_final = blend_pixel(prep, list, x, y, settings,
                                                   [&](const Contribution& k, const Splat2D&) { contribs.push_back(k); });
                (void)t_final;
                // suffix = dL/dT_i * ... accumulated from the back:
                // B_K = g.bg - g_alpha; B_i = (g.c_i) a_i + (1 - a_i) B_{i+1}.
                double suffix = g_rgb.dot(settings.background) - g_alpha;
                for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
                    const Splat2D& s = prep.splats[list[it->slot]];
                    ScreenGrad& sg = acc[it->slot];
                    const double gc = g_rgb.dot(s.color);
                    const double d_a = it->t * (gc - suffix);
                    sg.color += g_rgb * (it->a * it->t);
                    sg.opacity += d_a * it->g;
                    const double d_power = d_a * it->a;
                    // power = -1/2 d^T A d with d = pixel - center.
                    const double ad_x = s.conic(0, 0) * it->d.x() + s.conic(0, 1) * it->d.y();
                    const double ad_y = s.conic(1, 0) * it->d.x() + s.conic(1, 1) * it->d.y();
                    sg.center += d_power * Vec2(ad_x, ad_y);
                    sg.conic_xx += -0.5 * d_power * it->d.x() * it->d.x();
                    sg.conic_xy += -0.5 * d_power * it->d.x() * it->d.y();
                    sg.conic_yy += -0.5 * d_power * it->d.y() * it->d.y();
                    suffix = gc * it->a + (1.0 - it->a) * suffix;
                }
            }
        }
    });

    std::vector<ScreenGrad> screen(prep.splats.size());
    for (std::size_t tile = 0; tile < prep.tiles.size(); ++tile) {
        const auto& list = prep.tiles[tile];
        const auto& acc = tile_grads[tile];
        for (std::size_t k = 0; k < acc.size(); ++k) {
            ScreenGrad& dst = screen[list[k]];
            dst.center += acc[k].center;
            dst.conic_xx += acc[k].conic_xx;
            dst.conic_xy += acc[k].conic_xy;
            dst.conic_yy += acc[k].conic_yy;
            dst.opacity += acc[k].opacity;
            dst.color += acc[k].color;
        }
    }

    const double f = cam.focal;
    for (std::size_t k = 0; k < prep.splats.size(); ++k) {
        const Splat2D& s = prep.splats[k];
        const ScreenGrad& sg = screen[k];
        const std::uint32_t idx = s.index;
        grads.d_colors[idx] = sg.color;
        grads.d_opacities[idx] = sg.opacity;

        const Vec3 p = cam.to_view(set.means[idx]);
        Eigen::Matrix<double, 2, 3> j;
        projection_jacobian_outer(p, f, prep.view_cov, j);

        // conic = M^-1, M = cov2d + low_pass I:  dL/dM = -A G_A A.
        Mat2 g_a;
        g_a << sg.conic_xx, sg.conic_xy, sg.conic_xy, sg.conic_yy;
        const Mat2 g_m = -s.conic * g_a * s.conic;
        // cov2d = J V J^T: dL/dJ = 2 G_M J V (G_M, V symmetric).
        const Eigen::Matrix<double, 2, 3> g_j = 2.0 * g_m * j * prep.view_cov;

        const double iz = 1.0 / p.z();
        const double iz2 = iz * iz;
        const double iz3 = iz2 * iz;
        Vec3 d_p = j.transpose() * sg.center;
        d_p.x() += g_j(0, 2) * (-f * iz2);
        d_p.y() += g_j(1, 2) * (-f * iz2);
        d_p.z() += g_j(0, 0) * (-f * iz2) + g_j(0, 2) * (2.0 * f * p.x() * iz3) + g_j(1, 1) * (-f * iz2) +
                   g_j(1, 2) * (2.0 * f * p.y() * iz3);
        grads.d_means[idx] = cam.rotation.transpose() * d_p;
    }
    return grads;
}

}  // namespace agg
