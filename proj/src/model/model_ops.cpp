#include "agg/model/model_ops.hpp"

#include "agg/error.hpp"
#include "agg/nn/ops.hpp"

#include <algorithm>
#include <cmath>

namespace agg {

using nn::Tensor;

namespace {

// Continuous grid coordinate of u in [-1,1] on `nodes` nodes spanning it.
struct Axis {
    std::int64_t i0 = 0;
    double t = 0.0;
    bool inside = true;
};

Axis locate_node(double u, std::int64_t nodes) {
    Axis a;
    if (u < -1.0 || u > 1.0) a.inside = false;
    u = std::clamp(u, -1.0, 1.0);
    const double g = (u + 1.0) * 0.5 * static_cast<double>(nodes - 1);
    a.i0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(g)), nodes - 2);
    a.t = g - static_cast<double>(a.i0);
    return a;
}

}  // namespace

Tensor triplane_sample(const Tensor& planes, const Tensor& coords) {
    if (planes.rank() != 4 || planes.dim(0) != 3 || planes.dim(1) != planes.dim(2) || planes.dim(1) < 2) {
        throw Error(ErrorCode::ShapeMismatch, "triplane must be [3,R,R,F], got " + nn::shape_string(planes.shape()));
    }
    if (coords.rank() != 2 || coords.dim(1) != 3) throw Error(ErrorCode::ShapeMismatch, "coords must be [N,3]");
    const std::int64_t r = planes.dim(1), f = planes.dim(3), n = coords.dim(0);
    const auto& pv = planes.data();
    const auto& cv = coords.data();
    for (double v : cv) {
        if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteInput, "non-finite triplane query");
    }
    static constexpr int kAxes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
    std::vector<double> out(static_cast<std::size_t>(n * 3 * f));
    for (std::int64_t i = 0; i < n; ++i) {
        for (int p = 0; p < 3; ++p) {
            const Axis ax = locate_node(cv[3 * i + kAxes[p][0]], r);
            const Axis ay = locate_node(cv[3 * i + kAxes[p][1]], r);
            const double* base = pv.data() + p * r * r * f;
            const double* f00 = base + (ay.i0 * r + ax.i0) * f;
            const double* f01 = f00 + f;      // x + 1
            const double* f10 = f00 + r * f;  // y + 1
            const double* f11 = f10 + f;
            double* o = out.data() + (i * 3 + p) * f;
            const double w00 = (1 - ax.t) * (1 - ay.t), w01 = ax.t * (1 - ay.t), w10 = (1 - ax.t) * ay.t,
                         w11 = ax.t * ay.t;
            for (std::int64_t c = 0; c < f; ++c) o[c] = w00 * f00[c] + w01 * f01[c] + w10 * f10[c] + w11 * f11[c];
        }
    }
    return nn::make_result({n, 3 * f}, std::move(out), {planes, coords}, [r, f, n](nn::detail::Node& node) {
        const auto& pv = node.inputs[0]->value;
        const auto& cv = node.inputs[1]->value;
        double* gp = node.inputs[0]->requires_grad ? node.inputs[0]->grad.data() : nullptr;
        double* gc = node.inputs[1]->requires_grad ? node.inputs[1]->grad.data() : nullptr;
        const double du = 0.5 * static_cast<double>(r - 1);
        for (std::int64_t i = 0; i < n; ++i) {
            for (int p = 0; p < 3; ++p) {
                const Axis ax = locate_node(cv[3 * i + kAxes[p][0]], r);
                const Axis ay = locate_node(cv[3 * i + kAxes[p][1]], r);
                const std::int64_t o00 = p * r * r * f + (ay.i0 * r + ax.i0) * f;
                const std::int64_t o01 = o00 + f, o10 = o00 + r * f, o11 = o10 + f;
                const double* g = node.grad.data() + (i * 3 + p) * f;
                const double w00 = (1 - ax.t) * (1 - ay.t), w01 = ax.t * (1 - ay.t), w10 = (1 - ax.t) * ay.t,
                             w11 = ax.t * ay.t;
                double gx = 0.0, gy = 0.0;
                for (std::int64_t c = 0; c < f; ++c) {
                    if (gp) {
                        gp[o00 + c] += w00 * g[c];
                        gp[o01 + c] += w01 * g[c];
                        gp[o10 + c] += w10 * g[c];
                        gp[o11 + c] += w11 * g[c];
                    }
                    gx += g[c] * ((pv[o01 + c] - pv[o00 + c]) * (1 - ay.t) + (pv[o11 + c] - pv[o10 + c]) * ay.t);
                    gy += g[c] * ((pv[o10 + c] - pv[o00 + c]) * (1 - ax.t) + (pv[o11 + c] - pv[o01 + c]) * ax.t);
                }
                if (gc) {
                    if (ax.inside) gc[3 * i + kAxes[p][0]] += gx * du;
                    if (ay.inside) gc[3 * i + kAxes[p][1]] += gy * du;
                }
            }
        }
    });
}

Tensor expand_features(const Tensor& features, std::int64_t r) {
    if (features.rank() != 2) throw Error(ErrorCode::ShapeMismatch, "expand_features expects [N, C*r]");
    if (r < 1 || features.dim(1) % r != 0) {
        throw Error(ErrorCode::IndivisibleWidth, "feature width " + std::to_string(features.dim(1)) +
                                                     " is not divisible by r = " + std::to_string(r));
    }
    const std::int64_t n = features.dim(0), c = features.dim(1) / r;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n * r * c));
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t k = 0; k < r; ++k) {
            for (std::int64_t j = 0; j < c; ++j) idx[(i * r + k) * c + j] = i * c * r + j * r + k;
        }
    }
    return nn::gather_flat(features, std::move(idx), {n * r, c});
}

Tensor collapse_features(const Tensor& features, std::int64_t r) {
    if (features.rank() != 2 || r < 1 || features.dim(0) % r != 0) {
        throw Error(ErrorCode::IndivisibleWidth, "collapse_features: row count not divisible by r");
    }
    const std::int64_t n = features.dim(0) / r, c = features.dim(1);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n * r * c));
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < c; ++j) {
            for (std::int64_t k = 0; k < r; ++k) idx[i * c * r + j * r + k] = (i * r + k) * c + j;
        }
    }
    return nn::gather_flat(features, std::move(idx), {n, c * r});
}

std::shared_ptr<const VoxelMap> VoxelMap::build(const std::vector<double>& positions, int resolution) {
    if (resolution < 2) throw Error(ErrorCode::InvalidArgument, "voxel resolution must be >= 2");
    auto map = std::make_shared<VoxelMap>();
    map->resolution = resolution;
    map->points = static_cast<std::int64_t>(positions.size() / 3);
    const std::int64_t d = resolution;
    map->voxel.resize(static_cast<std::size_t>(map->points * 8));
    map->weight.resize(static_cast<std::size_t>(map->points * 8));
    map->total.assign(static_cast<std::size_t>(d * d * d), 0.0);
    for (std::int64_t i = 0; i < map->points; ++i) {
        std::int64_t i0[3];
        double t[3];
        for (int k = 0; k < 3; ++k) {
            const double p = positions[3 * i + k];
            if (!std::isfinite(p)) throw Error(ErrorCode::NonFiniteInput, "non-finite point position");
            const double g = std::clamp((p + 1.0) * 0.5 * static_cast<double>(d) - 0.5, 0.0, static_cast<double>(d - 1));
            i0[k] = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(g)), d - 2);
            t[k] = g - static_cast<double>(i0[k]);
        }
        for (int corner = 0; corner < 8; ++corner) {
            const int bx = corner & 1, by = (corner >> 1) & 1, bz = (corner >> 2) & 1;
            const std::int64_t v = ((i0[2] + bz) * d + (i0[1] + by)) * d + (i0[0] + bx);
            const double w = (bx ? t[0] : 1 - t[0]) * (by ? t[1] : 1 - t[1]) * (bz ? t[2] : 1 - t[2]);
            map->voxel[i * 8 + corner] = v;
            map->weight[i * 8 + corner] = w;
            map->total[v] += w;
        }
    }
    return map;
}

Tensor voxel_scatter(const Tensor& features, std::shared_ptr<const VoxelMap> map) {
    if (features.rank() != 2 || features.dim(0) != map->points) {
        throw Error(ErrorCode::ShapeMismatch, "voxel_scatter: feature rows do not match the voxel map");
    }
    const std::int64_t c = features.dim(1), d = map->resolution;
    const auto& fv = features.data();
    std::vector<double> grid(static_cast<std::size_t>(d * d * d * c), 0.0);
    for (std::int64_t i = 0; i < map->points; ++i) {
        for (int k = 0; k < 8; ++k) {
            const auto v = map->voxel[i * 8 + k];
            const double w = map->weight[i * 8 + k] / (map->total[v] + kScatterEpsilon);
            if (w == 0.0) continue;
            for (std::int64_t j = 0; j < c; ++j) grid[v * c + j] += w * fv[i * c + j];
        }
    }
    return nn::make_result({d, d, d, c}, std::move(grid), {features}, [map, c](nn::detail::Node& node) {
        if (!node.inputs[0]->requires_grad) return;
        double* g = node.inputs[0]->grad.data();
        for (std::int64_t i = 0; i < map->points; ++i) {
            for (int k = 0; k < 8; ++k) {
                const auto v = map->voxel[i * 8 + k];
                const double w = map->weight[i * 8 + k] / (map->total[v] + kScatterEpsilon);
                if (w == 0.0) continue;
                for (std::int64_t j = 0; j < c; ++j) g[i * c + j] += w * node.grad[v * c + j];
            }
        }
    });
}

Tensor voxel_gather(const Tensor& grid, std::shared_ptr<const VoxelMap> map) {
    const std::int64_t d = map->resolution;
    if (grid.rank() != 4 || grid.dim(0) != d || grid.dim(1) != d || grid.dim(2) != d) {
        throw Error(ErrorCode::ShapeMismatch, "voxel_gather: grid does not match the voxel map");
    }
    const std::int64_t c = grid.dim(3);
    const auto& gv = grid.data();
    std::vector<double> out(static_cast<std::size_t>(map->points * c), 0.0);
    for (std::int64_t i = 0; i < map->points; ++i) {
        for (int k = 0; k < 8; ++k) {
            const auto v = map->voxel[i * 8 + k];
            const double w = map->weight[i * 8 + k];
            if (w == 0.0) continue;
            for (std::int64_t j = 0; j < c; ++j) out[i * c + j] += w * gv[v * c + j];
        }
    }
    return nn::make_result({map->points, c}, std::move(out), {grid}, [map, c](nn::detail::Node& node) {
        if (!node.inputs[0]->requires_grad) return;
        double* g = node.inputs[0]->grad.data();
        for (std::int64_t i = 0; i < map->points; ++i) {
            for (int k = 0; k < 8; ++k) {
                const auto v = map->voxel[i * 8 + k];
                const double w = map->weight[i * 8 + k];
                if (w == 0.0) continue;
                for (std::int64_t j = 0; j < c; ++j) g[v * c + j] += w * node.grad[i * c + j];
            }
        }
    });
}

Tensor normalize_channels(const Tensor& x, double eps) {
    const std::int64_t c = x.dim(-1);
    const std::int64_t rows = x.numel() / c;
    const auto& xv = x.data();
    std::vector<double> y(xv.size());
    auto inv = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        double s = eps;
        for (std::int64_t j = 0; j < c; ++j) s += xv[r * c + j] * xv[r * c + j];
        const double is = 1.0 / std::sqrt(s);
        (*inv)[r] = is;
        for (std::int64_t j = 0; j < c; ++j) y[r * c + j] = xv[r * c + j] * is;
    }
    return nn::make_result(x.shape(), std::move(y), {x}, [c, rows, inv](nn::detail::Node& node) {
        if (!node.inputs[0]->requires_grad) return;
        double* g = node.inputs[0]->grad.data();
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* yr = node.value.data() + r * c;
            const double* gr = node.grad.data() + r * c;
            double dot = 0.0;
            for (std::int64_t j = 0; j < c; ++j) dot += gr[j] * yr[j];
            for (std::int64_t j = 0; j < c; ++j) g[r * c + j] += (*inv)[r] * (gr[j] - yr[j] * dot);
        }
    });
}

}  // namespace agg

namespace agg {

nn::Tensor logit(const nn::Tensor& p, double eps) {
    const auto& pv = p.data();
    std::vector<double> y(pv.size());
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double q = std::clamp(pv[i], eps, 1.0 - eps);
        y[i] = std::log(q / (1.0 - q));
    }
    return nn::make_result(p.shape(), std::move(y), {p}, [eps](nn::detail::Node& node) {
        if (!node.inputs[0]->requires_grad) return;
        const auto& pv = node.inputs[0]->value;
        double* g = node.inputs[0]->grad.data();
        for (std::size_t i = 0; i < pv.size(); ++i) {
            if (pv[i] <= eps || pv[i] >= 1.0 - eps) continue;
            g[i] += node.grad[i] / (pv[i] * (1.0 - pv[i]));
        }
    });
}

}  // namespace agg
