#include "agg/nn/ops.hpp"

#include "agg/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace agg::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

// Gradient buffer of input i, or nullptr when that input needs none.
double* gin(detail::Node& n, std::size_t i) {
    auto& in = *n.inputs[i];
    return in.requires_grad ? in.grad.data() : nullptr;
}

const std::vector<double>& vin(detail::Node& n, std::size_t i) { return n.inputs[i]->value; }

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw Error(ErrorCode::ShapeMismatch,
                    std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()));
    }
}

void require_rank(const Tensor& a, int rank, const char* op) {
    if (a.rank() != rank) {
        throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                                  shape_string(a.shape()));
    }
}

// Elementwise unary op given f(x) and f'(x, y).
template <class F, class DF>
Tensor unary(const Tensor& a, F f, DF df) {
    const auto& x = a.data();
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    return make_result(a.shape(), std::move(y), {a}, [df](detail::Node& n) {
        double* ga = gin(n, 0);
        if (!ga) return;
        const auto& x = vin(n, 0);
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += n.grad[i] * df(x[i], n.value[i]);
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same(a, b, "add");
    std::vector<double> y(a.data().begin(), a.data().end());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bd[i];
    return make_result(a.shape(), std::move(y), {a, b}, [](detail::Node& n) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (double* g = gin(n, k)) {
                for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
            }
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same(a, b, "sub");
    std::vector<double> y(a.data().begin(), a.data().end());
    const auto& bd = b.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bd[i];
    return make_result(a.shape(), std::move(y), {a, b}, [](detail::Node& n) {
        if (double* g = gin(n, 0)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
        }
        if (double* g = gin(n, 1)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mul");
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> y(ad.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] * bd[i];
    return make_result(a.shape(), std::move(y), {a, b}, [](detail::Node& n) {
        const auto& x0 = vin(n, 0);
        const auto& x1 = vin(n, 1);
        if (double* g = gin(n, 0)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * x1[i];
        }
        if (double* g = gin(n, 1)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * x0[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor abs(const Tensor& a) {
    return unary(
        a, [](double x) { return std::abs(x); },
        [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor square(const Tensor& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor gelu(const Tensor& a) {
    return unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
        [](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + x * pdf;
        });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a,
        [](double x) {
            if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    require_rank(bias, 1, "add_bias");
    const std::int64_t d = bias.dim(0);
    if (x.rank() < 1 || x.dim(-1) != d) throw Error(ErrorCode::ShapeMismatch, "add_bias: width mismatch");
    std::vector<double> y(x.data().begin(), x.data().end());
    const auto& b = bias.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i % d];
    return make_result(x.shape(), std::move(y), {x, bias}, [d](detail::Node& n) {
        if (double* g = gin(n, 0)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
        }
        if (double* g = gin(n, 1)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i % d] += n.grad[i];
        }
    });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return make_result({}, {s}, {a}, [](detail::Node& n) {
        if (double* g = gin(n, 0)) {
            const std::size_t m = n.inputs[0]->value.size();
            for (std::size_t i = 0; i < m; ++i) g[i] += n.grad[0];
        }
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw Error(ErrorCode::ShapeMismatch, "mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const auto m = a.dim(0), k = a.dim(1), nn = b.dim(1);
    if (b.dim(0) != k) {
        throw Error(ErrorCode::ShapeMismatch, "matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    std::vector<double> y(static_cast<std::size_t>(m * nn));
    Map(y.data(), m, nn).noalias() = MapC(a.data().data(), m, k) * MapC(b.data().data(), k, nn);
    return make_result({m, nn}, std::move(y), {a, b}, [m, k, nn](detail::Node& n) {
        MapC g(n.grad.data(), m, nn);
        if (double* ga = gin(n, 0)) Map(ga, m, k).noalias() += g * MapC(vin(n, 1).data(), k, nn).transpose();
        if (double* gb = gin(n, 1)) Map(gb, k, nn).noalias() += MapC(vin(n, 0).data(), m, k).transpose() * g;
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_nt");
    require_rank(b, 2, "matmul_nt");
    const auto m = a.dim(0), k = a.dim(1), nn = b.dim(0);
    if (b.dim(1) != k) {
        throw Error(ErrorCode::ShapeMismatch,
                    "matmul_nt: " + shape_string(a.shape()) + " x " + shape_string(b.shape()) + "^T");
    }
    std::vector<double> y(static_cast<std::size_t>(m * nn));
    Map(y.data(), m, nn).noalias() = MapC(a.data().data(), m, k) * MapC(b.data().data(), nn, k).transpose();
    return make_result({m, nn}, std::move(y), {a, b}, [m, k, nn](detail::Node& n) {
        MapC g(n.grad.data(), m, nn);
        if (double* ga = gin(n, 0)) Map(ga, m, k).noalias() += g * MapC(vin(n, 1).data(), nn, k);
        if (double* gb = gin(n, 1)) Map(gb, nn, k).noalias() += g.transpose() * MapC(vin(n, 0).data(), m, k);
    });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(w, 2, "linear");
    if (x.rank() < 1 || x.dim(-1) != w.dim(0)) {
        throw Error(ErrorCode::ShapeMismatch, "linear: input " + shape_string(x.shape()) + " vs weight " +
                                                  shape_string(w.shape()));
    }
    const std::int64_t rows = x.numel() / w.dim(0);
    Tensor flat = x.rank() == 2 ? x : reshape(x, {rows, w.dim(0)});
    Tensor y = matmul(flat, w);
    if (b.defined()) y = add_bias(y, b);
    if (x.rank() != 2) {
        Shape out = x.shape();
        out.back() = w.dim(1);
        y = reshape(y, out);
    }
    return y;
}

Tensor softmax(const Tensor& a) {
    if (a.rank() < 1) throw Error(ErrorCode::ShapeMismatch, "softmax needs rank >= 1");
    const std::int64_t d = a.dim(-1);
    const std::int64_t rows = d == 0 ? 0 : a.numel() / d;
    const auto& x = a.data();
    std::vector<double> y(x.size());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * d;
        double* yr = y.data() + r * d;
        double mx = xr[0];
        for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) s += (yr[j] = std::exp(xr[j] - mx));
        for (std::int64_t j = 0; j < d; ++j) yr[j] /= s;
    }
    return make_result(a.shape(), std::move(y), {a}, [d, rows](detail::Node& n) {
        double* g = gin(n, 0);
        if (!g) return;
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* yr = n.value.data() + r * d;
            const double* gr = n.grad.data() + r * d;
            double dot = 0.0;
            for (std::int64_t j = 0; j < d; ++j) dot += gr[j] * yr[j];
            for (std::int64_t j = 0; j < d; ++j) g[r * d + j] += yr[j] * (gr[j] - dot);
        }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_rank(gamma, 1, "layer_norm");
    require_same(gamma, beta, "layer_norm");
    const std::int64_t d = gamma.dim(0);
    if (x.rank() < 1 || x.dim(-1) != d) throw Error(ErrorCode::ShapeMismatch, "layer_norm: width mismatch");
    const std::int64_t rows = x.numel() / d;
    const auto& xv = x.data();
    const auto& gv = gamma.data();
    const auto& bv = beta.data();
    std::vector<double> y(xv.size());
    // Saved for backward: normalized input and 1/sigma per row.
    auto xhat = std::make_shared<std::vector<double>>(xv.size());
    auto inv = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = xv.data() + r * d;
        double mu = 0.0;
        for (std::int64_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::int64_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(d);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv)[r] = is;
        for (std::int64_t j = 0; j < d; ++j) {
            const double h = (xr[j] - mu) * is;
            (*xhat)[r * d + j] = h;
            y[r * d + j] = h * gv[j] + bv[j];
        }
    }
    return make_result(x.shape(), std::move(y), {x, gamma, beta}, [d, rows, xhat, inv](detail::Node& n) {
        const auto& gv = vin(n, 1);
        double* gx = gin(n, 0);
        double* gg = gin(n, 1);
        double* gb = gin(n, 2);
        std::vector<double> dh(static_cast<std::size_t>(d));
        for (std::int64_t r = 0; r < rows; ++r) {
            const double* go = n.grad.data() + r * d;
            const double* hr = xhat->data() + r * d;
            double m1 = 0.0, m2 = 0.0;
            for (std::int64_t j = 0; j < d; ++j) {
                if (gg) gg[j] += go[j] * hr[j];
                if (gb) gb[j] += go[j];
                dh[j] = go[j] * gv[j];
                m1 += dh[j];
                m2 += dh[j] * hr[j];
            }
            if (!gx) continue;
            m1 /= static_cast<double>(d);
            m2 /= static_cast<double>(d);
            for (std::int64_t j = 0; j < d; ++j) gx[r * d + j] += (*inv)[r] * (dh[j] - m1 - hr[j] * m2);
        }
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw Error(ErrorCode::ShapeMismatch, "reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
    }
    std::vector<double> y(a.data().begin(), a.data().end());
    return make_result(std::move(shape), std::move(y), {a}, [](detail::Node& n) {
        if (double* g = gin(n, 0)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Tensor slice_cols(const Tensor& a, std::int64_t start, std::int64_t len) {
    require_rank(a, 2, "slice_cols");
    const auto rows = a.dim(0), cols = a.dim(1);
    if (start < 0 || len < 0 || start + len > cols) throw Error(ErrorCode::ShapeMismatch, "slice_cols out of range");
    std::vector<double> y(static_cast<std::size_t>(rows * len));
    const auto& x = a.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        std::copy_n(x.data() + r * cols + start, len, y.data() + r * len);
    }
    return make_result({rows, len}, std::move(y), {a}, [rows, cols, start, len](detail::Node& n) {
        double* g = gin(n, 0);
        if (!g) return;
        for (std::int64_t r = 0; r < rows; ++r) {
            for (std::int64_t j = 0; j < len; ++j) g[r * cols + start + j] += n.grad[r * len + j];
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat_cols of nothing");
    const std::int64_t rows = parts[0].dim(0);
    std::vector<std::int64_t> widths;
    std::int64_t total = 0;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_cols");
        if (p.dim(0) != rows) throw Error(ErrorCode::ShapeMismatch, "concat_cols: row counts differ");
        widths.push_back(p.dim(1));
        total += p.dim(1);
    }
    std::vector<double> y(static_cast<std::size_t>(rows * total));
    std::int64_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& x = parts[k].data();
        for (std::int64_t r = 0; r < rows; ++r) {
            std::copy_n(x.data() + r * widths[k], widths[k], y.data() + r * total + off);
        }
        off += widths[k];
    }
    return make_result({rows, total}, std::move(y), parts, [rows, total, widths](detail::Node& n) {
        std::int64_t off = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
            if (double* g = gin(n, k)) {
                for (std::int64_t r = 0; r < rows; ++r) {
                    for (std::int64_t j = 0; j < widths[k]; ++j) g[r * widths[k] + j] += n.grad[r * total + off + j];
                }
            }
            off += widths[k];
        }
    });
}

Tensor slice_rows(const Tensor& a, std::int64_t start, std::int64_t len) {
    require_rank(a, 2, "slice_rows");
    const auto rows = a.dim(0), cols = a.dim(1);
    if (start < 0 || len < 0 || start + len > rows) throw Error(ErrorCode::ShapeMismatch, "slice_rows out of range");
    const auto& x = a.data();
    std::vector<double> y(x.begin() + start * cols, x.begin() + (start + len) * cols);
    return make_result({len, cols}, std::move(y), {a}, [start, cols](detail::Node& n) {
        if (double* g = gin(n, 0)) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) g[start * cols + i] += n.grad[i];
        }
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat_rows of nothing");
    const std::int64_t cols = parts[0].dim(1);
    std::int64_t rows = 0;
    std::vector<double> y;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_rows");
        if (p.dim(1) != cols) throw Error(ErrorCode::ShapeMismatch, "concat_rows: widths differ");
        rows += p.dim(0);
        y.insert(y.end(), p.data().begin(), p.data().end());
    }
    return make_result({rows, cols}, std::move(y), parts, [](detail::Node& n) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const std::size_t m = n.inputs[k]->value.size();
            if (double* g = gin(n, k)) {
                for (std::size_t i = 0; i < m; ++i) g[i] += n.grad[off + i];
            }
            off += m;
        }
    });
}

Tensor repeat_rows(const Tensor& a, std::int64_t times) {
    require_rank(a, 2, "repeat_rows");
    if (times < 1) throw Error(ErrorCode::InvalidArgument, "repeat_rows needs times >= 1");
    const auto rows = a.dim(0), cols = a.dim(1);
    std::vector<std::int64_t> index(static_cast<std::size_t>(rows * times * cols));
    std::size_t p = 0;
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t t = 0; t < times; ++t) {
            for (std::int64_t c = 0; c < cols; ++c) index[p++] = r * cols + c;
        }
    }
    return gather_flat(a, std::move(index), {rows * times, cols});
}

Tensor gather_flat(const Tensor& a, std::vector<std::int64_t> index, Shape shape) {
    if (shape_numel(shape) != static_cast<std::int64_t>(index.size())) {
        throw Error(ErrorCode::ShapeMismatch, "gather_flat: index count does not match shape");
    }
    const auto& x = a.data();
    std::vector<double> y(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] < 0 || index[i] >= a.numel()) throw Error(ErrorCode::ShapeMismatch, "gather_flat: bad index");
        y[i] = x[index[i]];
    }
    auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(index));
    return make_result(std::move(shape), std::move(y), {a}, [idx](detail::Node& n) {
        if (double* g = gin(n, 0)) {
            for (std::size_t i = 0; i < idx->size(); ++i) g[(*idx)[i]] += n.grad[i];
        }
    });
}

namespace {

// Column layout of the patch matrix: neighbor offset major, input channel minor.
struct Im2Col {
    std::int64_t sites = 0;
    std::int64_t taps = 0;
    // For each (site, tap): source site or -1 for zero padding.
    std::vector<std::int64_t> src;
};

Im2Col grid_taps3(std::int64_t d) {
    Im2Col m;
    m.sites = d * d * d;
    m.taps = 27;
    m.src.resize(static_cast<std::size_t>(m.sites * 27));
    for (std::int64_t z = 0; z < d; ++z) {
        for (std::int64_t y = 0; y < d; ++y) {
            for (std::int64_t x = 0; x < d; ++x) {
                const std::int64_t s = (z * d + y) * d + x;
                int t = 0;
                for (int dz = -1; dz <= 1; ++dz) {
                    for (int dy = -1; dy <= 1; ++dy) {
                        for (int dx = -1; dx <= 1; ++dx, ++t) {
                            const auto zz = z + dz, yy = y + dy, xx = x + dx;
                            const bool in = zz >= 0 && zz < d && yy >= 0 && yy < d && xx >= 0 && xx < d;
                            m.src[s * 27 + t] = in ? (zz * d + yy) * d + xx : -1;
                        }
                    }
                }
            }
        }
    }
    return m;
}

Im2Col grid_taps2(std::int64_t h, std::int64_t w) {
    Im2Col m;
    m.sites = h * w;
    m.taps = 9;
    m.src.resize(static_cast<std::size_t>(m.sites * 9));
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            const std::int64_t s = y * w + x;
            int t = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx, ++t) {
                    const auto yy = y + dy, xx = x + dx;
                    m.src[s * 9 + t] = (yy >= 0 && yy < h && xx >= 0 && xx < w) ? yy * w + xx : -1;
                }
            }
        }
    }
    return m;
}

Tensor conv_generic(const Tensor& input, const Tensor& weight, const Tensor& bias, std::shared_ptr<Im2Col> taps,
                    Shape out_shape) {
    const std::int64_t cin = input.dim(-1);
    const std::int64_t cols = taps->taps * cin;
    require_rank(weight, 2, "conv");
    if (weight.dim(0) != cols) {
        throw Error(ErrorCode::ShapeMismatch, "conv: weight " + shape_string(weight.shape()) + " for " +
                                                  std::to_string(cin) + " input channels");
    }
    const std::int64_t cout = weight.dim(1);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
        throw Error(ErrorCode::ShapeMismatch, "conv: bias width");
    }
    const std::int64_t sites = taps->sites;
    const auto& x = input.data();
    RowMat patches = RowMat::Zero(sites, cols);
    for (std::int64_t s = 0; s < sites; ++s) {
        for (std::int64_t t = 0; t < taps->taps; ++t) {
            const auto src = taps->src[s * taps->taps + t];
            if (src >= 0) std::copy_n(x.data() + src * cin, cin, patches.data() + s * cols + t * cin);
        }
    }
    std::vector<double> y(static_cast<std::size_t>(sites * cout));
    Map ym(y.data(), sites, cout);
    ym.noalias() = patches * MapC(weight.data().data(), cols, cout);
    if (bias.defined()) {
        const auto& b = bias.data();
        for (std::int64_t s = 0; s < sites; ++s) {
            for (std::int64_t c = 0; c < cout; ++c) ym(s, c) += b[c];
        }
    }
    out_shape.push_back(cout);
    auto saved = std::make_shared<RowMat>(std::move(patches));
    std::vector<Tensor> inputs{input, weight};
    if (bias.defined()) inputs.push_back(bias);
    return make_result(std::move(out_shape), std::move(y), inputs, [saved, taps, sites, cin, cols, cout](detail::Node& n) {
        MapC g(n.grad.data(), sites, cout);
        if (double* gw = gin(n, 1)) Map(gw, cols, cout).noalias() += saved->transpose() * g;
        if (n.inputs.size() > 2) {
            if (double* gb = gin(n, 2)) {
                for (std::int64_t s = 0; s < sites; ++s) {
                    for (std::int64_t c = 0; c < cout; ++c) gb[c] += g(s, c);
                }
            }
        }
        if (double* gx = gin(n, 0)) {
            RowMat gp = g * MapC(vin(n, 1).data(), cols, cout).transpose();
            for (std::int64_t s = 0; s < sites; ++s) {
                for (std::int64_t t = 0; t < taps->taps; ++t) {
                    const auto src = taps->src[s * taps->taps + t];
                    if (src < 0) continue;
                    const double* row = gp.data() + s * cols + t * cin;
                    for (std::int64_t c = 0; c < cin; ++c) gx[src * cin + c] += row[c];
                }
            }
        }
    });
}

}  // namespace

Tensor conv3d(const Tensor& grid, const Tensor& weight, const Tensor& bias) {
    require_rank(grid, 4, "conv3d");
    const auto d = grid.dim(0);
    if (grid.dim(1) != d || grid.dim(2) != d) throw Error(ErrorCode::ShapeMismatch, "conv3d needs a cubic grid");
    return conv_generic(grid, weight, bias, std::make_shared<Im2Col>(grid_taps3(d)), {d, d, d});
}

Tensor conv2d(const Tensor& image, const Tensor& weight, const Tensor& bias) {
    require_rank(image, 3, "conv2d");
    const auto h = image.dim(0), w = image.dim(1);
    return conv_generic(image, weight, bias, std::make_shared<Im2Col>(grid_taps2(h, w)), {h, w});
}

Tensor avg_pool2d(const Tensor& image) {
    require_rank(image, 3, "avg_pool2d");
    const auto h = image.dim(0), w = image.dim(1), c = image.dim(2);
    if (h % 2 || w % 2) throw Error(ErrorCode::ShapeMismatch, "avg_pool2d needs even dimensions");
    const auto ho = h / 2, wo = w / 2;
    const auto& x = image.data();
    std::vector<double> y(static_cast<std::size_t>(ho * wo * c), 0.0);
    for (std::int64_t i = 0; i < ho; ++i) {
        for (std::int64_t j = 0; j < wo; ++j) {
            for (std::int64_t k = 0; k < c; ++k) {
                double s = 0.0;
                for (int a = 0; a < 2; ++a) {
                    for (int b = 0; b < 2; ++b) s += x[((2 * i + a) * w + 2 * j + b) * c + k];
                }
                y[(i * wo + j) * c + k] = 0.25 * s;
            }
        }
    }
    return make_result({ho, wo, c}, std::move(y), {image}, [ho, wo, w, c](detail::Node& n) {
        double* g = gin(n, 0);
        if (!g) return;
        for (std::int64_t i = 0; i < ho; ++i) {
            for (std::int64_t j = 0; j < wo; ++j) {
                for (std::int64_t k = 0; k < c; ++k) {
                    const double v = 0.25 * n.grad[(i * wo + j) * c + k];
                    for (int a = 0; a < 2; ++a) {
                        for (int b = 0; b < 2; ++b) g[((2 * i + a) * w + 2 * j + b) * c + k] += v;
                    }
                }
            }
        }
    });
}

}  // namespace agg::nn
