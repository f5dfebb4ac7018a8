#include "agg/nn/fd_check.hpp"
#include "agg/nn/layers.hpp"
#include "agg/nn/ops.hpp"

#include <random>

namespace agg::nn {

namespace {

class Suite {
public:
    Suite(std::uint64_t seed, const FdOptions& o) : rng_(seed), options_(o) {}

    Tensor random(Shape shape, double lo = -1.0, double hi = 1.0) {
        std::uniform_real_distribution<double> d(lo, hi);
        std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
        for (double& x : v) x = d(rng_);
        return Tensor::from_data(std::move(shape), std::move(v));
    }

    // Values bounded away from zero, for ops with a kink at the origin.
    Tensor random_away(Shape shape) {
        Tensor t = random(std::move(shape), 0.2, 1.0);
        std::bernoulli_distribution flip(0.5);
        for (double& x : t.mutable_data()) {
            if (flip(rng_)) x = -x;
        }
        return t;
    }

    // Fixed random projection to a scalar so every output entry matters.
    std::function<Tensor()> project(std::function<Tensor()> f, const Shape& shape) {
        Tensor w = random(shape);
        return [f, w] { return sum(mul(f(), w)); };
    }

    void check(const std::string& name, std::vector<Tensor> inputs, std::function<Tensor()> f) {
        Shape shape;
        {
            NoGradGuard g;
            shape = f().shape();
        }
        reports_.push_back(fd_check(name, std::move(inputs), project(std::move(f), shape), options_));
    }

    std::vector<FdReport> take() { return std::move(reports_); }
    std::mt19937_64& rng() { return rng_; }

private:
    std::mt19937_64 rng_;
    FdOptions options_;
    std::vector<FdReport> reports_;
};

}  // namespace

void run_model_fd_cases(std::uint64_t seed, const FdOptions& options, std::vector<FdReport>& out);

std::vector<FdReport> run_fd_suite(std::uint64_t seed, const FdOptions& options) {
    Suite s(seed, options);

    Tensor a = s.random({3, 4}), b = s.random({3, 4});
    s.check("add", {a, b}, [=] { return add(a, b); });
    s.check("sub", {a, b}, [=] { return sub(a, b); });
    s.check("mul", {a, b}, [=] { return mul(a, b); });
    s.check("scale", {a}, [=] { return scale(a, -1.7); });
    s.check("add_scalar", {a}, [=] { return add_scalar(a, 0.3); });
    Tensor away = s.random_away({3, 4});
    s.check("abs", {away}, [=] { return abs(away); });
    s.check("relu", {away}, [=] { return relu(away); });
    s.check("square", {a}, [=] { return square(a); });
    Tensor wide = s.random({3, 4}, -3.0, 3.0);
    s.check("gelu", {wide}, [=] { return gelu(wide); });
    s.check("tanh", {wide}, [=] { return tanh(wide); });
    s.check("sigmoid", {wide}, [=] { return sigmoid(wide); });
    Tensor bias = s.random({4});
    Tensor x3 = s.random({2, 3, 4});
    s.check("add_bias", {x3, bias}, [=] { return add_bias(x3, bias); });
    s.check("sum", {a}, [=] { return sum(a); });
    s.check("mean", {a}, [=] { return mean(a); });

    Tensor m1 = s.random({3, 5}), m2 = s.random({5, 2}), m3 = s.random({4, 5});
    s.check("matmul", {m1, m2}, [=] { return matmul(m1, m2); });
    s.check("matmul_nt", {m1, m3}, [=] { return matmul_nt(m1, m3); });
    Tensor lw = s.random({4, 3}), lb = s.random({3});
    s.check("linear", {x3, lw, lb}, [=] { return linear(x3, lw, lb); });
    Tensor logits = s.random({3, 5}, -2.0, 2.0);
    s.check("softmax", {logits}, [=] { return softmax(logits); });
    Tensor ln_x = s.random({3, 6}, -2.0, 2.0), gamma = s.random({6}, 0.5, 1.5), beta = s.random({6});
    s.check("layer_norm", {ln_x, gamma, beta}, [=] { return layer_norm(ln_x, gamma, beta); });
    s.check("reshape", {x3}, [=] { return reshape(x3, {6, 4}); });
    Tensor c1 = s.random({3, 2}), c2 = s.random({3, 3});
    s.check("slice_cols", {m1}, [=] { return slice_cols(m1, 1, 3); });
    s.check("concat_cols", {c1, c2}, [=] { return concat_cols({c1, c2}); });
    Tensor r1 = s.random({2, 3});
    s.check("slice_rows", {m1}, [=] { return slice_rows(m1, 1, 2); });
    s.check("concat_rows", {r1, c2}, [=] { return concat_rows({r1, c2}); });
    s.check("repeat_rows", {r1}, [=] { return repeat_rows(r1, 3); });
    s.check("gather_flat", {r1}, [=] { return gather_flat(r1, {5, 0, 0, 3, 2, 5, 1}, {7}); });

    Tensor grid = s.random({3, 3, 3, 2}), w3 = s.random({27 * 2, 3}, -0.3, 0.3), b3 = s.random({3});
    s.check("conv3d", {grid, w3, b3}, [=] { return conv3d(grid, w3, b3); });
    Tensor img = s.random({4, 6, 2}), w2 = s.random({9 * 2, 3}, -0.4, 0.4), b2 = s.random({3});
    s.check("conv2d", {img, w2, b2}, [=] { return conv2d(img, w2, b2); });
    s.check("avg_pool2d", {img}, [=] { return avg_pool2d(img); });

    // Layers, with all parameters checked alongside the inputs.
    {
        ParamStore store(seed + 1);
        Linear l1(store, "l1", 5, 6);
        LayerNorm ln(store, "ln", 6);
        Tensor x = s.random({4, 5});
        std::vector<Tensor> inputs{x};
        for (auto& e : store.entries()) inputs.push_back(e.value);
        s.check("linear_gelu_layernorm", inputs, [=] { return ln(gelu(l1(x))); });
    }
    {
        ParamStore store(seed + 2);
        Mlp mlp(store, "mlp", 4, 8, 3);
        Tensor x = s.random({5, 4});
        std::vector<Tensor> inputs{x};
        for (auto& e : store.entries()) inputs.push_back(e.value);
        s.check("mlp", inputs, [=] { return mlp(x); });
    }
    {
        ParamStore store(seed + 3);
        Attention attn(store, "attn", 4, 6, 2);
        Tensor q = s.random({2, 4}), ctx = s.random({3, 6});
        std::vector<Tensor> inputs{q, ctx};
        for (auto& e : store.entries()) inputs.push_back(e.value);
        s.check("attention", inputs, [=] { return attn(q, ctx); });
    }
    {
        ParamStore store(seed + 4);
        TransformerBlock block(store, "block", 8, 8, 2);
        Tensor x = s.random({3, 8}), ctx = s.random({4, 8});
        std::vector<Tensor> inputs{x, ctx};
        for (auto& e : store.entries()) inputs.push_back(e.value);
        s.check("transformer_block", inputs, [=] { return block(x, ctx); });
    }

    auto reports = s.take();
    run_model_fd_cases(seed, options, reports);
    return reports;
}

}  // namespace agg::nn
