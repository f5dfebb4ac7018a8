#include "agg/error.hpp"
#include "agg/nn/fd_check.hpp"
#include "agg/nn/layers.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace agg;
using namespace agg::nn;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (double& x : v) x = d(rng);
    return Tensor::from_data(std::move(shape), std::move(v));
}

std::vector<double> to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Autograd, SumGivesOnes) {
    Tensor w = Tensor::from_data({2, 3}, {1, -2, 3, 0.5, 7, -1}, true);
    backward(sum(w));
    for (double g : w.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Autograd, HalfSquaredNormGivesValue) {
    Tensor w = Tensor::from_data({4}, {1.5, -2, 0.25, 3}, true);
    backward(scale(sum(square(w)), 0.5));
    for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(w.grad()[i], w.at(i));
}

TEST(Autograd, RepeatedCallsAccumulate) {
    Tensor w = Tensor::from_data({3}, {1, 2, 3}, true);
    backward(sum(w));
    backward(sum(w));
    for (double g : w.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Autograd, ReleasedGraphThrows) {
    Tensor w = Tensor::from_data({3}, {1, 2, 3}, true);
    Tensor loss = sum(square(w));
    backward(loss);
    try {
        backward(loss);
        FAIL() << "expected GraphConsumed";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::GraphConsumed);
    }
}

TEST(Autograd, UnreachedParameterGetsZero) {
    ParamStore store;
    Tensor used = store.constant("used", {2}, 1.0);
    Tensor unused = store.constant("unused", {3}, 1.0);
    backward(sum(used), store);
    ASSERT_TRUE(unused.has_grad());
    for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
    Tensor w = Tensor::from_data({2}, {1, 2}, true);
    NoGradGuard guard;
    Tensor y = square(w);
    EXPECT_FALSE(y.requires_grad());
}

TEST(FiniteDifference, EveryOperationPasses) {
    for (std::uint64_t seed : {0u, 1u, 2u}) {
        for (const auto& r : run_fd_suite(seed)) {
            EXPECT_TRUE(r.pass) << r.name << " seed " << seed << " max rel err " << r.max_rel_err;
            EXPECT_GT(r.checked, 0) << r.name;
        }
    }
}

TEST(FiniteDifference, DetectsWrongGradient) {
    // d/dx of x*x evaluated through a deliberately detached factor is x, not 2x.
    Tensor x = Tensor::from_data({3}, {0.5, -1.0, 2.0});
    auto report = fd_check("broken", {x}, [&] { return sum(mul(x, x.detach())); });
    EXPECT_FALSE(report.pass);
}

TEST(Softmax, RowsSumToOne) {
    std::mt19937_64 rng(3);
    Tensor s = softmax(random_tensor({7, 9}, rng, -20, 20));
    for (int r = 0; r < 7; ++r) {
        double total = 0.0;
        for (int c = 0; c < 9; ++c) total += s.at(r * 9 + c);
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Attention, SingleContextTokenReturnsItsValue) {
    ParamStore store(5);
    Attention attn(store, "a", 8, 8, 4);
    std::mt19937_64 rng(1);
    Tensor q = random_tensor({5, 8}, rng);
    Tensor ctx = random_tensor({1, 8}, rng);
    Tensor out = attn(q, ctx);
    Tensor expected = attn.out(attn.v(ctx));
    for (int r = 0; r < 5; ++r) {
        for (int c = 0; c < 8; ++c) EXPECT_NEAR(out.at(r * 8 + c), expected.at(c), 1e-12);
    }
}

TEST(Attention, ZeroOutputProjectionGivesZeros) {
    ParamStore store(5);
    Attention attn(store, "a", 8, 8, 2);
    attn.out.zero();
    std::mt19937_64 rng(2);
    Tensor out = attn(random_tensor({3, 8}, rng), random_tensor({4, 8}, rng));
    for (double v : out.data()) EXPECT_EQ(v, 0.0);
}

TEST(Attention, MatchesDenseLoopOracle) {
    ParamStore store(11);
    const int Q = 2, K = 3, D = 4, H = 2, hd = D / H;
    Attention attn(store, "a", D, D, H);
    for (auto& e : store.entries()) {
        std::mt19937_64 rng(std::hash<std::string>{}(e.name));
        std::uniform_real_distribution<double> d(-1, 1);
        for (double& v : e.value.mutable_data()) v = d(rng);
    }
    std::mt19937_64 rng(4);
    Tensor q = random_tensor({Q, D}, rng), ctx = random_tensor({K, D}, rng);
    Tensor out = attn(q, ctx);

    auto lin = [](const Linear& l, const std::vector<double>& x, int rows) {
        const int in = static_cast<int>(l.w.dim(0)), o = static_cast<int>(l.w.dim(1));
        std::vector<double> y(rows * o);
        for (int r = 0; r < rows; ++r) {
            for (int j = 0; j < o; ++j) {
                double s = l.b.at(j);
                for (int i = 0; i < in; ++i) s += x[r * in + i] * l.w.at(i * o + j);
                y[r * o + j] = s;
            }
        }
        return y;
    };
    auto qp = lin(attn.q, to_vec(q), Q), kp = lin(attn.k, to_vec(ctx), K), vp = lin(attn.v, to_vec(ctx), K);
    std::vector<double> merged(Q * D, 0.0);
    for (int h = 0; h < H; ++h) {
        for (int i = 0; i < Q; ++i) {
            double scores[K];
            double mx = -1e300;
            for (int j = 0; j < K; ++j) {
                double s = 0;
                for (int c = 0; c < hd; ++c) s += qp[i * D + h * hd + c] * kp[j * D + h * hd + c];
                scores[j] = s / std::sqrt(double(hd));
                mx = std::max(mx, scores[j]);
            }
            double z = 0;
            for (int j = 0; j < K; ++j) z += (scores[j] = std::exp(scores[j] - mx));
            for (int j = 0; j < K; ++j) {
                for (int c = 0; c < hd; ++c) merged[i * D + h * hd + c] += scores[j] / z * vp[j * D + h * hd + c];
            }
        }
    }
    auto expected = lin(attn.out, merged, Q);
    for (int i = 0; i < Q * D; ++i) EXPECT_NEAR(out.at(i), expected[i], 1e-6);
}

TEST(Attention, IndivisibleWidthThrows) {
    ParamStore store;
    EXPECT_THROW(Attention(store, "a", 6, 6, 4), Error);
}

TEST(TransformerBlock, ZeroResidualsIsIdentity) {
    ParamStore store(6);
    TransformerBlock block(store, "b", 8, 8, 2);
    block.zero_residuals();
    std::mt19937_64 rng(7);
    Tensor x = random_tensor({4, 8}, rng), ctx = random_tensor({3, 8}, rng);
    EXPECT_EQ(to_vec(block(x, ctx)), to_vec(x));
}

TEST(TransformerBlock, FiniteForLargeInputs) {
    ParamStore store(6);
    TransformerBlock block(store, "b", 8, 8, 2);
    std::mt19937_64 rng(8);
    Tensor x = random_tensor({4, 8}, rng, -1e3, 1e3), ctx = random_tensor({3, 8}, rng, -1e3, 1e3);
    const Tensor out = block(x, ctx);
    for (double v : out.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(TransformerBlock, PermutationEquivariantOverQueries) {
    ParamStore store(9);
    TransformerBlock block(store, "b", 8, 8, 2);
    std::mt19937_64 rng(10);
    const int Q = 5;
    Tensor x = random_tensor({Q, 8}, rng), ctx = random_tensor({3, 8}, rng);
    std::vector<int> perm(Q);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::int64_t> idx;
    for (int r = 0; r < Q; ++r) {
        for (int c = 0; c < 8; ++c) idx.push_back(perm[r] * 8 + c);
    }
    Tensor xp = gather_flat(x, idx, {Q, 8});
    Tensor y = block(x, ctx), yp = block(xp, ctx);
    for (int r = 0; r < Q; ++r) {
        for (int c = 0; c < 8; ++c) EXPECT_NEAR(yp.at(r * 8 + c), y.at(perm[r] * 8 + c), 1e-12);
    }
}

TEST(Adam, ZeroGradientLeavesParameters) {
    ParamStore store;
    Tensor w = store.add("w", {3}, {1, 2, 3});
    w.mutable_grad();
    store.adam_step(0.1);
    EXPECT_EQ(to_vec(w), (std::vector<double>{1, 2, 3}));
    EXPECT_EQ(store.step(), 1);
}

TEST(Adam, FirstStepIsLrTimesSign) {
    ParamStore store;
    Tensor w = store.add("w", {4}, {0, 0, 0, 0});
    const std::vector<double> g{0.3, -2.0, 1e-3, -50.0};
    auto grad = w.mutable_grad();
    std::copy(g.begin(), g.end(), grad.begin());
    const double lr = 0.01;
    store.adam_step(lr);
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(w.at(i), -lr * (g[i] > 0 ? 1 : -1), lr * 1e-4);
    EXPECT_FALSE(w.has_grad());
}

TEST(Adam, ConstantGradientDescendsMonotonically) {
    ParamStore store;
    Tensor w = store.add("w", {1}, {5.0});
    double prev = w.item();
    for (int i = 0; i < 100; ++i) {
        backward(sum(w), store);
        store.adam_step(1e-2);
        EXPECT_LT(w.item(), prev);
        prev = w.item();
    }
}

TEST(Adam, MissingGradientThrows) {
    ParamStore store;
    store.add("w", {2}, {1, 2});
    try {
        store.adam_step(0.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingGradient);
    }
}

TEST(Adam, FrozenParametersAreSkipped) {
    ParamStore store;
    Tensor a = store.add("frozen.w", {2}, {1, 2});
    Tensor b = store.add("live.w", {2}, {1, 2});
    store.set_trainable("frozen.", false);
    backward(add(sum(square(a)), sum(square(b))), store);
    store.adam_step(0.1);
    EXPECT_EQ(to_vec(a), (std::vector<double>{1, 2}));
    EXPECT_NE(to_vec(b), (std::vector<double>{1, 2}));
}

namespace {

std::vector<double> train_k_steps(int k) {
    ParamStore store(42);
    Mlp mlp(store, "m", 3, 8, 2);
    std::mt19937_64 rng(1);
    Tensor x = random_tensor({6, 3}, rng);
    for (int i = 0; i < k; ++i) {
        backward(mean(square(mlp(x))), store);
        store.adam_step(1e-2);
    }
    std::vector<double> all;
    for (auto& e : store.entries()) all.insert(all.end(), e.value.data().begin(), e.value.data().end());
    return all;
}

}  // namespace

TEST(Adam, TrainingIsBitwiseDeterministic) { EXPECT_EQ(train_k_steps(10), train_k_steps(10)); }

TEST(Checkpoint, RoundTripRestoresValuesAndMoments) {
    agg::testing::TempDir dir;
    ParamStore a(1);
    Mlp m(a, "m", 3, 4, 2);
    std::mt19937_64 rng(2);
    Tensor x = random_tensor({2, 3}, rng);
    backward(sum(m(x)), a);
    a.adam_step(0.01);
    save_checkpoint(a, dir / "c.ckpt", R"({"stage":1})");

    ParamStore b(99);
    Mlp mb(b, "m", 3, 4, 2);
    EXPECT_EQ(load_checkpoint(b, dir / "c.ckpt"), R"({"stage":1})");
    EXPECT_EQ(b.step(), 1);
    for (std::size_t i = 0; i < a.entries().size(); ++i) {
        EXPECT_EQ(to_vec(a.entries()[i].value), to_vec(b.entries()[i].value));
        EXPECT_EQ(a.entries()[i].m, b.entries()[i].m);
        EXPECT_EQ(a.entries()[i].v, b.entries()[i].v);
    }
}

TEST(Checkpoint, ShapeMismatchIsReported) {
    agg::testing::TempDir dir;
    ParamStore a;
    Mlp m(a, "m", 3, 4, 2);
    save_checkpoint(a, dir / "c.ckpt");
    ParamStore b;
    Mlp mb(b, "m", 3, 5, 2);
    try {
        load_checkpoint(b, dir / "c.ckpt");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CheckpointMismatch);
    }
}
