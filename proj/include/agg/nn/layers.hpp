#pragma once

#include "agg/nn/ops.hpp"
#include "agg/nn/param_store.hpp"

#include <optional>
#include <string>

namespace agg::nn {

struct Linear {
    Tensor w;  // [in, out]
    Tensor b;  // [out]

    Linear() = default;
    Linear(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out, double gain = 1.0);
    Tensor operator()(const Tensor& x) const { return linear(x, w, b); }
    /// Sets weight and bias to zero (residual branches, heads).
    void zero();
};

struct LayerNorm {
    Tensor gamma;
    Tensor beta;

    LayerNorm() = default;
    LayerNorm(ParamStore& store, const std::string& name, std::int64_t dim);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

/// Two-layer perceptron with GeLU.
struct Mlp {
    Linear fc1;
    Linear fc2;

    Mlp() = default;
    Mlp(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t hidden, std::int64_t out);
    Tensor operator()(const Tensor& x) const { return fc2(gelu(fc1(x))); }
};

/// Multi-head scaled dot-product attention. Queries are [Q, D]; context is
/// [K, Dc] and is projected to D for keys and values. Batches are handled by
/// the caller, one sample at a time.
struct Attention {
    Linear q, k, v, out;
    int heads = 1;

    Attention() = default;
    Attention(ParamStore& store, const std::string& name, std::int64_t dim, std::int64_t context_dim, int heads);
    Tensor operator()(const Tensor& queries, const Tensor& context) const;
};

/// Pre-norm residual block: optional cross-attention, self-attention, MLP.
struct TransformerBlock {
    std::optional<LayerNorm> ln_cross;
    std::optional<LayerNorm> ln_ctx;
    std::optional<Attention> cross;
    LayerNorm ln_self;
    Attention self;
    LayerNorm ln_mlp;
    Mlp mlp;

    TransformerBlock() = default;
    /// context_dim == 0 builds a self-attention-only block.
    TransformerBlock(ParamStore& store, const std::string& name, std::int64_t dim, std::int64_t context_dim,
                     int heads, std::int64_t mlp_ratio = 2);
    Tensor operator()(const Tensor& tokens, const Tensor& context = {}) const;
    /// Zeroes every residual-branch output projection.
    void zero_residuals();
};

}  // namespace agg::nn
