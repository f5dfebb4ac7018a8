#include "agg/nn/layers.hpp"

#include "agg/error.hpp"

#include <algorithm>
#include <cmath>

namespace agg::nn {

Linear::Linear(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t out, double gain)
    : w(store.xavier(name + ".w", {in, out}, in, out, gain)), b(store.zeros(name + ".b", {out})) {}

void Linear::zero() {
    for (auto* t : {&w, &b}) {
        auto d = t->mutable_data();
        std::fill(d.begin(), d.end(), 0.0);
    }
}

LayerNorm::LayerNorm(ParamStore& store, const std::string& name, std::int64_t dim)
    : gamma(store.constant(name + ".gamma", {dim}, 1.0)), beta(store.zeros(name + ".beta", {dim})) {}

Mlp::Mlp(ParamStore& store, const std::string& name, std::int64_t in, std::int64_t hidden, std::int64_t out)
    : fc1(store, name + ".fc1", in, hidden), fc2(store, name + ".fc2", hidden, out) {}

Attention::Attention(ParamStore& store, const std::string& name, std::int64_t dim, std::int64_t context_dim,
                     int heads_)
    : q(store, name + ".q", dim, dim),
      k(store, name + ".k", context_dim, dim),
      v(store, name + ".v", context_dim, dim),
      out(store, name + ".out", dim, dim),
      heads(heads_) {
    if (heads < 1 || dim % heads != 0) {
        throw Error(ErrorCode::ShapeMismatch, "attention width " + std::to_string(dim) + " not divisible by " +
                                                  std::to_string(heads) + " heads");
    }
}

Tensor Attention::operator()(const Tensor& queries, const Tensor& context) const {
    if (queries.rank() != 2 || context.rank() != 2) {
        throw Error(ErrorCode::ShapeMismatch, "attention expects [Q,D] queries and [K,Dc] context");
    }
    if (queries.dim(1) != q.w.dim(0) || context.dim(1) != k.w.dim(0)) {
        throw Error(ErrorCode::ShapeMismatch, "attention: query " + shape_string(queries.shape()) + " / context " +
                                                  shape_string(context.shape()) + " widths");
    }
    const std::int64_t dim = q.w.dim(1);
    const std::int64_t hd = dim / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(hd));
    Tensor qp = q(queries), kp = k(context), vp = v(context);
    std::vector<Tensor> per_head;
    per_head.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(qp, h * hd, hd);
        Tensor kh = slice_cols(kp, h * hd, hd);
        Tensor vh = slice_cols(vp, h * hd, hd);
        Tensor weights = softmax(scale(matmul_nt(qh, kh), inv));
        per_head.push_back(matmul(weights, vh));
    }
    Tensor merged = heads == 1 ? per_head[0] : concat_cols(per_head);
    return out(merged);
}

TransformerBlock::TransformerBlock(ParamStore& store, const std::string& name, std::int64_t dim,
                                   std::int64_t context_dim, int heads, std::int64_t mlp_ratio) {
    if (context_dim > 0) {
        ln_cross.emplace(store, name + ".ln_cross", dim);
        ln_ctx.emplace(store, name + ".ln_ctx", context_dim);
        cross.emplace(store, name + ".cross", dim, context_dim, heads);
    }
    ln_self = LayerNorm(store, name + ".ln_self", dim);
    self = Attention(store, name + ".self", dim, dim, heads);
    ln_mlp = LayerNorm(store, name + ".ln_mlp", dim);
    mlp = Mlp(store, name + ".mlp", dim, dim * mlp_ratio, dim);
}

Tensor TransformerBlock::operator()(const Tensor& tokens, const Tensor& context) const {
    Tensor x = tokens;
    if (cross) {
        if (!context.defined()) throw Error(ErrorCode::ShapeMismatch, "cross-attention block needs a context");
        x = add(x, (*cross)((*ln_cross)(x), (*ln_ctx)(context)));
    }
    Tensor h = ln_self(x);
    x = add(x, self(h, h));
    x = add(x, mlp(ln_mlp(x)));
    return x;
}

void TransformerBlock::zero_residuals() {
    if (cross) cross->out.zero();
    self.out.zero();
    mlp.fc2.zero();
}

}  // namespace agg::nn
