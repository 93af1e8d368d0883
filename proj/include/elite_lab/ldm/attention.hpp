#ifndef ELITE_LAB_LDM_ATTENTION_HPP
#define ELITE_LAB_LDM_ATTENTION_HPP

#include "elite_lab/diffcore/nn.hpp"

namespace elite::ldm {

using diff::Tensor;

template <class T>
struct AttentionResult {
    Tensor<T> out;  // [queries, d']
    Tensor<T> map;  // [queries, keys], rows sum to 1
};

// Keys and values projected from `source`, attended by precomputed queries.
template <class T>
AttentionResult<T> attend(const Tensor<T>& q, const Tensor<T>& source, const Tensor<T>& wk, const Tensor<T>& wv) {
    auto k = diff::matmul(source, wk);
    auto v = diff::matmul(source, wv);
    auto a = diff::attention_map(q, k);
    return {diff::matmul(a, v), a};
}

// softmax(Q K^T / sqrt(d')) V with Q = f·W_Q, K = ctx·W_K, V = ctx·W_V.
template <class T>
AttentionResult<T> cross_attention(const Tensor<T>& f, const Tensor<T>& ctx, const Tensor<T>& wq, const Tensor<T>& wk,
                                   const Tensor<T>& wv) {
    if (!ctx.defined() || ctx.numel() == 0) throw ShapeError("cross_attention: empty context");
    if (f.cols() != wq.rows() || ctx.cols() != wk.rows() || ctx.cols() != wv.rows() || wq.cols() != wk.cols())
        throw ShapeError("cross_attention: projection shapes do not match the inputs");
    return attend(diff::matmul(f, wq), ctx, wk, wv);
}

}  // namespace elite::ldm

#endif  // ELITE_LAB_LDM_ATTENTION_HPP
