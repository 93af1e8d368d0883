#ifndef ELITE_LAB_DIFFCORE_NN_HPP
#define ELITE_LAB_DIFFCORE_NN_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "elite_lab/diffcore/ops.hpp"
#include "elite_lab/diffcore/tensor.hpp"

// Small building blocks shared by the encoders, the denoiser and the
// mapping networks. Weights use the x·W convention: W is [in, out].
namespace elite::diff {

using Rng = std::mt19937_64;

template <class T>
using NamedTensor = std::pair<std::string, Tensor<T>>;

template <class T>
using ParamList = std::vector<NamedTensor<T>>;

template <class T>
std::vector<Tensor<T>> tensors_of(const ParamList<T>& list) {
    std::vector<Tensor<T>> out;
    out.reserve(list.size());
    for (const auto& [name, t] : list) out.push_back(t);
    return out;
}

template <class T>
void set_trainable(const ParamList<T>& list, bool on) {
    for (const auto& [name, t] : list) {
        Tensor<T> h = t;
        h.set_requires_grad(on);
    }
}

template <class T>
void zero_grads(const ParamList<T>& list) {
    for (const auto& [name, t] : list) {
        Tensor<T> h = t;
        h.zero_grad();
    }
}

template <class T>
Tensor<T> param_normal(Shape shape, Rng& rng, double stddev) {
    return Tensor<T>::randn(std::move(shape), rng, static_cast<T>(stddev));
}

template <class T>
struct Linear {
    Tensor<T> weight;  // [in, out]
    Tensor<T> bias;    // [out], undefined when bias-free

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true, double gain = 1.0)
        : weight(param_normal<T>({in, out}, rng, gain / std::sqrt(static_cast<double>(in)))) {
        if (with_bias) bias = Tensor<T>::zeros({out});
    }

    std::size_t in_features() const { return weight.extent(0); }
    std::size_t out_features() const { return weight.extent(1); }

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto y = matmul(x, weight);
        return bias.defined() ? add_rowvec(y, bias) : y;
    }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.emplace_back(prefix + ".weight", weight);
        if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
    }
};

template <class T>
struct LayerNorm {
    Tensor<T> gamma, beta;

    LayerNorm() = default;
    explicit LayerNorm(std::size_t n) : gamma(Tensor<T>::full({n}, T(1))), beta(Tensor<T>::zeros({n})) {}

    Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        out.emplace_back(prefix + ".gamma", gamma);
        out.emplace_back(prefix + ".beta", beta);
    }
};

// Three linear layers with GELU between them.
template <class T>
struct Mlp3 {
    Linear<T> fc1, fc2, fc3;

    Mlp3() = default;
    Mlp3(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng, bool zero_last = false)
        : fc1(in, hidden, rng), fc2(hidden, hidden, rng), fc3(hidden, out, rng) {
        if (zero_last) {
            for (auto& v : fc3.weight.data()) v = T(0);
        }
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return fc3(gelu(fc2(gelu(fc1(x))))); }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        fc1.collect(out, prefix + ".fc1");
        fc2.collect(out, prefix + ".fc2");
        fc3.collect(out, prefix + ".fc3");
    }
};

// Attention map softmax(q k^T / sqrt(d')).
template <class T>
Tensor<T> attention_map(const Tensor<T>& q, const Tensor<T>& k) {
    const T s = T(1) / std::sqrt(static_cast<T>(q.cols()));
    return softmax_lastdim(scale(matmul_nt(q, k), s));
}

// Pre-norm single-head self-attention block with a GELU MLP.
template <class T>
struct TransformerBlock {
    LayerNorm<T> ln1, ln2;
    Linear<T> wq, wk, wv, wo;
    Linear<T> fc1, fc2;

    TransformerBlock() = default;
    TransformerBlock(std::size_t dim, std::size_t mlp_hidden, Rng& rng)
        : ln1(dim),
          ln2(dim),
          wq(dim, dim, rng, false),
          wk(dim, dim, rng, false),
          wv(dim, dim, rng, false),
          wo(dim, dim, rng, true, 0.5),
          fc1(dim, mlp_hidden, rng),
          fc2(mlp_hidden, dim, rng, true, 0.5) {}

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto h = ln1(x);
        auto a = attention_map(wq(h), wk(h));
        auto y = add(x, wo(matmul(a, wv(h))));
        return add(y, fc2(gelu(fc1(ln2(y)))));
    }

    void collect(ParamList<T>& out, const std::string& prefix) const {
        ln1.collect(out, prefix + ".ln1");
        wq.collect(out, prefix + ".wq");
        wk.collect(out, prefix + ".wk");
        wv.collect(out, prefix + ".wv");
        wo.collect(out, prefix + ".wo");
        ln2.collect(out, prefix + ".ln2");
        fc1.collect(out, prefix + ".fc1");
        fc2.collect(out, prefix + ".fc2");
    }
};

// 3x3 same-padding convolution on [H*W, C] tokens.
template <class T>
struct Conv3x3 {
    Linear<T> proj;  // [9*in, out]

    Conv3x3() = default;
    Conv3x3(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0) : proj(9 * in, out, rng, true, gain) {}

    Tensor<T> operator()(const Tensor<T>& x, std::size_t h, std::size_t w) const {
        return proj(im2col3x3(x, h, w));
    }

    void collect(ParamList<T>& out, const std::string& prefix) const { proj.collect(out, prefix); }
};

// Copies values between parameter lists of identical layout, converting
// precision as needed.
template <class Dst, class Src>
void copy_params(const ParamList<Dst>& dst, const ParamList<Src>& src) {
    if (dst.size() != src.size()) throw ShapeError("copy_params: parameter count mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) {
        if (dst[i].first != src[i].first || dst[i].second.shape() != src[i].second.shape())
            throw ShapeError("copy_params: layout mismatch at " + dst[i].first);
        Tensor<Dst> d = dst[i].second;
        auto s = src[i].second.data();
        auto dd = d.data();
        for (std::size_t k = 0; k < dd.size(); ++k) dd[k] = static_cast<Dst>(s[k]);
    }
}

// FNV-1a over the raw bytes of every parameter, for independence and
// freezing checks.
template <class T>
std::uint64_t checksum(const ParamList<T>& list) {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [name, t] : list) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(t.data().data());
        for (std::size_t i = 0; i < t.numel() * sizeof(T); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    }
    return h;
}

template <class T>
std::vector<std::vector<T>> snapshot(const ParamList<T>& list) {
    std::vector<std::vector<T>> out;
    out.reserve(list.size());
    for (const auto& [name, t] : list) out.push_back(t.to_vector());
    return out;
}

}  // namespace elite::diff

#endif  // ELITE_LAB_DIFFCORE_NN_HPP
