#ifndef ELITE_LAB_DIFFCORE_OPS_HPP
#define ELITE_LAB_DIFFCORE_OPS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "elite_lab/diffcore/parallel.hpp"
#include "elite_lab/diffcore/tensor.hpp"

// Differentiable kernels. Row-major storage, no implicit broadcasting: every
// op states its operand shapes. Feature maps travel as [H*W, C] token
// matrices so convolutions and attention share one layout.
namespace elite::diff {

namespace detail {

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

template <class T>
void require_2d(const Tensor<T>& t, const char* op) {
    require(t.dim() == 2, std::string(op) + ": expected a 2-D tensor, got " + shape_str(t.shape()));
}

template <class T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    require(a.shape() == b.shape(),
            std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// C[M,N] += A[M,K] * B[K,N]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    parallel_rows(m, k * n, [=](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            T* ci = c + i * n;
            const T* ai = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const T av = ai[p];
                if (av == T(0)) continue;
                const T* bp = b + p * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    });
}

// C[M,N] += A[M,K] * B[N,K]^T
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    parallel_rows(m, k * n, [=](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const T* ai = a + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const T* bj = b + j * k;
                T s = T(0);
                for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
                c[i * n + j] += s;
            }
        }
    });
}

// C[M,N] += A[K,M]^T * B[K,N]
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t k, std::size_t m, std::size_t n) {
    parallel_rows(m, k * n, [=](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            T* ci = c + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const T av = a[p * m + i];
                if (av == T(0)) continue;
                const T* bp = b + p * n;
                for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
            }
        }
    });
}

template <class T>
void accumulate(TensorImpl<T>* dst, const std::vector<T>& g) {
    if (!dst->requires_grad) return;
    dst->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dst->grad[i] += g[i];
}

}  // namespace detail

// ---------------------------------------------------------------- linear algebra

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_2d(a, "matmul");
    detail::require_2d(b, "matmul");
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
    detail::require(b.extent(0) == k, "matmul: inner extents differ " + shape_str(a.shape()) + " x " +
                                          shape_str(b.shape()));
    std::vector<T> c(m * n, T(0));
    detail::gemm_nn(a.data().data(), b.data().data(), c.data(), m, k, n);
    auto out = make_result<T>({m, n}, std::move(c), {a, b});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl(), *pb = b.impl();
        o->backward_fn = [o, pa, pb, m, k, n] {
            if (pa->requires_grad) {
                pa->ensure_grad();
                detail::gemm_nt(o->grad.data(), pb->data.data(), pa->grad.data(), m, n, k);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                detail::gemm_tn(pa->data.data(), o->grad.data(), pb->grad.data(), m, k, n);
            }
        };
    }
    return out;
}

// a[M,K] · b[N,K]^T, the attention score layout.
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_2d(a, "matmul_nt");
    detail::require_2d(b, "matmul_nt");
    const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(0);
    detail::require(b.extent(1) == k, "matmul_nt: inner extents differ " + shape_str(a.shape()) + " x " +
                                          shape_str(b.shape()) + "^T");
    std::vector<T> c(m * n, T(0));
    detail::gemm_nt(a.data().data(), b.data().data(), c.data(), m, k, n);
    auto out = make_result<T>({m, n}, std::move(c), {a, b});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl(), *pb = b.impl();
        o->backward_fn = [o, pa, pb, m, k, n] {
            if (pa->requires_grad) {
                pa->ensure_grad();
                detail::gemm_nn(o->grad.data(), pb->data.data(), pa->grad.data(), m, n, k);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                detail::gemm_tn(o->grad.data(), pa->data.data(), pb->grad.data(), m, n, k);
            }
        };
    }
    return out;
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require_2d(a, "transpose");
    const std::size_t m = a.extent(0), n = a.extent(1);
    std::vector<T> d(m * n);
    auto src = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[j * m + i] = src[i * n + j];
    auto out = make_result<T>({n, m}, std::move(d), {a});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl();
        o->backward_fn = [o, pa, m, n] {
            pa->ensure_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) pa->grad[i * n + j] += o->grad[j * m + i];
        };
    }
    return out;
}

// ---------------------------------------------------------------- elementwise

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same(a, b, "add");
    std::vector<T> d(a.numel());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] + b[i];
    auto out = make_result<T>(a.shape(), std::move(d), {a, b});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl(), *pb = b.impl();
        o->backward_fn = [o, pa, pb] {
            detail::accumulate(pa, o->grad);
            detail::accumulate(pb, o->grad);
        };
    }
    return out;
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same(a, b, "sub");
    std::vector<T> d(a.numel());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
    auto out = make_result<T>(a.shape(), std::move(d), {a, b});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl(), *pb = b.impl();
        o->backward_fn = [o, pa, pb] {
            detail::accumulate(pa, o->grad);
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) pb->grad[i] -= o->grad[i];
            }
        };
    }
    return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same(a, b, "mul");
    std::vector<T> d(a.numel());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] * b[i];
    auto out = make_result<T>(a.shape(), std::move(d), {a, b});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl(), *pb = b.impl();
        o->backward_fn = [o, pa, pb] {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i] * pb->data[i];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t i = 0; i < o->grad.size(); ++i) pb->grad[i] += o->grad[i] * pa->data[i];
            }
        };
    }
    return out;
}

// Scalar-tensor ops: the only broadcasting the engine performs.
template <class T>
Tensor<T> scale(const Tensor<T>& a, T s) {
    std::vector<T> d(a.numel());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] * s;
    auto out = make_result<T>(a.shape(), std::move(d), {a});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl();
        o->backward_fn = [o, pa, s] {
            pa->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i] * s;
        };
    }
    return out;
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    std::vector<T> d(a.numel());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] + s;
    auto out = make_result<T>(a.shape(), std::move(d), {a});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl();
        o->backward_fn = [o, pa] { detail::accumulate(pa, o->grad); };
    }
    return out;
}

namespace detail {

template <class T, class F, class DF>
Tensor<T> unary(const Tensor<T>& a, F f, DF df) {
    std::vector<T> d(a.numel());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = f(a[i]);
    auto out = make_result<T>(a.shape(), std::move(d), {a});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl();
        o->backward_fn = [o, pa, df] {
            pa->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) pa->grad[i] += o->grad[i] * df(pa->data[i], o->data[i]);
        };
    }
    return out;
}

}  // namespace detail

template <class T>
Tensor<T> square(const Tensor<T>& a) {
    return detail::unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return detail::unary(
        a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Tensor<T> silu(const Tensor<T>& a) {
    return detail::unary(
        a, [](T x) { return x / (T(1) + std::exp(-x)); },
        [](T x, T) {
            const T s = T(1) / (T(1) + std::exp(-x));
            return s * (T(1) + x * (T(1) - s));
        });
}

// tanh-approximated GELU
template <class T>
Tensor<T> gelu(const Tensor<T>& a) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    return detail::unary(
        a,
        [](T x) {
            const T u = T(kC) * (x + T(0.044715) * x * x * x);
            return T(0.5) * x * (T(1) + std::tanh(u));
        },
        [](T x, T) {
            const T u = T(kC) * (x + T(0.044715) * x * x * x);
            const T th = std::tanh(u);
            const T du = T(kC) * (T(1) + T(3) * T(0.044715) * x * x);
            return T(0.5) * (T(1) + th) + T(0.5) * x * (T(1) - th * th) * du;
        });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& a) {
    return detail::unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

// ---------------------------------------------------------------- reductions

template <class T>
Tensor<T> sum(const Tensor<T>& a) {
    T s = T(0);
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i];
    auto out = make_result<T>({1}, {s}, {a});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl();
        o->backward_fn = [o, pa] {
            pa->ensure_grad();
            for (auto& g : pa->grad) g += o->grad[0];
        };
    }
    return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

// L1 norm; the subgradient at 0 is 0.
template <class T>
Tensor<T> abs_sum(const Tensor<T>& a) {
    T s = T(0);
    for (std::size_t i = 0; i < a.numel(); ++i) s += std::abs(a[i]);
    auto out = make_result<T>({1}, {s}, {a});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl();
        o->backward_fn = [o, pa] {
            pa->ensure_grad();
            for (std::size_t i = 0; i < pa->data.size(); ++i) {
                const T x = pa->data[i];
                pa->grad[i] += o->grad[0] * (x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)));
            }
        };
    }
    return out;
}

// mean((a - b)^2)
template <class T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same(a, b, "mse");
    const std::size_t n = a.numel();
    T s = T(0);
    for (std::size_t i = 0; i < n; ++i) {
        const T d = a[i] - b[i];
        s += d * d;
    }
    auto out = make_result<T>({1}, {s / static_cast<T>(n)}, {a, b});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl(), *pb = b.impl();
        o->backward_fn = [o, pa, pb, n] {
            const T g = o->grad[0] * T(2) / static_cast<T>(n);
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) pa->grad[i] += g * (pa->data[i] - pb->data[i]);
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t i = 0; i < n; ++i) pb->grad[i] -= g * (pa->data[i] - pb->data[i]);
            }
        };
    }
    return out;
}

// Column-wise mean over rows: [M,N] -> [1,N].
template <class T>
Tensor<T> mean_rows(const Tensor<T>& a) {
    detail::require_2d(a, "mean_rows");
    const std::size_t m = a.extent(0), n = a.extent(1);
    std::vector<T> d(n, T(0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[j] += a[i * n + j];
    for (auto& v : d) v /= static_cast<T>(m);
    auto out = make_result<T>({1, n}, std::move(d), {a});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl();
        o->backward_fn = [o, pa, m, n] {
            pa->ensure_grad();
            const T inv = T(1) / static_cast<T>(m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) pa->grad[i * n + j] += o->grad[j] * inv;
        };
    }
    return out;
}

// ---------------------------------------------------------------- normalization

template <class T>
Tensor<T> softmax_lastdim(const Tensor<T>& a) {
    if (!a.all_finite()) throw NumericError("softmax_lastdim: non-finite input");
    const std::size_t n = a.cols();
    const std::size_t m = a.numel() / n;
    std::vector<T> d(a.numel());
    for (std::size_t r = 0; r < m; ++r) {
        const T* x = a.data().data() + r * n;
        T* y = d.data() + r * n;
        const T mx = *std::max_element(x, x + n);
        T s = T(0);
        for (std::size_t j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            s += y[j];
        }
        for (std::size_t j = 0; j < n; ++j) y[j] /= s;
    }
    auto out = make_result<T>(a.shape(), std::move(d), {a});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl();
        o->backward_fn = [o, pa, m, n] {
            pa->ensure_grad();
            for (std::size_t r = 0; r < m; ++r) {
                const T* y = o->data.data() + r * n;
                const T* dy = o->grad.data() + r * n;
                T dot = T(0);
                for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
                for (std::size_t j = 0; j < n; ++j) pa->grad[r * n + j] += y[j] * (dy[j] - dot);
            }
        };
    }
    return out;
}

// Layer normalization over the last dimension with affine gamma/beta [N].
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
    const std::size_t n = x.cols();
    const std::size_t m = x.numel() / n;
    detail::require(gamma.numel() == n && beta.numel() == n, "layer_norm: affine length mismatch");
    std::vector<T> d(x.numel()), xhat(x.numel()), inv_std(m);
    for (std::size_t r = 0; r < m; ++r) {
        const T* xr = x.data().data() + r * n;
        T mu = T(0);
        for (std::size_t j = 0; j < n; ++j) mu += xr[j];
        mu /= static_cast<T>(n);
        T var = T(0);
        for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<T>(n);
        const T is = T(1) / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t j = 0; j < n; ++j) {
            xhat[r * n + j] = (xr[j] - mu) * is;
            d[r * n + j] = xhat[r * n + j] * gamma[j] + beta[j];
        }
    }
    auto out = make_result<T>(x.shape(), std::move(d), {x, gamma, beta});
    if (out.requires_grad()) {
        auto *o = out.impl(), *px = x.impl(), *pg = gamma.impl(), *pb = beta.impl();
        o->backward_fn = [o, px, pg, pb, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)] {
            if (pg->requires_grad) {
                pg->ensure_grad();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t j = 0; j < n; ++j) pg->grad[j] += o->grad[r * n + j] * xhat[r * n + j];
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t j = 0; j < n; ++j) pb->grad[j] += o->grad[r * n + j];
            }
            if (px->requires_grad) {
                px->ensure_grad();
                std::vector<T> dxh(n);
                for (std::size_t r = 0; r < m; ++r) {
                    T s1 = T(0), s2 = T(0);
                    for (std::size_t j = 0; j < n; ++j) {
                        dxh[j] = o->grad[r * n + j] * pg->data[j];
                        s1 += dxh[j];
                        s2 += dxh[j] * xhat[r * n + j];
                    }
                    s1 /= static_cast<T>(n);
                    s2 /= static_cast<T>(n);
                    for (std::size_t j = 0; j < n; ++j)
                        px->grad[r * n + j] += inv_std[r] * (dxh[j] - s1 - xhat[r * n + j] * s2);
                }
            }
        };
    }
    return out;
}

// Each row divided by its Euclidean norm.
template <class T>
Tensor<T> l2_normalize_rows(const Tensor<T>& a, T eps = T(1e-8)) {
    detail::require_2d(a, "l2_normalize_rows");
    const std::size_t m = a.extent(0), n = a.extent(1);
    std::vector<T> d(a.numel()), norms(m);
    for (std::size_t r = 0; r < m; ++r) {
        T s = T(0);
        for (std::size_t j = 0; j < n; ++j) s += a[r * n + j] * a[r * n + j];
        norms[r] = std::sqrt(s) + eps;
        for (std::size_t j = 0; j < n; ++j) d[r * n + j] = a[r * n + j] / norms[r];
    }
    auto out = make_result<T>(a.shape(), std::move(d), {a});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl();
        o->backward_fn = [o, pa, m, n, norms = std::move(norms)] {
            pa->ensure_grad();
            for (std::size_t r = 0; r < m; ++r) {
                T dot = T(0);
                for (std::size_t j = 0; j < n; ++j) dot += o->grad[r * n + j] * o->data[r * n + j];
                for (std::size_t j = 0; j < n; ++j)
                    pa->grad[r * n + j] += (o->grad[r * n + j] - o->data[r * n + j] * dot) / norms[r];
            }
        };
    }
    return out;
}

// Mean cross-entropy of row-wise softmax(logits) against integer targets.
template <class T>
Tensor<T> cross_entropy_rows(const Tensor<T>& logits, const std::vector<std::size_t>& targets) {
    detail::require_2d(logits, "cross_entropy_rows");
    const std::size_t m = logits.extent(0), n = logits.extent(1);
    detail::require(targets.size() == m, "cross_entropy_rows: target count mismatch");
    std::vector<T> prob(m * n);
    T loss = T(0);
    for (std::size_t r = 0; r < m; ++r) {
        const T* x = logits.data().data() + r * n;
        const T mx = *std::max_element(x, x + n);
        T s = T(0);
        for (std::size_t j = 0; j < n; ++j) s += std::exp(x[j] - mx);
        for (std::size_t j = 0; j < n; ++j) prob[r * n + j] = std::exp(x[j] - mx) / s;
        loss -= (x[targets[r]] - mx - std::log(s));
    }
    loss /= static_cast<T>(m);
    auto out = make_result<T>({1}, {loss}, {logits});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pl = logits.impl();
        o->backward_fn = [o, pl, m, n, targets, prob = std::move(prob)] {
            pl->ensure_grad();
            const T g = o->grad[0] / static_cast<T>(m);
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t j = 0; j < n; ++j)
                    pl->grad[r * n + j] += g * (prob[r * n + j] - (j == targets[r] ? T(1) : T(0)));
        };
    }
    return out;
}

// ---------------------------------------------------------------- row/column plumbing

// a[M,N] + b[N] added to every row.
template <class T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t n = a.cols();
    const std::size_t m = a.numel() / n;
    detail::require(b.numel() == n, "add_rowvec: vector length " + std::to_string(b.numel()) + " vs " +
                                        std::to_string(n) + " columns");
    std::vector<T> d(a.numel());
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < n; ++j) d[r * n + j] = a[r * n + j] + b[j];
    auto out = make_result<T>(a.shape(), std::move(d), {a, b});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl(), *pb = b.impl();
        o->backward_fn = [o, pa, pb, m, n] {
            detail::accumulate(pa, o->grad);
            if (pb->requires_grad) {
                pb->ensure_grad();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t j = 0; j < n; ++j) pb->grad[j] += o->grad[r * n + j];
            }
        };
    }
    return out;
}

// Row r of a[M,N] scaled by s[r].
template <class T>
Tensor<T> mul_rows(const Tensor<T>& a, const Tensor<T>& s) {
    detail::require_2d(a, "mul_rows");
    const std::size_t m = a.extent(0), n = a.extent(1);
    detail::require(s.numel() == m, "mul_rows: scale length " + std::to_string(s.numel()) + " vs " +
                                        std::to_string(m) + " rows");
    std::vector<T> d(a.numel());
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t j = 0; j < n; ++j) d[r * n + j] = a[r * n + j] * s[r];
    auto out = make_result<T>(a.shape(), std::move(d), {a, s});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl(), *ps = s.impl();
        o->backward_fn = [o, pa, ps, m, n] {
            if (pa->requires_grad) {
                pa->ensure_grad();
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t j = 0; j < n; ++j) pa->grad[r * n + j] += o->grad[r * n + j] * ps->data[r];
            }
            if (ps->requires_grad) {
                ps->ensure_grad();
                for (std::size_t r = 0; r < m; ++r) {
                    T acc = T(0);
                    for (std::size_t j = 0; j < n; ++j) acc += o->grad[r * n + j] * pa->data[r * n + j];
                    ps->grad[r] += acc;
                }
            }
        };
    }
    return out;
}

// Column j of a[M,N] as an [M] vector.
template <class T>
Tensor<T> column(const Tensor<T>& a, std::size_t j) {
    detail::require_2d(a, "column");
    const std::size_t m = a.extent(0), n = a.extent(1);
    detail::require(j < n, "column: index " + std::to_string(j) + " out of " + std::to_string(n));
    std::vector<T> d(m);
    for (std::size_t r = 0; r < m; ++r) d[r] = a[r * n + j];
    auto out = make_result<T>({m}, std::move(d), {a});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl();
        o->backward_fn = [o, pa, m, n, j] {
            pa->ensure_grad();
            for (std::size_t r = 0; r < m; ++r) pa->grad[r * n + j] += o->grad[r];
        };
    }
    return out;
}

// v / max(v). The gradient through the max flows to its first argmax.
template <class T>
Tensor<T> divide_by_max(const Tensor<T>& v) {
    const std::size_t n = v.numel();
    std::size_t k = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (v[i] > v[k]) k = i;
    const T mx = v[k];
    if (!(mx > T(0))) throw NumericError("divide_by_max: maximum is not positive");
    std::vector<T> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = v[i] / mx;
    auto out = make_result<T>(v.shape(), std::move(d), {v});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pv = v.impl();
        o->backward_fn = [o, pv, n, k, mx] {
            pv->ensure_grad();
            T dm = T(0);
            for (std::size_t i = 0; i < n; ++i) {
                pv->grad[i] += o->grad[i] / mx;
                dm -= o->grad[i] * pv->data[i] / (mx * mx);
            }
            pv->grad[k] += dm;
        };
    }
    return out;
}

template <class T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    detail::require(shape_numel(shape) == a.numel(),
                    "reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) + " changes element count");
    auto out = make_result<T>(std::move(shape), a.to_vector(), {a});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl();
        o->backward_fn = [o, pa] { detail::accumulate(pa, o->grad); };
    }
    return out;
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
    detail::require_2d(a, "slice_rows");
    const std::size_t n = a.extent(1);
    detail::require(begin < end && end <= a.extent(0), "slice_rows: bad range");
    std::vector<T> d(a.data().begin() + begin * n, a.data().begin() + end * n);
    auto out = make_result<T>({end - begin, n}, std::move(d), {a});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pa = a.impl();
        o->backward_fn = [o, pa, begin, n] {
            pa->ensure_grad();
            for (std::size_t i = 0; i < o->grad.size(); ++i) pa->grad[begin * n + i] += o->grad[i];
        };
    }
    return out;
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
    detail::require(!parts.empty(), "concat_rows: no inputs");
    const std::size_t n = parts.front().cols();
    std::size_t m = 0;
    for (const auto& p : parts) {
        detail::require(p.cols() == n, "concat_rows: column count mismatch");
        m += p.rows();
    }
    std::vector<T> d;
    d.reserve(m * n);
    for (const auto& p : parts) d.insert(d.end(), p.data().begin(), p.data().end());
    auto out = make_result<T>({m, n}, std::move(d), parts);
    if (out.requires_grad()) {
        auto* o = out.impl();
        std::vector<TensorImpl<T>*> ps;
        for (const auto& p : parts) ps.push_back(p.impl());
        o->backward_fn = [o, ps] {
            std::size_t off = 0;
            for (auto* p : ps) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (std::size_t i = 0; i < p->data.size(); ++i) p->grad[i] += o->grad[off + i];
                }
                off += p->data.size();
            }
        };
    }
    return out;
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    detail::require(!parts.empty(), "concat_cols: no inputs");
    const std::size_t m = parts.front().rows();
    std::size_t n = 0;
    for (const auto& p : parts) {
        detail::require(p.rows() == m, "concat_cols: row count mismatch");
        n += p.cols();
    }
    std::vector<T> d(m * n);
    std::size_t off = 0;
    for (const auto& p : parts) {
        const std::size_t c = p.cols();
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t j = 0; j < c; ++j) d[r * n + off + j] = p[r * c + j];
        off += c;
    }
    auto out = make_result<T>({m, n}, std::move(d), parts);
    if (out.requires_grad()) {
        auto* o = out.impl();
        std::vector<TensorImpl<T>*> ps;
        for (const auto& p : parts) ps.push_back(p.impl());
        o->backward_fn = [o, ps, m, n] {
            std::size_t off = 0;
            for (auto* p : ps) {
                const std::size_t c = p->shape.back();
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (std::size_t r = 0; r < m; ++r)
                        for (std::size_t j = 0; j < c; ++j) p->grad[r * c + j] += o->grad[r * n + off + j];
                }
                off += c;
            }
        };
    }
    return out;
}

// Rows of table[V,D] selected by ids -> [L,D].
template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<std::size_t>& ids) {
    detail::require_2d(table, "gather_rows");
    detail::require(!ids.empty(), "gather_rows: empty id list");
    const std::size_t v = table.extent(0), n = table.extent(1);
    std::vector<T> d(ids.size() * n);
    for (std::size_t r = 0; r < ids.size(); ++r) {
        detail::require(ids[r] < v, "gather_rows: id out of range");
        std::copy_n(table.data().begin() + ids[r] * n, n, d.begin() + r * n);
    }
    auto out = make_result<T>({ids.size(), n}, std::move(d), {table});
    if (out.requires_grad()) {
        auto *o = out.impl(), *pt = table.impl();
        o->backward_fn = [o, pt, ids, n] {
            pt->ensure_grad();
            for (std::size_t r = 0; r < ids.size(); ++r)
                for (std::size_t j = 0; j < n; ++j) pt->grad[ids[r] * n + j] += o->grad[r * n + j];
        };
    }
    return out;
}

// ---------------------------------------------------------------- spatial (token layout [H*W, C])

// 3x3 zero-padded neighbourhoods: [H*W, C] -> [H*W, 9*C], column (ky*3+kx)*C + c.
template <class T>
Tensor<T> im2col3x3(const Tensor<T>& x, std::size_t h, std::size_t w) {
    detail::require_2d(x, "im2col3x3");
    detail::require(x.extent(0) == h * w, "im2col3x3: token count does not match H*W");
    const std::size_t c = x.extent(1);
    std::vector<T> d(h * w * 9 * c, T(0));
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) {
            T* row = d.data() + (y * w + xx) * 9 * c;
            for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                    const long sy = static_cast<long>(y) + ky - 1, sx = static_cast<long>(xx) + kx - 1;
                    if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w)) continue;
                    std::copy_n(x.data().begin() + (sy * w + sx) * c, c, row + (ky * 3 + kx) * c);
                }
        }
    auto out = make_result<T>({h * w, 9 * c}, std::move(d), {x});
    if (out.requires_grad()) {
        auto *o = out.impl(), *px = x.impl();
        o->backward_fn = [o, px, h, w, c] {
            px->ensure_grad();
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    const T* row = o->grad.data() + (y * w + xx) * 9 * c;
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const long sy = static_cast<long>(y) + ky - 1, sx = static_cast<long>(xx) + kx - 1;
                            if (sy < 0 || sx < 0 || sy >= static_cast<long>(h) || sx >= static_cast<long>(w))
                                continue;
                            T* dst = px->grad.data() + (sy * w + sx) * c;
                            const T* src = row + (ky * 3 + kx) * c;
                            for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
                        }
                }
        };
    }
    return out;
}

// 2x2 average pooling: [H*W, C] -> [(H/2)*(W/2), C].
template <class T>
Tensor<T> avg_pool2x2(const Tensor<T>& x, std::size_t h, std::size_t w) {
    detail::require_2d(x, "avg_pool2x2");
    detail::require(x.extent(0) == h * w && h % 2 == 0 && w % 2 == 0, "avg_pool2x2: bad spatial extent");
    const std::size_t c = x.extent(1), oh = h / 2, ow = w / 2;
    std::vector<T> d(oh * ow * c, T(0));
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx)
            for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) {
                    const T* src = x.data().data() + ((2 * y + dy) * w + 2 * xx + dx) * c;
                    T* dst = d.data() + (y * ow + xx) * c;
                    for (std::size_t k = 0; k < c; ++k) dst[k] += T(0.25) * src[k];
                }
    auto out = make_result<T>({oh * ow, c}, std::move(d), {x});
    if (out.requires_grad()) {
        auto *o = out.impl(), *px = x.impl();
        o->backward_fn = [o, px, w, c, oh, ow] {
            px->ensure_grad();
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx)
                    for (std::size_t dy = 0; dy < 2; ++dy)
                        for (std::size_t dx = 0; dx < 2; ++dx) {
                            T* dst = px->grad.data() + ((2 * y + dy) * w + 2 * xx + dx) * c;
                            const T* src = o->grad.data() + (y * ow + xx) * c;
                            for (std::size_t k = 0; k < c; ++k) dst[k] += T(0.25) * src[k];
                        }
        };
    }
    return out;
}

// Nearest-neighbour 2x upsampling: [H*W, C] -> [(2H)*(2W), C].
template <class T>
Tensor<T> upsample2x(const Tensor<T>& x, std::size_t h, std::size_t w) {
    detail::require_2d(x, "upsample2x");
    detail::require(x.extent(0) == h * w, "upsample2x: token count does not match H*W");
    const std::size_t c = x.extent(1), ow = 2 * w;
    std::vector<T> d(4 * h * w * c);
    for (std::size_t y = 0; y < 2 * h; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx)
            std::copy_n(x.data().begin() + ((y / 2) * w + xx / 2) * c, c, d.begin() + (y * ow + xx) * c);
    auto out = make_result<T>({4 * h * w, c}, std::move(d), {x});
    if (out.requires_grad()) {
        auto *o = out.impl(), *px = x.impl();
        o->backward_fn = [o, px, h, w, c, ow] {
            px->ensure_grad();
            for (std::size_t y = 0; y < 2 * h; ++y)
                for (std::size_t xx = 0; xx < ow; ++xx) {
                    T* dst = px->grad.data() + ((y / 2) * w + xx / 2) * c;
                    const T* src = o->grad.data() + (y * ow + xx) * c;
                    for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
                }
        };
    }
    return out;
}

// ---------------------------------------------------------------- operators

template <class T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) {
    return add(a, b);
}
template <class T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) {
    return sub(a, b);
}
template <class T>
Tensor<T> operator*(const Tensor<T>& a, T s) {
    return scale(a, s);
}

}  // namespace elite::diff

#endif  // ELITE_LAB_DIFFCORE_OPS_HPP
