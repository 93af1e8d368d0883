#ifndef ELITE_LAB_LOCALMAP_ATTENTION_HPP
#define ELITE_LAB_LOCALMAP_ATTENTION_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "elite_lab/image.hpp"
#include "elite_lab/ldm/attention.hpp"

namespace elite::localmap {

using diff::Tensor;

// Patch-level textual features e [p*p, d_ctx] with the object mask at the
// same p×p resolution (entries exactly 0 or 1).
template <class T>
struct LocalFeatureMap {
    Tensor<T> grid;
    Tensor<T> mask;  // [p*p]
    std::size_t side = 0;

    // e·m: masked-out patches become zero rows.
    Tensor<T> masked() const { return diff::mul_rows(grid, mask); }
};

// Area-threshold downsampling: a cell is foreground when at least half of
// its pixels are.
template <class T>
Tensor<T> downsample_mask(const Mask& m, std::size_t side) {
    if (side == 0 || m.height % side || m.width % side) throw ShapeError("downsample_mask: extent not divisible");
    const std::size_t ch = m.height / side, cw = m.width / side;
    std::vector<T> d(side * side);
    for (std::size_t gy = 0; gy < side; ++gy)
        for (std::size_t gx = 0; gx < side; ++gx) {
            std::size_t on = 0;
            for (std::size_t y = 0; y < ch; ++y)
                for (std::size_t x = 0; x < cw; ++x) on += m.at(gy * ch + y, gx * cw + x);
            d[gy * side + gx] = (2 * on >= ch * cw) ? T(1) : T(0);
        }
    return Tensor<T>({side * side}, std::move(d));
}

template <class T>
struct LocalAttention {
    Tensor<T> map;     // A^l [queries, p*p]
    Tensor<T> values;  // V^l [p*p, d']
    Tensor<T> out;     // A^l V^l
};

// Keys/values from the masked local grid through bias-free projections,
// attended by precomputed queries.
template <class T>
LocalAttention<T> local_attend(const Tensor<T>& q, const LocalFeatureMap<T>& local, const Tensor<T>& wk,
                               const Tensor<T>& wv) {
    if (!local.grid.defined() || local.grid.numel() == 0) throw ShapeError("local_attention: empty local grid");
    if (local.grid.cols() != wk.rows() || local.grid.cols() != wv.rows() || q.cols() != wk.cols())
        throw ShapeError("local_attention: projection shapes do not match the inputs");
    auto em = local.masked();
    auto k = diff::matmul(em, wk);
    auto v = diff::matmul(em, wv);
    auto a = diff::attention_map(q, k);
    return {a, v, diff::matmul(a, v)};
}

template <class T>
LocalAttention<T> local_attention(const Tensor<T>& f, const LocalFeatureMap<T>& local, const Tensor<T>& wq,
                                  const Tensor<T>& wk, const Tensor<T>& wv) {
    if (f.cols() != wq.rows()) throw ShapeError("local_attention: query projection does not match the tokens");
    return local_attend(diff::matmul(f, wq), local, wk, wv);
}

// A^l'[q,:] = A^l[q,:] · A^g[q,w0] / max_q A^g[q,w0]. Rows are not
// renormalized.
template <class T>
Tensor<T> reweight_attention(const Tensor<T>& local_map, const Tensor<T>& global_map, std::size_t w0_position) {
    if (local_map.rows() != global_map.rows())
        throw ShapeError("reweight_attention: query counts differ");
    if (w0_position >= global_map.cols())
        throw ShapeError("reweight_attention: w0 position " + std::to_string(w0_position) + " outside the map");
    auto col = diff::column(global_map, w0_position);
    return diff::mul_rows(local_map, diff::divide_by_max(col));
}

// Same scaling with an externally supplied w0 column (one entry per query).
template <class T>
Tensor<T> reweight_with_column(const Tensor<T>& local_map, const Tensor<T>& column) {
    if (column.numel() != local_map.rows()) throw ShapeError("reweight_attention: column length differs from queries");
    return diff::mul_rows(local_map, diff::divide_by_max(column));
}

// out_global + lambda·out_local.
template <class T>
Tensor<T> fuse(const Tensor<T>& out_global, const Tensor<T>& out_local, double lambda) {
    if (lambda < 0) throw ConfigError("fusion weight lambda must be non-negative");
    if (out_global.shape() != out_local.shape()) throw ShapeError("fuse: shape mismatch");
    if (lambda == 0) return out_global;
    return diff::add(out_global, diff::scale(out_local, static_cast<T>(lambda)));
}

}  // namespace elite::localmap

#endif  // ELITE_LAB_LOCALMAP_ATTENTION_HPP
