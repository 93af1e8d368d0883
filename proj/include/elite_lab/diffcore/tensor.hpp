#ifndef ELITE_LAB_DIFFCORE_TENSOR_HPP
#define ELITE_LAB_DIFFCORE_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "elite_lab/errors.hpp"

namespace elite::diff {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

// Graph recording is on by default; NoGradGuard switches it off for the
// lifetime of the guard on the current thread.
class GradMode {
public:
    static bool enabled() { return flag(); }
    static void set(bool on) { flag() = on; }

private:
    static bool& flag() {
        thread_local bool on = true;
        return on;
    }
};

class NoGradGuard {
public:
    NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
    ~NoGradGuard() { GradMode::set(prev_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <class T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void()> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), T(0));
    }
};

// Dense row-major tensor handle. Copies share storage (like a parameter
// reference); use clone() for a deep copy.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape) : impl_(std::make_shared<TensorImpl<T>>()) {
        for (auto e : shape)
            if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
        impl_->data.assign(shape_numel(shape), T(0));
        impl_->shape = std::move(shape);
    }

    Tensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<TensorImpl<T>>()) {
        for (auto e : shape)
            if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
        if (shape_numel(shape) != data.size())
            throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_str(shape));
        impl_->shape = std::move(shape);
        impl_->data = std::move(data);
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
        return t;
    }

    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    template <class Rng>
    static Tensor randn(Shape shape, Rng& rng, T stddev = T(1)) {
        Tensor t(std::move(shape));
        std::normal_distribution<double> nd(0.0, 1.0);
        for (auto& v : t.impl_->data) v = static_cast<T>(nd(rng) * static_cast<double>(stddev));
        return t;
    }

    template <class Rng>
    static Tensor uniform(Shape shape, Rng& rng, T lo, T hi) {
        Tensor t(std::move(shape));
        std::uniform_real_distribution<double> ud(static_cast<double>(lo), static_cast<double>(hi));
        for (auto& v : t.impl_->data) v = static_cast<T>(ud(rng));
        return t;
    }

    bool defined() const { return static_cast<bool>(impl_); }
    const Shape& shape() const { return impl_->shape; }
    std::size_t dim() const { return impl_->shape.size(); }
    std::size_t extent(std::size_t i) const { return impl_->shape.at(i); }
    std::size_t numel() const { return impl_->data.size(); }

    // 2-D helpers: a 1-D tensor of length n counts as a 1×n row.
    std::size_t rows() const { return dim() == 1 ? 1 : impl_->shape[0]; }
    std::size_t cols() const { return impl_->shape.back(); }

    std::span<T> data() { return impl_->data; }
    std::span<const T> data() const { return impl_->data; }
    std::vector<T> to_vector() const { return impl_->data; }

    T& operator[](std::size_t i) { return impl_->data[i]; }
    T operator[](std::size_t i) const { return impl_->data[i]; }
    T at(std::size_t r, std::size_t c) const { return impl_->data[r * cols() + c]; }

    T item() const {
        if (numel() != 1) throw ShapeError("item() needs a single-element tensor, got " + shape_str(shape()));
        return impl_->data[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool on = true) {
        impl_->requires_grad = on;
        return *this;
    }

    bool has_grad() const { return !impl_->grad.empty(); }

    // Gradient view; zeros when nothing was accumulated.
    std::span<T> grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    std::vector<T> grad_vector() const {
        return impl_->grad.empty() ? std::vector<T>(numel(), T(0)) : impl_->grad;
    }
    void zero_grad() { impl_->grad.clear(); }

    Tensor clone() const {
        Tensor t(impl_->shape, impl_->data);
        return t;
    }

    // Drops graph history, keeping the same values in a fresh leaf.
    Tensor detach() const { return clone(); }

    void assign(std::span<const T> values) {
        if (values.size() != numel()) throw ShapeError("assign: length mismatch");
        std::copy(values.begin(), values.end(), impl_->data.begin());
    }

    bool all_finite() const {
        return std::all_of(impl_->data.begin(), impl_->data.end(), [](T v) { return std::isfinite(v); });
    }

    TensorImpl<T>* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl<T>>& impl_ptr() const { return impl_; }

    bool same(const Tensor& o) const { return impl_ == o.impl_; }

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

// Builds the result node of an op. Graph edges are recorded only when
// grad mode is on and some input requires a gradient.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, std::initializer_list<Tensor<T>> inputs) {
    Tensor<T> out(std::move(shape), std::move(data));
    if (!GradMode::enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.set_requires_grad(true);
    for (const auto& in : inputs) out.impl()->inputs.push_back(in.impl_ptr());
    return out;
}

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> data, const std::vector<Tensor<T>>& inputs) {
    Tensor<T> out(std::move(shape), std::move(data));
    if (!GradMode::enabled()) return out;
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return out;
    out.set_requires_grad(true);
    for (const auto& in : inputs) out.impl()->inputs.push_back(in.impl_ptr());
    return out;
}

// Reverse-mode accumulation from a scalar output into every reachable
// tensor that requires a gradient.
template <class T>
void backward(const Tensor<T>& output) {
    if (output.numel() != 1)
        throw ContractError("backward() needs a scalar output, got shape " + shape_str(output.shape()));
    if (!output.requires_grad()) return;

    std::vector<TensorImpl<T>*> order;
    std::unordered_set<TensorImpl<T>*> seen;
    std::vector<std::pair<TensorImpl<T>*, std::size_t>> stack;
    stack.emplace_back(output.impl(), 0);
    seen.insert(output.impl());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            TensorImpl<T>* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    output.impl()->ensure_grad();
    output.impl()->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorImpl<T>* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn();
    }
}

}  // namespace elite::diff

#endif  // ELITE_LAB_DIFFCORE_TENSOR_HPP
