#ifndef ELITE_LAB_DIFFCORE_OPTIM_HPP
#define ELITE_LAB_DIFFCORE_OPTIM_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "elite_lab/diffcore/tensor.hpp"

namespace elite::diff {

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <class T>
struct OptimizerState {
    AdamConfig config;
    std::vector<std::vector<T>> first_moment;
    std::vector<std::vector<T>> second_moment;
    std::size_t step_count = 0;
};

// One bias-corrected adaptive-moment update. Moments are created on the
// first call and must keep their shapes afterwards.
template <class T>
void adam_step(OptimizerState<T>& state, std::span<Tensor<T>> params, std::span<const std::vector<T>> grads) {
    if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient count mismatch");
    if (state.first_moment.empty()) {
        for (auto& p : params) {
            state.first_moment.emplace_back(p.numel(), T(0));
            state.second_moment.emplace_back(p.numel(), T(0));
        }
    }
    if (state.first_moment.size() != params.size()) throw ShapeError("adam_step: optimizer state size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i].numel() || state.first_moment[i].size() != params[i].numel())
            throw ShapeError("adam_step: gradient shape differs from parameter " + std::to_string(i));
    }

    const AdamConfig& c = state.config;
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(c.beta1, t);
    const double bc2 = 1.0 - std::pow(c.beta2, t);
    const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto data = params[i].data();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        const auto& g = grads[i];
        for (std::size_t k = 0; k < data.size(); ++k) {
            m[k] = b1 * m[k] + (T(1) - b1) * g[k];
            v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
            const double mhat = static_cast<double>(m[k]) / bc1;
            const double vhat = static_cast<double>(v[k]) / bc2;
            const double upd = c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
            data[k] = static_cast<T>(static_cast<double>(data[k]) - upd);
        }
    }
}

// Adam over a fixed parameter list, reading each tensor's grad slot.
template <class T>
class Adam {
public:
    Adam(std::vector<Tensor<T>> params, AdamConfig config) : params_(std::move(params)) {
        state_.config = config;
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    void step() {
        std::vector<std::vector<T>> grads;
        grads.reserve(params_.size());
        for (const auto& p : params_) grads.push_back(p.grad_vector());
        adam_step<T>(state_, params_, grads);
    }

    const OptimizerState<T>& state() const { return state_; }
    const std::vector<Tensor<T>>& params() const { return params_; }

private:
    std::vector<Tensor<T>> params_;
    OptimizerState<T> state_;
};

}  // namespace elite::diff

#endif  // ELITE_LAB_DIFFCORE_OPTIM_HPP
