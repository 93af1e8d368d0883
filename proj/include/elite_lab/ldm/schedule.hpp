#ifndef ELITE_LAB_LDM_SCHEDULE_HPP
#define ELITE_LAB_LDM_SCHEDULE_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "elite_lab/diffcore/ops.hpp"

namespace elite::ldm {

using diff::Tensor;

// Cumulative signal fractions alpha_bar[t-1] for t = 1..T.
class NoiseSchedule {
public:
    explicit NoiseSchedule(std::vector<double> alpha_bar) : alpha_bar_(std::move(alpha_bar)) {
        if (alpha_bar_.empty()) throw ConfigError("noise schedule needs at least one step");
        for (std::size_t i = 0; i < alpha_bar_.size(); ++i) {
            if (!(alpha_bar_[i] > 0.0 && alpha_bar_[i] <= 1.0))
                throw ConfigError("alpha_bar must lie in (0, 1]");
            if (i > 0 && !(alpha_bar_[i] < alpha_bar_[i - 1]))
                throw ConfigError("alpha_bar must be strictly decreasing");
        }
    }

    // Cosine schedule with offset s = 0.008 and per-step beta capped at 0.999.
    static NoiseSchedule cosine(std::size_t steps = 1000) {
        constexpr double s = 0.008;
        auto f = [&](double t) {
            const double v = std::cos((t / static_cast<double>(steps) + s) / (1.0 + s) * std::numbers::pi / 2.0);
            return v * v;
        };
        std::vector<double> ab;
        ab.reserve(steps);
        double prod = 1.0;
        for (std::size_t t = 1; t <= steps; ++t) {
            const double beta = std::min(1.0 - f(static_cast<double>(t)) / f(static_cast<double>(t - 1)), 0.999);
            prod *= 1.0 - beta;
            ab.push_back(prod);
        }
        return NoiseSchedule(std::move(ab));
    }

    std::size_t steps() const { return alpha_bar_.size(); }

    double alpha_bar(std::size_t t) const {
        if (t < 1 || t > steps())
            throw ContractError("timestep " + std::to_string(t) + " outside 1.." + std::to_string(steps()));
        return alpha_bar_[t - 1];
    }

    const std::vector<double>& values() const { return alpha_bar_; }

private:
    std::vector<double> alpha_bar_;
};

// sqrt(ab)·z0 + sqrt(1-ab)·eps for an explicit signal fraction ab in [0,1].
template <class T>
Tensor<T> mix_noise(const Tensor<T>& z0, double alpha_bar, const Tensor<T>& eps) {
    if (z0.shape() != eps.shape()) throw ShapeError("add_noise: noise shape differs from the latent");
    if (alpha_bar < 0.0 || alpha_bar > 1.0) throw ContractError("add_noise: alpha_bar outside [0, 1]");
    const T a = static_cast<T>(std::sqrt(alpha_bar)), b = static_cast<T>(std::sqrt(1.0 - alpha_bar));
    return diff::add(diff::scale(z0, a), diff::scale(eps, b));
}

template <class T>
Tensor<T> add_noise(const Tensor<T>& z0, std::size_t t, const Tensor<T>& eps, const NoiseSchedule& schedule) {
    return mix_noise(z0, schedule.alpha_bar(t), eps);
}

}  // namespace elite::ldm

#endif  // ELITE_LAB_LDM_SCHEDULE_HPP
