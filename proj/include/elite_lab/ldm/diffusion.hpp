#ifndef ELITE_LAB_LDM_DIFFUSION_HPP
#define ELITE_LAB_LDM_DIFFUSION_HPP

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "elite_lab/ldm/schedule.hpp"
#include "elite_lab/ldm/unet.hpp"

namespace elite::ldm {

using diff::Tensor;

// E‖eps − eps_theta(z_t, t)‖² over a batch, with t ~ U{1..T} and
// eps ~ N(0, I) drawn per item in order. `denoise(z_t, t, item)` returns the
// predicted noise.
template <class T, class Rng, class Denoise>
Tensor<T> ldm_loss(const std::vector<Tensor<T>>& z0, Rng& rng, const NoiseSchedule& schedule, Denoise&& denoise) {
    if (z0.empty()) throw ContractError("ldm_loss: empty batch");
    std::uniform_int_distribution<std::size_t> pick_t(1, schedule.steps());
    Tensor<T> total;
    for (std::size_t i = 0; i < z0.size(); ++i) {
        const std::size_t t = pick_t(rng);
        auto eps = Tensor<T>::randn(z0[i].shape(), rng);
        auto zt = add_noise(z0[i], t, eps, schedule);
        auto err = diff::mse(denoise(zt, t, i), eps);
        total = total.defined() ? diff::add(total, err) : err;
    }
    return diff::scale(total, T(1) / static_cast<T>(z0.size()));
}

// eps_u + s·(eps_c − eps_u); exactly eps_c when s = 1.
template <class T>
Tensor<T> guide(const Tensor<T>& eps_uncond, const Tensor<T>& eps_cond, double scale) {
    if (scale == 1.0) return eps_cond;
    return diff::add(eps_uncond, diff::scale(diff::sub(eps_cond, eps_uncond), static_cast<T>(scale)));
}

struct SamplerConfig {
    std::size_t steps = 50;
    double guidance_scale = 5.0;
    double clip_x0 = 4.0;  // bound on predicted clean latents; 0 disables
};

// Evenly spaced descending timesteps from T.
inline std::vector<std::size_t> sampling_timesteps(std::size_t total, std::size_t steps) {
    if (steps < 1) throw ContractError("sampler needs at least one step");
    if (steps > total) throw ContractError("sampler steps exceed the schedule length");
    std::vector<std::size_t> ts;
    for (std::size_t i = 0; i < steps; ++i) ts.push_back(total - (i * total) / steps);
    return ts;
}

// Deterministic DDIM sampling with classifier-free guidance. The initial
// latent is drawn from `rng`; everything after is deterministic.
template <class T, class Rng>
Tensor<T> sample(const UNet<T>& unet, const NoiseSchedule& schedule, const Condition<T>& cond,
                 const Condition<T>& uncond, const SamplerConfig& cfg, Rng& rng,
                 AttentionCapture<T>* capture = nullptr) {
    diff::NoGradGuard no_grad;
    const auto ts = sampling_timesteps(schedule.steps(), cfg.steps);
    const std::size_t s = unet.config.side;
    auto z = Tensor<T>::randn({s * s, unet.config.latent_channels}, rng);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const std::size_t t = ts[i];
        const double ab = schedule.alpha_bar(t);
        const double ab_prev = i + 1 < ts.size() ? schedule.alpha_bar(ts[i + 1]) : 1.0;
        auto eps_c = unet(z, t, cond, capture);
        auto eps = cfg.guidance_scale == 1.0 ? eps_c : guide(unet(z, t, uncond), eps_c, cfg.guidance_scale);
        std::vector<T> next(z.numel());
        const double sa = std::sqrt(ab), sn = std::sqrt(1.0 - ab);
        const double sa_prev = std::sqrt(ab_prev), sn_prev = std::sqrt(1.0 - ab_prev);
        for (std::size_t k = 0; k < next.size(); ++k) {
            double x0 = (static_cast<double>(z[k]) - sn * static_cast<double>(eps[k])) / sa;
            if (cfg.clip_x0 > 0) x0 = std::clamp(x0, -cfg.clip_x0, cfg.clip_x0);
            next[k] = static_cast<T>(sa_prev * x0 + sn_prev * static_cast<double>(eps[k]));
        }
        z = Tensor<T>(z.shape(), std::move(next));
        if (!z.all_finite()) throw NumericError("sampler produced non-finite latents");
    }
    return z;
}

}  // namespace elite::ldm

#endif  // ELITE_LAB_LDM_DIFFUSION_HPP
