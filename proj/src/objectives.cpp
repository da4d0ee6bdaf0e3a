#include "slabgan/objectives.hpp"

#include <fmt/format.h>

#include <cmath>

#include "slabgan/errors.hpp"

namespace slabgan::objectives {

namespace F = torch::nn::functional;

void LossWeights::validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw ConfigError("loss weights must be >= 0");
}

std::string to_string(GanMode mode) { return mode == GanMode::Bce ? "bce" : "lsgan"; }

GanMode parse_gan_mode(std::string_view s) {
    if (s == "bce") return GanMode::Bce;
    if (s == "lsgan") return GanMode::LeastSquares;
    throw ConfigError(fmt::format("unknown GAN mode '{}' (bce | lsgan)", s));
}

torch::Tensor l1_loss(const torch::Tensor& generated, const torch::Tensor& target) {
    if (!generated.sizes().equals(target.sizes())) {
        throw ShapeError(c10::str("l1_loss: shape mismatch ", generated.sizes(), " vs ", target.sizes()));
    }
    return (generated - target).abs().mean();
}

namespace {

struct SsimMaps {
    torch::Tensor ssim;  // (N, C)
    torch::Tensor cs;
};

SsimMaps ssim_terms(const torch::Tensor& x, const torch::Tensor& y, const torch::Tensor& taps, double c1, double c2) {
    const auto channels = x.size(1);
    const auto k = taps.size(0);
    auto wh = taps.view({1, 1, 1, k}).expand({channels, 1, 1, k});
    auto wv = taps.view({1, 1, k, 1}).expand({channels, 1, k, 1});
    auto filt = [&](const torch::Tensor& t) {
        auto o = F::conv2d(t, wh, F::Conv2dFuncOptions().groups(channels));
        return F::conv2d(o, wv, F::Conv2dFuncOptions().groups(channels));
    };
    auto mx = filt(x);
    auto my = filt(y);
    auto vx = filt(x * x) - mx * mx;
    auto vy = filt(y * y) - my * my;
    auto cov = filt(x * y) - mx * my;
    auto cs = (2.0 * cov + c2) / (vx + vy + c2);
    auto lum = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
    return {(lum * cs).mean({2, 3}), cs.mean({2, 3})};
}

}  // namespace

torch::Tensor ms_ssim(const torch::Tensor& a, const torch::Tensor& b, const metrics::SsimParams& params, int scales) {
    if (!a.sizes().equals(b.sizes()) || a.dim() != 4) {
        throw ShapeError(c10::str("ms_ssim expects two equal (N, C, H, W) tensors, got ", a.sizes(), " and ", b.sizes()));
    }
    const int size = static_cast<int>(std::min(a.size(2), a.size(3)));
    const int feasible = metrics::max_scales(size, params.window);
    if (scales == 0) scales = feasible;
    if (scales < 1 || scales > feasible) {
        throw ConfigError(fmt::format("ms_ssim: {} scales do not fit a {}x{} image with a {}-tap window; "
                                      "at most {} scales are feasible",
                                      scales, a.size(2), a.size(3), params.window, feasible));
    }
    const auto weights = params.scale_weights(scales);
    const auto taps_vec = params.gaussian_taps();
    auto taps = torch::tensor(taps_vec, torch::TensorOptions().dtype(torch::kFloat64)).to(a.options());
    const double c1 = std::pow(params.k1 * params.data_range, 2);
    const double c2 = std::pow(params.k2 * params.data_range, 2);

    torch::Tensor x = a, y = b;
    torch::Tensor acc;
    for (int s = 0; s < scales; ++s) {
        const auto t = ssim_terms(x, y, taps, c1, c2);
        const bool last = s + 1 == scales;
        auto term = (last ? t.ssim : t.cs).clamp_min(1e-8).pow(weights[s]);
        acc = acc.defined() ? acc * term : term;
        if (!last) {
            x = F::avg_pool2d(x, F::AvgPool2dFuncOptions(2).stride(2));
            y = F::avg_pool2d(y, F::AvgPool2dFuncOptions(2).stride(2));
        }
    }
    return acc.mean();
}

torch::Tensor ms_ssim_loss(const torch::Tensor& generated, const torch::Tensor& target, int scales) {
    metrics::SsimParams params;
    params.data_range = 1.0;
    return 1.0 - ms_ssim((generated + 1.0) * 0.5, (target + 1.0) * 0.5, params, scales);
}

torch::Tensor gan_criterion(const torch::Tensor& logits, bool real, GanMode mode) {
    auto label = real ? torch::ones_like(logits) : torch::zeros_like(logits);
    if (mode == GanMode::LeastSquares) return F::mse_loss(logits, label);
    return F::binary_cross_entropy_with_logits(logits, label);
}

torch::Tensor discriminator_loss(model::PatchDiscriminator& disc, const torch::Tensor& source,
                                 const torch::Tensor& target, const torch::Tensor& generated, GanMode mode) {
    auto real = gan_criterion(disc(source, target), true, mode);
    auto fake = gan_criterion(disc(source, generated.detach()), false, mode);
    return 0.5 * (real + fake);
}

torch::Tensor generator_adversarial_loss(model::PatchDiscriminator& disc, const torch::Tensor& source,
                                         const torch::Tensor& generated, GanMode mode) {
    return gan_criterion(disc(source, generated), true, mode);
}

AdversarialLosses adversarial_losses(model::PatchDiscriminator& disc, const torch::Tensor& source,
                                     const torch::Tensor& target, const torch::Tensor& generated, GanMode mode) {
    if (!source.sizes().equals(target.sizes()) || !source.sizes().equals(generated.sizes())) {
        throw ShapeError("adversarial_losses: source, target and generated must share a shape");
    }
    return {generator_adversarial_loss(disc, source, generated, mode),
            discriminator_loss(disc, source, target, generated, mode)};
}

LossBreakdown total_generator_loss(torch::Tensor adv, torch::Tensor l1, torch::Tensor ms_ssim_loss,
                                   const LossWeights& weights) {
    weights.validate();
    const std::pair<const char*, const torch::Tensor*> parts[] = {{"adv", &adv}, {"l1", &l1}, {"ms_ssim_loss", &ms_ssim_loss}};
    for (const auto& [name, t] : parts) {
        const double v = t->item<double>();
        if (!std::isfinite(v)) throw DivergenceError(name, -1, fmt::format("value {}", v));
    }
    auto total = adv + weights.lambda1 * l1 + weights.lambda2 * ms_ssim_loss;
    return {std::move(adv), std::move(l1), std::move(ms_ssim_loss), std::move(total)};
}

}  // namespace slabgan::objectives
