#pragma once

#include <torch/torch.h>

#include <string>
#include <string_view>

#include "slabgan/discriminator.hpp"
#include "slabgan/metrics.hpp"

namespace slabgan::objectives {

struct LossWeights {
    double lambda1 = 100.0;  // L1
    double lambda2 = 100.0;  // MS-SSIM
    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

enum class GanMode { Bce, LeastSquares };
std::string to_string(GanMode mode);
GanMode parse_gan_mode(std::string_view s);

/// Mean absolute difference over all elements.
torch::Tensor l1_loss(const torch::Tensor& generated, const torch::Tensor& target);

/// Differentiable MS-SSIM of two (N, C, H, W) tensors, averaged over N and C.
/// Follows metrics::ms_ssim exactly, except that per-scale terms are floored
/// at 1e-8 instead of 0 so the fractional power keeps a finite gradient.
/// `scales` = 0 picks the largest feasible count.
torch::Tensor ms_ssim(const torch::Tensor& a, const torch::Tensor& b, const metrics::SsimParams& params, int scales = 0);

/// 1 - MS-SSIM of model-space tensors mapped to [0, 1] by (x + 1) / 2 with
/// data range 1. Uses all five scales when the image admits them, fewer otherwise.
torch::Tensor ms_ssim_loss(const torch::Tensor& generated, const torch::Tensor& target, int scales = 0);

/// Loss of `logits` against an all-real or all-fake label map, mean over the map.
torch::Tensor gan_criterion(const torch::Tensor& logits, bool real, GanMode mode = GanMode::Bce);

/// 0.5 [crit(D(s, t), real) + crit(D(s, g.detach()), fake)]
torch::Tensor discriminator_loss(model::PatchDiscriminator& disc, const torch::Tensor& source,
                                 const torch::Tensor& target, const torch::Tensor& generated,
                                 GanMode mode = GanMode::Bce);

/// crit(D(s, g), real); gradients flow into `generated`.
torch::Tensor generator_adversarial_loss(model::PatchDiscriminator& disc, const torch::Tensor& source,
                                         const torch::Tensor& generated, GanMode mode = GanMode::Bce);

struct AdversarialLosses {
    torch::Tensor generator;
    torch::Tensor discriminator;
};

AdversarialLosses adversarial_losses(model::PatchDiscriminator& disc, const torch::Tensor& source,
                                     const torch::Tensor& target, const torch::Tensor& generated,
                                     GanMode mode = GanMode::Bce);

struct LossBreakdown {
    torch::Tensor adv;
    torch::Tensor l1;
    torch::Tensor ms_ssim_loss;
    torch::Tensor total;  // adv + lambda1 * l1 + lambda2 * ms_ssim_loss, in the graph
};

/// Throws DivergenceError naming the first non-finite component.
LossBreakdown total_generator_loss(torch::Tensor adv, torch::Tensor l1, torch::Tensor ms_ssim_loss,
                                   const LossWeights& weights);

}  // namespace slabgan::objectives
