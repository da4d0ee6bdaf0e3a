#include "slabgan/discriminator.hpp"

#include <fmt/format.h>

#include "slabgan/errors.hpp"

namespace slabgan::model {

void DiscriminatorConfig::validate() const {
    if (n_down < 1) throw ConfigError("discriminator n_down must be >= 1");
    if (base_channels < 1) throw ConfigError("discriminator base_channels must be >= 1");
    if (in_channels < 1) throw ConfigError("discriminator in_channels must be >= 1");
}

std::vector<ConvGeometry> discriminator_layers(const DiscriminatorConfig& config) {
    std::vector<ConvGeometry> layers(static_cast<std::size_t>(config.n_down), {4, 2, 1});
    layers.push_back({4, 1, 1});
    layers.push_back({4, 1, 1});
    return layers;
}

int receptive_field(const DiscriminatorConfig& config) {
    const auto layers = discriminator_layers(config);
    int rf = 1;
    for (auto it = layers.rbegin(); it != layers.rend(); ++it) rf = (rf - 1) * it->stride + it->kernel;
    return rf;
}

int patch_grid_size(int input_size, const DiscriminatorConfig& config) {
    int s = input_size;
    for (const auto& l : discriminator_layers(config)) s = (s + 2 * l.padding - l.kernel) / l.stride + 1;
    return s;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(DiscriminatorConfig config) : config_(config) {
    config_.validate();
    namespace nn = torch::nn;
    auto width = [&](int k) { return std::min(config_.base_channels << std::min(k, 3), config_.max_channels); };
    auto lrelu = [] { return nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)); };

    const auto layers = discriminator_layers(config_);
    int in = config_.in_channels;
    for (std::size_t k = 0; k + 1 < layers.size(); ++k) {
        const auto& g = layers[k];
        const int out = width(static_cast<int>(k));
        const bool first = k == 0;
        body_->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, g.kernel).stride(g.stride).padding(g.padding).bias(first)));
        if (!first) body_->push_back(nn::InstanceNorm2d(nn::InstanceNorm2dOptions(out).affine(true)));
        body_->push_back(lrelu());
        in = out;
    }
    const auto& head = layers.back();
    body_->push_back(nn::Conv2d(nn::Conv2dOptions(in, 1, head.kernel).stride(head.stride).padding(head.padding)));
    register_module("body", body_);
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& source, const torch::Tensor& candidate) {
    if (!source.sizes().equals(candidate.sizes())) {
        throw ShapeError(c10::str("discriminator inputs differ in shape: ", source.sizes(), " vs ", candidate.sizes()));
    }
    if (source.dim() != 4 || source.size(1) + candidate.size(1) != config_.in_channels) {
        throw ShapeError(fmt::format("discriminator expects two (B, {}, S, S) tensors", config_.in_channels / 2));
    }
    return body_->forward(torch::cat({source, candidate}, 1));
}

}  // namespace slabgan::model
