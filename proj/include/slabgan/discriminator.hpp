#pragma once

#include <torch/torch.h>

#include <vector>

namespace slabgan::model {

struct DiscriminatorConfig {
    int n_down = 3;  // stride-2 blocks
    int base_channels = 64;
    int max_channels = 512;
    int in_channels = 6;  // source and candidate concatenated

    void validate() const;
    bool operator==(const DiscriminatorConfig&) const = default;
};

/// Kernel/stride/padding of one layer of the patch classifier.
struct ConvGeometry {
    int kernel;
    int stride;
    int padding;
};

/// n_down stride-2 4x4 convs, one stride-1 4x4 conv, a stride-1 4x4 head.
std::vector<ConvGeometry> discriminator_layers(const DiscriminatorConfig& config);

/// Receptive field of one output logit, in input pixels (70 for n_down = 3).
int receptive_field(const DiscriminatorConfig& config);

/// Logit-map edge length for an S x S input (30 for S = 256, n_down = 3).
int patch_grid_size(int input_size, const DiscriminatorConfig& config);

/// Conditional patch classifier over (source, candidate) pairs. Instance
/// normalization in hidden blocks only; LeakyReLU(0.2) everywhere but the head.
class PatchDiscriminatorImpl : public torch::nn::Module {
public:
    explicit PatchDiscriminatorImpl(DiscriminatorConfig config = {});

    /// (B, 3, S, S) x2 -> (B, 1, h, w) logits. Throws ShapeError on mismatched inputs.
    torch::Tensor forward(const torch::Tensor& source, const torch::Tensor& candidate);

    const DiscriminatorConfig& config() const { return config_; }

private:
    DiscriminatorConfig config_;
    torch::nn::Sequential body_;
};
TORCH_MODULE(PatchDiscriminator);

}  // namespace slabgan::model
