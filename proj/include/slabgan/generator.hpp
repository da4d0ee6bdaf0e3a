#pragma once

#include <torch/torch.h>

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "slabgan/errors.hpp"

namespace slabgan::model {

enum class EncoderKind { PlainResidual, SeResidual };
enum class DecoderKind { UNet, UNetPlusPlus };
/// Which same-level predecessors a U-Net++ node concatenates.
enum class SkipDensity { Dense, PreviousOnly };
enum class UpsampleMode { Transposed, Bilinear };

std::string to_string(EncoderKind k);
std::string to_string(DecoderKind k);
std::string to_string(SkipDensity k);
std::string to_string(UpsampleMode k);
EncoderKind parse_encoder(std::string_view s);
DecoderKind parse_decoder(std::string_view s);
SkipDensity parse_skip_density(std::string_view s);
UpsampleMode parse_upsample(std::string_view s);

struct GeneratorConfig {
    EncoderKind encoder = EncoderKind::SeResidual;
    DecoderKind decoder = DecoderKind::UNetPlusPlus;
    int depth = 4;  // number of downsamplings; levels 0..depth
    int base_channels = 64;
    int max_channels = 512;
    int se_reduction = 16;
    SkipDensity skip_density = SkipDensity::Dense;
    UpsampleMode upsample = UpsampleMode::Transposed;
    int in_channels = 3;
    int out_channels = 3;

    /// min(base * 2^level, max_channels)
    int channels(int level) const;
    /// SE bottleneck width: ceil(channels / r), at least one unit.
    int se_hidden(int channels) const;
    void validate() const;

    bool operator==(const GeneratorConfig&) const = default;
};

/// Grid position X_{level, column}. Column 0 is the encoder backbone.
struct FusionNodeId {
    int level = 0;
    int column = 0;

    auto operator<=>(const FusionNodeId&) const = default;
    /// Module-name form, e.g. "x0_4".
    std::string name() const;
    /// Display form, e.g. "x_{0,4}".
    std::string label() const;
    /// Parses "x0_4", "x0,4" or "x_{0,4}".
    static FusionNodeId parse(std::string_view text);
};

/// Decoder nodes (column >= 1) that exist for the configuration:
/// every (i, j) with i + j <= depth for U-Net++, only i + j == depth for U-Net.
/// Sorted by column, then level descending (evaluation order).
std::vector<FusionNodeId> fusion_nodes(const GeneratorConfig& config);

bool node_exists(const FusionNodeId& id, const GeneratorConfig& config);

struct NodeInputs {
    std::vector<FusionNodeId> same_level;  // concatenated as-is
    FusionNodeId below;                    // upsampled by 2 before concatenation
};

/// Predecessors consumed by a decoder node. Throws TopologyError for encoder
/// or nonexistent nodes.
NodeInputs node_inputs(const FusionNodeId& id, const GeneratorConfig& config);

// ---------------------------------------------------------------------------
// Squeeze-and-excitation
// ---------------------------------------------------------------------------

/// Bottleneck weights: squeeze (hidden x C) + bias, excite (C x hidden) + bias.
struct SEBlockParams {
    torch::Tensor squeeze_weight;
    torch::Tensor squeeze_bias;
    torch::Tensor excite_weight;
    torch::Tensor excite_bias;
};

/// Per-channel gates sigmoid(W2 relu(W1 gap(x) + b1) + b2), shape (B, C).
torch::Tensor se_gates(const torch::Tensor& x, const SEBlockParams& params);

/// x scaled channel-wise by se_gates. Throws ConfigError on a channel mismatch.
torch::Tensor se_recalibrate(const torch::Tensor& x, const SEBlockParams& params);

class SqueezeExcitationImpl : public torch::nn::Module {
public:
    SqueezeExcitationImpl(int channels, int hidden);
    torch::Tensor forward(const torch::Tensor& x);
    SEBlockParams params() const;

    torch::nn::Linear squeeze{nullptr};
    torch::nn::Linear excite{nullptr};
};
TORCH_MODULE(SqueezeExcitation);

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

/// conv3x3(stride) -> IN -> LeakyReLU -> conv3x3 -> IN, plus identity or 1x1
/// projection shortcut, optional SE on the sum, final LeakyReLU(0.2).
class ResidualBlockImpl : public torch::nn::Module {
public:
    ResidualBlockImpl(int in_channels, int out_channels, int stride, bool use_se, int se_hidden);
    torch::Tensor forward(const torch::Tensor& x);
    /// Sum of residual path and shortcut, before SE and the final activation.
    torch::Tensor pre_activation(const torch::Tensor& x);

    torch::nn::Conv2d conv1{nullptr};
    torch::nn::InstanceNorm2d norm1{nullptr};
    torch::nn::Conv2d conv2{nullptr};
    torch::nn::InstanceNorm2d norm2{nullptr};
    torch::nn::Conv2d projection{nullptr};  // null for identity shortcut
    SqueezeExcitation se{nullptr};          // null for plain residual
};
TORCH_MODULE(ResidualBlock);

/// H([same-level inputs..., U(below)]) with H = two conv3x3-IN-ReLU units.
class FusionNodeImpl : public torch::nn::Module {
public:
    FusionNodeImpl(int same_level_channels, int below_channels, int out_channels, UpsampleMode mode);
    torch::Tensor forward(const std::vector<torch::Tensor>& same_level, const torch::Tensor& below);
    torch::Tensor upsample(const torch::Tensor& below);

    torch::nn::ConvTranspose2d up_transposed{nullptr};
    torch::nn::Conv2d up_project{nullptr};  // 1x1 after bilinear upsampling
    torch::nn::Conv2d conv1{nullptr};
    torch::nn::InstanceNorm2d norm1{nullptr};
    torch::nn::Conv2d conv2{nullptr};
    torch::nn::InstanceNorm2d norm2{nullptr};
};
TORCH_MODULE(FusionNode);

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

class GeneratorImpl : public torch::nn::Module {
public:
    explicit GeneratorImpl(GeneratorConfig config);

    /// (B, in, S, S) -> (B, out, S, S) in (-1, 1).
    torch::Tensor forward(const torch::Tensor& x);

    /// Backbone features X_{0,0} .. X_{depth,0}.
    std::vector<torch::Tensor> encode(const torch::Tensor& x);

    /// Every node of the topology, encoder and decoder.
    std::map<FusionNodeId, torch::Tensor> forward_nodes(const torch::Tensor& x);

    const GeneratorConfig& config() const { return config_; }

    /// Throws ConfigError unless x is (B, in_channels, S, S') with both sides divisible by 2^depth.
    void check_input(const torch::Tensor& x) const;

private:
    torch::Tensor decode(std::map<FusionNodeId, torch::Tensor>& nodes);

    GeneratorConfig config_;
    std::vector<ResidualBlock> encoder_;
    std::map<FusionNodeId, FusionNode> decoder_;
    torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Generator);

/// Channel-averaged (B, H, W) maps for the requested nodes. Throws
/// TopologyError when a node is absent from the configured topology.
std::map<FusionNodeId, torch::Tensor> dump_feature_maps(Generator& generator, const torch::Tensor& x,
                                                        const std::vector<FusionNodeId>& nodes);

std::int64_t count_parameters(const torch::nn::Module& module);

/// Closed-form parameter count of all SE blocks in the encoder.
std::int64_t se_parameter_count(const GeneratorConfig& config);

}  // namespace slabgan::model
