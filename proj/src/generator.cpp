#include "slabgan/generator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <regex>

namespace slabgan::model {

namespace F = torch::nn::functional;

// ---------------------------------------------------------------------------
// Enum text forms
// ---------------------------------------------------------------------------

std::string to_string(EncoderKind k) { return k == EncoderKind::SeResidual ? "se_residual" : "plain_residual"; }
std::string to_string(DecoderKind k) { return k == DecoderKind::UNetPlusPlus ? "unetpp" : "unet"; }
std::string to_string(SkipDensity k) { return k == SkipDensity::Dense ? "dense" : "previous_only"; }
std::string to_string(UpsampleMode k) { return k == UpsampleMode::Transposed ? "transposed" : "bilinear"; }

EncoderKind parse_encoder(std::string_view s) {
    if (s == "se_residual") return EncoderKind::SeResidual;
    if (s == "plain_residual") return EncoderKind::PlainResidual;
    throw ConfigError(fmt::format("unknown encoder kind '{}' (se_residual | plain_residual)", s));
}

DecoderKind parse_decoder(std::string_view s) {
    if (s == "unetpp") return DecoderKind::UNetPlusPlus;
    if (s == "unet") return DecoderKind::UNet;
    throw ConfigError(fmt::format("unknown decoder kind '{}' (unetpp | unet)", s));
}

SkipDensity parse_skip_density(std::string_view s) {
    if (s == "dense") return SkipDensity::Dense;
    if (s == "previous_only") return SkipDensity::PreviousOnly;
    throw ConfigError(fmt::format("unknown skip density '{}' (dense | previous_only)", s));
}

UpsampleMode parse_upsample(std::string_view s) {
    if (s == "transposed") return UpsampleMode::Transposed;
    if (s == "bilinear") return UpsampleMode::Bilinear;
    throw ConfigError(fmt::format("unknown upsampling mode '{}' (transposed | bilinear)", s));
}

// ---------------------------------------------------------------------------
// Config and topology
// ---------------------------------------------------------------------------

int GeneratorConfig::channels(int level) const {
    long c = static_cast<long>(base_channels) << level;
    return static_cast<int>(std::min<long>(c, max_channels));
}

int GeneratorConfig::se_hidden(int c) const { return std::max(1, (c + se_reduction - 1) / se_reduction); }

void GeneratorConfig::validate() const {
    if (depth < 1) throw ConfigError("generator depth must be >= 1");
    if (depth > 8) throw ConfigError("generator depth must be <= 8");
    if (base_channels < 1) throw ConfigError("generator base_channels must be >= 1");
    if (max_channels < base_channels) throw ConfigError("generator max_channels must be >= base_channels");
    if (se_reduction < 1) throw ConfigError("SE reduction must be >= 1");
    if (in_channels < 1 || out_channels < 1) throw ConfigError("generator channel counts must be >= 1");
}

std::string FusionNodeId::name() const { return fmt::format("x{}_{}", level, column); }
std::string FusionNodeId::label() const { return fmt::format("x_{{{},{}}}", level, column); }

FusionNodeId FusionNodeId::parse(std::string_view text) {
    static const std::regex re(R"(^x_?\{?(\d+)[,_](\d+)\}?$)");
    std::cmatch m;
    if (!std::regex_match(text.begin(), text.end(), m, re)) {
        throw TopologyError(fmt::format("cannot parse node id '{}' (expected e.g. x0_4 or x_{{0,4}})", text));
    }
    return {std::stoi(m[1].str()), std::stoi(m[2].str())};
}

bool node_exists(const FusionNodeId& id, const GeneratorConfig& c) {
    if (id.level < 0 || id.column < 0 || id.level + id.column > c.depth) return false;
    if (id.column == 0) return true;
    return c.decoder == DecoderKind::UNetPlusPlus || id.level + id.column == c.depth;
}

std::vector<FusionNodeId> fusion_nodes(const GeneratorConfig& c) {
    std::vector<FusionNodeId> out;
    for (int j = 1; j <= c.depth; ++j)
        for (int i = c.depth - j; i >= 0; --i)
            if (node_exists({i, j}, c)) out.push_back({i, j});
    return out;
}

NodeInputs node_inputs(const FusionNodeId& id, const GeneratorConfig& c) {
    if (id.column == 0) throw TopologyError(id.label() + " is an encoder node and has no fusion inputs");
    if (!node_exists(id, c)) {
        throw TopologyError(fmt::format("{} does not exist for depth {} with a {} decoder", id.label(), c.depth,
                                        to_string(c.decoder)));
    }
    NodeInputs in;
    in.below = {id.level + 1, id.column - 1};
    if (c.decoder == DecoderKind::UNet) {
        in.same_level = {{id.level, 0}};
    } else if (c.skip_density == SkipDensity::PreviousOnly) {
        in.same_level = {{id.level, id.column - 1}};
    } else {
        for (int k = 0; k < id.column; ++k) in.same_level.push_back({id.level, k});
    }
    return in;
}

// ---------------------------------------------------------------------------
// SE
// ---------------------------------------------------------------------------

torch::Tensor se_gates(const torch::Tensor& x, const SEBlockParams& p) {
    if (x.dim() != 4) throw ShapeError("se_recalibrate expects a (B, C, H, W) tensor");
    const auto channels = x.size(1);
    if (p.squeeze_weight.size(1) != channels || p.excite_weight.size(0) != channels) {
        throw ConfigError(fmt::format("SE block expects {} channels, input has {}", p.squeeze_weight.size(1), channels));
    }
    auto pooled = x.mean({2, 3});
    auto hidden = torch::relu(torch::addmm(p.squeeze_bias, pooled, p.squeeze_weight.t()));
    return torch::sigmoid(torch::addmm(p.excite_bias, hidden, p.excite_weight.t()));
}

torch::Tensor se_recalibrate(const torch::Tensor& x, const SEBlockParams& p) {
    auto gates = se_gates(x, p);
    return x * gates.unsqueeze(-1).unsqueeze(-1);
}

SqueezeExcitationImpl::SqueezeExcitationImpl(int channels, int hidden)
    : squeeze(register_module("squeeze", torch::nn::Linear(channels, hidden))),
      excite(register_module("excite", torch::nn::Linear(hidden, channels))) {}

SEBlockParams SqueezeExcitationImpl::params() const {
    return {squeeze->weight, squeeze->bias, excite->weight, excite->bias};
}

torch::Tensor SqueezeExcitationImpl::forward(const torch::Tensor& x) { return se_recalibrate(x, params()); }

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

namespace {

torch::nn::Conv2d conv3x3(int in, int out, int stride = 1) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false));
}

torch::nn::InstanceNorm2d instance_norm(int channels) {
    return torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(channels).affine(true));
}

torch::Tensor leaky(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int in_channels, int out_channels, int stride, bool use_se, int se_hidden) {
    conv1 = register_module("conv1", conv3x3(in_channels, out_channels, stride));
    norm1 = register_module("norm1", instance_norm(out_channels));
    conv2 = register_module("conv2", conv3x3(out_channels, out_channels));
    norm2 = register_module("norm2", instance_norm(out_channels));
    if (in_channels != out_channels || stride != 1) {
        projection = register_module(
            "projection", torch::nn::Conv2d(torch::nn::Conv2dOptions(in_channels, out_channels, 1).stride(stride).bias(false)));
    }
    if (use_se) se = register_module("se", SqueezeExcitation(out_channels, se_hidden));
}

torch::Tensor ResidualBlockImpl::pre_activation(const torch::Tensor& x) {
    auto h = leaky(norm1(conv1(x)));
    h = norm2(conv2(h));
    return h + (projection ? projection(x) : x);
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
    auto h = pre_activation(x);
    if (se) h = se(h);
    return leaky(h);
}

FusionNodeImpl::FusionNodeImpl(int same_level_channels, int below_channels, int out_channels, UpsampleMode mode) {
    if (mode == UpsampleMode::Transposed) {
        up_transposed = register_module(
            "up", torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(below_channels, out_channels, 2).stride(2)));
    } else {
        up_project = register_module("up", torch::nn::Conv2d(torch::nn::Conv2dOptions(below_channels, out_channels, 1)));
    }
    conv1 = register_module("conv1", conv3x3(same_level_channels + out_channels, out_channels));
    norm1 = register_module("norm1", instance_norm(out_channels));
    conv2 = register_module("conv2", conv3x3(out_channels, out_channels));
    norm2 = register_module("norm2", instance_norm(out_channels));
}

torch::Tensor FusionNodeImpl::upsample(const torch::Tensor& below) {
    if (up_transposed) return up_transposed(below);
    auto up = F::interpolate(below, F::InterpolateFuncOptions()
                                        .scale_factor(std::vector<double>{2.0, 2.0})
                                        .mode(torch::kBilinear)
                                        .align_corners(false));
    return up_project(up);
}

torch::Tensor FusionNodeImpl::forward(const std::vector<torch::Tensor>& same_level, const torch::Tensor& below) {
    std::vector<torch::Tensor> parts = same_level;
    parts.push_back(upsample(below));
    auto h = torch::relu(norm1(conv1(torch::cat(parts, 1))));
    return torch::relu(norm2(conv2(h)));
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

GeneratorImpl::GeneratorImpl(GeneratorConfig config) : config_(std::move(config)) {
    config_.validate();
    const bool use_se = config_.encoder == EncoderKind::SeResidual;
    for (int i = 0; i <= config_.depth; ++i) {
        const int in = i == 0 ? config_.in_channels : config_.channels(i - 1);
        const int out = config_.channels(i);
        encoder_.push_back(register_module("enc_" + FusionNodeId{i, 0}.name(),
                                           ResidualBlock(in, out, i == 0 ? 1 : 2, use_se, config_.se_hidden(out))));
    }
    // Built before the decoder so that its initial values do not depend on the decoder kind.
    head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(config_.channels(0), config_.out_channels, 1)));
    for (const auto& id : fusion_nodes(config_)) {
        const auto inputs = node_inputs(id, config_);
        const int same = static_cast<int>(inputs.same_level.size()) * config_.channels(id.level);
        decoder_.emplace(id, register_module("dec_" + id.name(),
                                             FusionNode(same, config_.channels(id.level + 1), config_.channels(id.level),
                                                        config_.upsample)));
    }
}

void GeneratorImpl::check_input(const torch::Tensor& x) const {
    if (x.dim() != 4 || x.size(1) != config_.in_channels) {
        throw ConfigError(fmt::format("generator expects (B, {}, S, S) input", config_.in_channels));
    }
    const std::int64_t factor = std::int64_t{1} << config_.depth;
    if (x.size(2) % factor != 0 || x.size(3) % factor != 0) {
        throw ConfigError(fmt::format("input size {}x{} is not divisible by 2^{} = {}", x.size(2), x.size(3),
                                      config_.depth, factor));
    }
}

std::vector<torch::Tensor> GeneratorImpl::encode(const torch::Tensor& x) {
    check_input(x);
    std::vector<torch::Tensor> feats;
    torch::Tensor h = x;
    for (auto& block : encoder_) {
        h = block(h);
        feats.push_back(h);
    }
    return feats;
}

torch::Tensor GeneratorImpl::decode(std::map<FusionNodeId, torch::Tensor>& nodes) {
    for (const auto& id : fusion_nodes(config_)) {
        const auto inputs = node_inputs(id, config_);
        std::vector<torch::Tensor> same;
        for (const auto& s : inputs.same_level) same.push_back(nodes.at(s));
        nodes[id] = decoder_.at(id)(same, nodes.at(inputs.below));
    }
    return nodes.at({0, config_.depth});
}

std::map<FusionNodeId, torch::Tensor> GeneratorImpl::forward_nodes(const torch::Tensor& x) {
    auto feats = encode(x);
    std::map<FusionNodeId, torch::Tensor> nodes;
    for (int i = 0; i <= config_.depth; ++i) nodes[{i, 0}] = feats[i];
    decode(nodes);
    return nodes;
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& x) {
    auto feats = encode(x);
    std::map<FusionNodeId, torch::Tensor> nodes;
    for (int i = 0; i <= config_.depth; ++i) nodes[{i, 0}] = std::move(feats[i]);
    return torch::tanh(head_(decode(nodes)));
}

std::map<FusionNodeId, torch::Tensor> dump_feature_maps(Generator& generator, const torch::Tensor& x,
                                                        const std::vector<FusionNodeId>& nodes) {
    for (const auto& id : nodes) {
        if (!node_exists(id, generator->config())) {
            throw TopologyError(fmt::format("{} is not part of the {} topology at depth {}", id.label(),
                                            to_string(generator->config().decoder), generator->config().depth));
        }
    }
    torch::NoGradGuard no_grad;
    auto all = generator->forward_nodes(x);
    std::map<FusionNodeId, torch::Tensor> out;
    for (const auto& id : nodes) out[id] = all.at(id).mean(1);
    return out;
}

std::int64_t count_parameters(const torch::nn::Module& module) {
    std::int64_t n = 0;
    for (const auto& p : module.parameters()) n += p.numel();
    return n;
}

std::int64_t se_parameter_count(const GeneratorConfig& config) {
    if (config.encoder != EncoderKind::SeResidual) return 0;
    std::int64_t n = 0;
    for (int i = 0; i <= config.depth; ++i) {
        const std::int64_t c = config.channels(i);
        const std::int64_t h = config.se_hidden(static_cast<int>(c));
        n += c * h + h + h * c + c;
    }
    return n;
}

}  // namespace slabgan::model
