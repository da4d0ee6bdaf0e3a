#pragma once

#include <torch/torch.h>

#include <span>
#include <string>
#include <vector>

#include "slabgan/data_pipeline.hpp"

namespace slabgan::data {

enum class Split { Train, Test };

/// Resolutions the networks are trained and evaluated at.
bool supported_resolution(int resolution);
void require_supported_resolution(int resolution);

/// [0, 255] -> [-1, 1] via x / 127.5 - 1. Returns a (C, H, W) float tensor.
torch::Tensor to_model_space(const Image8& image);

/// Inverse map (x + 1) * 127.5, rounded half-up and clamped. Accepts (C, H, W).
Image8 from_model_space(const torch::Tensor& chw);

/// An 8-bit slab pair already resized to the working resolution.
struct PairImages {
    std::string id;
    Image8 source;
    Image8 target;
};

struct Batch {
    torch::Tensor source;  // (B, 3, R, R), model space
    torch::Tensor target;
    std::vector<std::string> ids;
};

/// Reads a slab PNG, insists on 3 channels, and resizes it bilinearly.
Image8 load_slab(const fs::path& path, int resolution);

/// Loads the listed entries of one side of the manifest. IoError names the sample.
std::vector<PairImages> load_pairs(const DatasetManifest& manifest, Split split, std::span<const std::size_t> indices,
                                   int resolution);
std::vector<PairImages> load_pairs(const DatasetManifest& manifest, Split split, int resolution);

/// Stacks the selected pairs into a batch.
Batch make_batch(std::span<const PairImages> pairs, std::span<const std::size_t> indices);

Batch load_batch(const DatasetManifest& manifest, Split split, std::span<const std::size_t> indices, int resolution);

}  // namespace slabgan::data
