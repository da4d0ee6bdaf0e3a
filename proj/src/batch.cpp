#include "slabgan/batch.hpp"

#include <cmath>

namespace slabgan::data {

bool supported_resolution(int resolution) { return resolution == 128 || resolution == 256; }

void require_supported_resolution(int resolution) {
    if (!supported_resolution(resolution)) {
        throw ConfigError("unsupported resolution " + std::to_string(resolution) + " (expected 128 or 256)");
    }
}

torch::Tensor to_model_space(const Image8& image) {
    auto t = torch::empty({image.channels, image.height, image.width}, torch::kFloat32);
    float* p = t.data_ptr<float>();
    for (std::size_t i = 0; i < image.data.size(); ++i) p[i] = static_cast<float>(image.data[i] / 127.5 - 1.0);
    return t;
}

Image8 from_model_space(const torch::Tensor& chw) {
    if (chw.dim() != 3) throw ShapeError("from_model_space expects a (C, H, W) tensor");
    auto t = chw.detach().to(torch::kCPU, torch::kFloat64).contiguous();
    Image8 out(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
    const double* p = t.data_ptr<double>();
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        const double v = std::floor((p[i] + 1.0) * 127.5 + 0.5);
        out.data[i] = static_cast<std::uint8_t>(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 255.0));
    }
    return out;
}

Image8 load_slab(const fs::path& path, int resolution) {
    Image8 img = read_png(path);
    if (img.channels != 3) throw DataError("slab " + path.string() + " is not a 3-channel image");
    return resize_bilinear(img, resolution, resolution);
}

std::vector<PairImages> load_pairs(const DatasetManifest& manifest, Split split, std::span<const std::size_t> indices,
                                   int resolution) {
    const auto& list = split == Split::Train ? manifest.train : manifest.test;
    std::vector<PairImages> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) {
        if (i >= list.size()) {
            throw std::out_of_range("sample index " + std::to_string(i) + " outside the " +
                                    (split == Split::Train ? "train" : "test") + " list");
        }
        const auto& e = list[i];
        try {
            out.push_back({e.id(), load_slab(manifest.resolve(e.source), resolution),
                           load_slab(manifest.resolve(e.target), resolution)});
        } catch (const IoError& err) {
            throw IoError("sample " + e.id() + ": " + err.what());
        }
    }
    return out;
}

std::vector<PairImages> load_pairs(const DatasetManifest& manifest, Split split, int resolution) {
    const auto n = (split == Split::Train ? manifest.train : manifest.test).size();
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return load_pairs(manifest, split, all, resolution);
}

Batch make_batch(std::span<const PairImages> pairs, std::span<const std::size_t> indices) {
    std::vector<torch::Tensor> src, tgt;
    Batch b;
    for (std::size_t i : indices) {
        src.push_back(to_model_space(pairs[i].source));
        tgt.push_back(to_model_space(pairs[i].target));
        b.ids.push_back(pairs[i].id);
    }
    b.source = torch::stack(src);
    b.target = torch::stack(tgt);
    return b;
}

Batch load_batch(const DatasetManifest& manifest, Split split, std::span<const std::size_t> indices, int resolution) {
    require_supported_resolution(resolution);
    const auto pairs = load_pairs(manifest, split, indices, resolution);
    std::vector<std::size_t> all(pairs.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return make_batch(pairs, all);
}

}  // namespace slabgan::data
