#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "slabgan/image.hpp"

namespace slabgan::render {

namespace fs = std::filesystem;

using Rgb = std::array<std::uint8_t, 3>;

/// "hot" colormap: black -> red -> yellow -> white. Each channel is
/// non-decreasing in t, so brighter always means larger. t is clamped to [0, 1].
Rgb hot_colormap(double t);

/// |generated - target| on the 8-bit scale, averaged over channels: (1, H, W).
ImageD abs_error_map(const Image8& generated, const Image8& target);

/// Value range used to scale an error map into [0, 1].
struct ErrorScale {
    double lo = 0;
    double hi = 0;
};
ErrorScale error_range(const ImageD& error);

/// Maps an error map to RGB through hot_colormap. Without a shared scale the
/// map is min-max scaled on its own; a degenerate range renders all-darkest.
Image8 colorize_error(const ImageD& error, std::optional<ErrorScale> shared = std::nullopt);

struct HeatmapPanel {
    Image8 heatmap;  // the colorized error map alone
    Image8 panel;    // caption strip over source | target | generated | heatmap
};

/// Builds the side-by-side panel. Gray inputs are expanded to RGB.
HeatmapPanel error_heatmap_panel(const Image8& source, const Image8& target, const Image8& generated,
                                 const std::string& caption, std::optional<ErrorScale> shared = std::nullopt);

/// Writes the panel PNG and returns what was drawn. Throws ShapeError for mismatched inputs.
HeatmapPanel render_error_heatmap(const Image8& source, const Image8& target, const Image8& generated,
                                  const fs::path& out_path, const std::string& caption,
                                  std::optional<ErrorScale> shared = std::nullopt);

/// Min-max scales a (H, W) feature map to 8-bit gray. A constant map renders mid-gray (128).
Image8 scale_feature_map(const torch::Tensor& map);

struct Tile {
    std::string label;
    Image8 image;
};

/// Lays tiles out left to right, each resized to tile_size and topped by its label.
Image8 tile_row(const std::vector<Tile>& tiles, int tile_size, const std::string& title = {});

// ---------------------------------------------------------------------------
// Text
// ---------------------------------------------------------------------------

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

/// Draws text with a built-in 5x7 font; lower case other than 'x' renders as upper case.
/// Pixels outside the image are skipped.
void draw_text(Image8& image, int x, int y, const std::string& text, Rgb color, int scale = 1);

/// Pixel width of text at the given scale.
int text_width(const std::string& text, int scale = 1);

/// Three-channel copy of a one- or three-channel image.
Image8 to_rgb(const Image8& image);

/// Nearest-neighbour resize, used for tiles so that flat regions stay flat.
Image8 resize_nearest(const Image8& image, int height, int width);

}  // namespace slabgan::render
