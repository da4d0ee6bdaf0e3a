#include "slabgan/render.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "slabgan/errors.hpp"
#include "slabgan/io.hpp"

namespace slabgan::render {

namespace {

std::uint8_t unit_to_byte(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5));
}

using Glyph = std::array<std::uint8_t, kGlyphHeight>;

const std::map<char, Glyph>& font() {
    static const std::map<char, Glyph> glyphs = {
        {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}}, {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
        {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}}, {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
        {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}}, {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
        {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}}, {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
        {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}}, {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
        {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}}, {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
        {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}}, {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
        {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}}, {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
        {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}}, {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
        {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}}, {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
        {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}}, {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
        {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}}, {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
        {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
        {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}}, {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
        {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}}, {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
        {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}}, {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
        {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}}, {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
        {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}}, {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
        {'x', {0, 0, 0x11, 0x0A, 0x04, 0x0A, 0x11}},       {' ', {0, 0, 0, 0, 0, 0, 0}},                     {'_', {0, 0, 0, 0, 0, 0, 0x1F}},
        {'{', {0x02, 0x04, 0x04, 0x08, 0x04, 0x04, 0x02}}, {'}', {0x08, 0x04, 0x04, 0x02, 0x04, 0x04, 0x08}},
        {',', {0, 0, 0, 0, 0x0C, 0x04, 0x08}},             {':', {0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0}},
        {'-', {0, 0, 0, 0x1F, 0, 0, 0}},                   {'.', {0, 0, 0, 0, 0, 0x0C, 0x0C}},
        {'>', {0x08, 0x04, 0x02, 0x01, 0x02, 0x04, 0x08}}, {'&', {0x0C, 0x12, 0x14, 0x08, 0x15, 0x12, 0x0D}},
        {'+', {0, 0x04, 0x04, 0x1F, 0x04, 0x04, 0}},       {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
        {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}}, {'=', {0, 0, 0x1F, 0, 0x1F, 0, 0}},
        {'/', {0, 0x01, 0x02, 0x04, 0x08, 0x10, 0}},       {'?', {0x0E, 0x11, 0x01, 0x02, 0x04, 0, 0x04}},
    };
    return glyphs;
}

const Glyph& glyph(char c) {
    const auto& f = font();
    auto it = f.find(c);
    if (it == f.end()) it = f.find(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return it != f.end() ? it->second : f.at('?');
}

void blit(Image8& dst, const Image8& src, int x0, int y0) {
    for (int c = 0; c < dst.channels; ++c)
        for (int y = 0; y < src.height; ++y)
            for (int x = 0; x < src.width; ++x) dst.at(c, y0 + y, x0 + x) = src.at(c, y, x);
}

constexpr int kCaptionHeight = kGlyphHeight + 6;
constexpr int kGap = 4;

}  // namespace

Rgb hot_colormap(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return {unit_to_byte(3.0 * t), unit_to_byte(3.0 * t - 1.0), unit_to_byte(3.0 * t - 2.0)};
}

ImageD abs_error_map(const Image8& generated, const Image8& target) {
    require_same_shape(generated, target, "abs_error_map");
    ImageD out(1, target.height, target.width);
    for (int c = 0; c < target.channels; ++c)
        for (int y = 0; y < target.height; ++y)
            for (int x = 0; x < target.width; ++x)
                out.at(0, y, x) += std::abs(double(generated.at(c, y, x)) - double(target.at(c, y, x)));
    for (auto& v : out.data) v /= target.channels;
    return out;
}

ErrorScale error_range(const ImageD& error) {
    if (error.data.empty()) return {};
    const auto [lo, hi] = std::minmax_element(error.data.begin(), error.data.end());
    return {*lo, *hi};
}

Image8 colorize_error(const ImageD& error, std::optional<ErrorScale> shared) {
    const ErrorScale s = shared ? *shared : error_range(error);
    const double span = s.hi - s.lo;
    Image8 out(3, error.height, error.width);
    for (int y = 0; y < error.height; ++y) {
        for (int x = 0; x < error.width; ++x) {
            const double t = span > 0 ? (error.at(0, y, x) - s.lo) / span : 0.0;
            const Rgb rgb = hot_colormap(t);
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = rgb[c];
        }
    }
    return out;
}

Image8 to_rgb(const Image8& image) {
    if (image.channels == 3) return image;
    if (image.channels != 1) throw ShapeError("to_rgb expects 1 or 3 channels, got " + std::to_string(image.channels));
    Image8 out(3, image.height, image.width);
    for (int c = 0; c < 3; ++c) std::copy(image.data.begin(), image.data.end(), out.data.begin() + c * image.plane_size());
    return out;
}

Image8 resize_nearest(const Image8& image, int height, int width) {
    Image8 out(image.channels, height, width);
    for (int c = 0; c < image.channels; ++c)
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x)
                out.at(c, y, x) = image.at(c, static_cast<int>(std::int64_t(y) * image.height / height),
                                           static_cast<int>(std::int64_t(x) * image.width / width));
    return out;
}

int text_width(const std::string& text, int scale) {
    if (text.empty()) return 0;
    return static_cast<int>(text.size()) * (kGlyphWidth + 1) * scale - scale;
}

void draw_text(Image8& image, int x, int y, const std::string& text, Rgb color, int scale) {
    int pen = x;
    for (char ch : text) {
        const Glyph& g = glyph(ch);
        for (int r = 0; r < kGlyphHeight; ++r) {
            for (int col = 0; col < kGlyphWidth; ++col) {
                if (!(g[r] & (0x10 >> col))) continue;
                for (int dy = 0; dy < scale; ++dy) {
                    for (int dx = 0; dx < scale; ++dx) {
                        const int px = pen + col * scale + dx;
                        const int py = y + r * scale + dy;
                        if (px < 0 || py < 0 || px >= image.width || py >= image.height) continue;
                        for (int c = 0; c < image.channels; ++c) image.at(c, py, px) = color[std::min(c, 2)];
                    }
                }
            }
        }
        pen += (kGlyphWidth + 1) * scale;
    }
}

HeatmapPanel error_heatmap_panel(const Image8& source, const Image8& target, const Image8& generated,
                                 const std::string& caption, std::optional<ErrorScale> shared) {
    require_same_shape(generated, target, "render_error_heatmap");
    if (source.height != target.height || source.width != target.width) {
        throw ShapeError("render_error_heatmap: source size differs from target");
    }
    HeatmapPanel out;
    out.heatmap = colorize_error(abs_error_map(generated, target), shared);

    const Image8 parts[] = {to_rgb(source), to_rgb(target), to_rgb(generated), out.heatmap};
    const int h = target.height, w = target.width;
    out.panel = Image8(3, kCaptionHeight + h, 4 * w + 3 * kGap, 255);
    draw_text(out.panel, 2, 3, caption, {0, 0, 0});
    for (int i = 0; i < 4; ++i) blit(out.panel, parts[i], i * (w + kGap), kCaptionHeight);
    return out;
}

HeatmapPanel render_error_heatmap(const Image8& source, const Image8& target, const Image8& generated,
                                  const fs::path& out_path, const std::string& caption,
                                  std::optional<ErrorScale> shared) {
    auto panel = error_heatmap_panel(source, target, generated, caption, shared);
    if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
    write_png(out_path, panel.panel);
    return panel;
}

Image8 scale_feature_map(const torch::Tensor& map) {
    if (map.dim() != 2) throw ShapeError(c10::str("scale_feature_map expects (H, W), got ", map.sizes()));
    const auto m = map.detach().to(torch::kFloat64).contiguous();
    const int h = static_cast<int>(m.size(0)), w = static_cast<int>(m.size(1));
    const double* p = m.data_ptr<double>();
    const auto [lo, hi] = std::minmax_element(p, p + std::size_t(h) * w);
    Image8 out(1, h, w, 128);
    const double span = *hi - *lo;
    if (!(span > 0)) return out;
    for (int i = 0; i < h * w; ++i) out.data[i] = unit_to_byte((p[i] - *lo) / span);
    return out;
}

Image8 tile_row(const std::vector<Tile>& tiles, int tile_size, const std::string& title) {
    const int n = static_cast<int>(tiles.size());
    const int title_h = title.empty() ? 0 : kCaptionHeight;
    const int width = std::max(n * tile_size + std::max(0, n - 1) * kGap, text_width(title) + 4);
    Image8 out(3, title_h + kCaptionHeight + tile_size, width, 255);
    if (!title.empty()) draw_text(out, 2, 3, title, {0, 0, 0});
    for (int i = 0; i < n; ++i) {
        const int x0 = i * (tile_size + kGap);
        draw_text(out, x0 + 2, title_h + 3, tiles[i].label, {0, 0, 0});
        blit(out, to_rgb(resize_nearest(tiles[i].image, tile_size, tile_size)), x0, title_h + kCaptionHeight);
    }
    return out;
}

}  // namespace slabgan::render
