#pragma once

// Direct-definition image quality metrics used as test oracles. Everything is
// computed with plain loops over explicit 2D windows; nothing is shared with
// the library implementation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace oracle {

struct Img {
    int c = 0, h = 0, w = 0;
    std::vector<double> v;  // (c, h, w)
    double at(int ch, int y, int x) const { return v[(std::size_t(ch) * h + y) * w + x]; }
};

inline double naive_mse(const Img& a, const Img& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.v.size(); ++i) s += (a.v[i] - b.v[i]) * (a.v[i] - b.v[i]);
    return s / double(a.v.size());
}

inline double naive_psnr(const Img& a, const Img& b, double peak = 255.0) {
    const double m = naive_mse(a, b);
    if (m == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / m);
}

inline double naive_nmse(const Img& gen, const Img& ref) {
    double num = 0, den = 0;
    for (std::size_t i = 0; i < gen.v.size(); ++i) {
        num += (gen.v[i] - ref.v[i]) * (gen.v[i] - ref.v[i]);
        den += ref.v[i] * ref.v[i];
    }
    return num / den;
}

/// Full 11x11 Gaussian window, normalized over its 2D sum.
inline std::vector<double> window2d(int size = 11, double sigma = 1.5) {
    std::vector<double> win(std::size_t(size) * size);
    const double r = (size - 1) / 2.0;
    double total = 0;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double d2 = (y - r) * (y - r) + (x - r) * (x - r);
            win[std::size_t(y) * size + x] = std::exp(-d2 / (2 * sigma * sigma));
            total += win[std::size_t(y) * size + x];
        }
    for (auto& v : win) v /= total;
    return win;
}

struct Terms {
    double ssim = 0;  // mean SSIM map over valid positions
    double cs = 0;    // mean contrast-structure map
};

/// Per-channel SSIM terms from weighted local moments around each window's mean.
inline Terms naive_terms(const Img& a, const Img& b, int ch, double range, int size = 11, double sigma = 1.5) {
    const auto win = window2d(size, sigma);
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    Terms t;
    long count = 0;
    for (int y0 = 0; y0 + size <= a.h; ++y0) {
        for (int x0 = 0; x0 + size <= a.w; ++x0) {
            double mx = 0, my = 0;
            for (int dy = 0; dy < size; ++dy)
                for (int dx = 0; dx < size; ++dx) {
                    const double g = win[std::size_t(dy) * size + dx];
                    mx += g * a.at(ch, y0 + dy, x0 + dx);
                    my += g * b.at(ch, y0 + dy, x0 + dx);
                }
            double vx = 0, vy = 0, cxy = 0;
            for (int dy = 0; dy < size; ++dy)
                for (int dx = 0; dx < size; ++dx) {
                    const double g = win[std::size_t(dy) * size + dx];
                    const double ex = a.at(ch, y0 + dy, x0 + dx) - mx;
                    const double ey = b.at(ch, y0 + dy, x0 + dx) - my;
                    vx += g * ex * ex;
                    vy += g * ey * ey;
                    cxy += g * ex * ey;
                }
            const double cs = (2 * cxy + c2) / (vx + vy + c2);
            const double lum = (2 * mx * my + c1) / (mx * mx + my * my + c1);
            t.cs += cs;
            t.ssim += lum * cs;
            ++count;
        }
    }
    t.cs /= count;
    t.ssim /= count;
    return t;
}

inline double naive_ssim(const Img& a, const Img& b, double range = 255.0) {
    double s = 0;
    for (int ch = 0; ch < a.c; ++ch) s += naive_terms(a, b, ch, range).ssim;
    return s / a.c;
}

inline Img half(const Img& in) {
    Img out{in.c, in.h / 2, in.w / 2, {}};
    out.v.resize(std::size_t(out.c) * out.h * out.w);
    for (int ch = 0; ch < out.c; ++ch)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x)
                out.v[(std::size_t(ch) * out.h + y) * out.w + x] =
                    0.25 * (in.at(ch, 2 * y, 2 * x) + in.at(ch, 2 * y, 2 * x + 1) + in.at(ch, 2 * y + 1, 2 * x) +
                            in.at(ch, 2 * y + 1, 2 * x + 1));
    return out;
}

/// Product over scales of cs^w (ssim^w at the coarsest), negative terms clamped
/// to zero, averaged over channels. Weights are renormalized over `scales`.
inline double naive_ms_ssim(Img a, Img b, int scales, double range = 255.0) {
    const double base[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    double wsum = 0;
    for (int s = 0; s < scales; ++s) wsum += base[s];
    std::vector<double> prod(a.c, 1.0);
    for (int s = 0; s < scales; ++s) {
        const double w = base[s] / wsum;
        for (int ch = 0; ch < a.c; ++ch) {
            const Terms t = naive_terms(a, b, ch, range);
            const double term = (s == scales - 1) ? t.ssim : t.cs;
            prod[ch] *= std::pow(std::max(term, 0.0), w);
        }
        if (s + 1 < scales) {
            a = half(a);
            b = half(b);
        }
    }
    double m = 0;
    for (double p : prod) m += p;
    return m / a.c;
}

}  // namespace oracle
