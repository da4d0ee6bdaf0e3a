#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "slabgan/errors.hpp"

namespace slabgan {

/// Channel-major (C, H, W) image buffer.
template <class T>
struct Planar {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<T> data;

    Planar() = default;
    Planar(int c, int h, int w, T fill = T{})
        : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

    std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
    std::size_t size() const { return data.size(); }

    T& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    const T& at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    bool same_shape(const Planar& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }

    bool operator==(const Planar&) const = default;
};

using Image8 = Planar<std::uint8_t>;
using ImageD = Planar<double>;

/// Single-channel float slice, row-major (H, W).
using Slice = Planar<float>;

template <class To, class From>
Planar<To> convert(const Planar<From>& in) {
    Planar<To> out(in.channels, in.height, in.width);
    for (std::size_t i = 0; i < in.data.size(); ++i) out.data[i] = static_cast<To>(in.data[i]);
    return out;
}

template <class A, class B>
void require_same_shape(const Planar<A>& a, const Planar<B>& b, const char* what) {
    if (a.channels != b.channels || a.height != b.height || a.width != b.width) {
        throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.channels) + "x" +
                         std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                         std::to_string(b.channels) + "x" + std::to_string(b.height) + "x" +
                         std::to_string(b.width) + ")");
    }
}

}  // namespace slabgan
