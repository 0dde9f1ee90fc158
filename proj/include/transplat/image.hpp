#pragma once

#include <transplat/errors.hpp>

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace transplat {

/// Dense H x W x C image of doubles, row-major with interleaved channels.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }

    std::span<double> pixel(int x, int y) {
        return std::span<double>(data).subspan(index(x, y), static_cast<std::size_t>(channels));
    }
    std::span<const double> pixel(int x, int y) const {
        return std::span<const double>(data).subspan(index(x, y), static_cast<std::size_t>(channels));
    }

    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

/// Per-pixel boolean map (object masks, depth validity).
struct Mask {
    int width = 0;
    int height = 0;
    std::vector<unsigned char> data;

    Mask() = default;
    Mask(int w, int h, bool fill = false)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill ? 1 : 0) {}

    bool at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x] != 0; }
    void set(int x, int y, bool v) { data[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (unsigned char v : data) n += v != 0;
        return n;
    }
};

inline void require_same_shape(const Image& a, const Image& b, const std::string& what) {
    if (!a.same_shape(b)) {
        throw ValidationError(what + ": image shapes differ (" + std::to_string(a.width) + "x" +
                              std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                              std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                              std::to_string(b.channels) + ")");
    }
}

} // namespace transplat
