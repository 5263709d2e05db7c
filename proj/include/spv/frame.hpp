#pragma once

#include <cstddef>
#include <vector>

namespace spv {

/// Row-major single-channel image with intensities in [0, 1].
struct Frame {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    Frame() = default;
    Frame(int w, int h, float fill = 0.0f)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return pixels.size(); }

    bool operator==(const Frame&) const = default;
};

/// Row-major interleaved RGB image, channels in [0, 1].
struct RgbFrame {
    int width = 0;
    int height = 0;
    std::vector<float> rgb;

    RgbFrame() = default;
    RgbFrame(int w, int h, float fill = 0.0f)
        : width(w), height(h), rgb(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 3, fill) {}
};

}  // namespace spv
