#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spv/frame.hpp"

namespace spv::image_io {

/// 8-bit image as decoded from PNG: 1 (gray) or 3 (RGB) channels.
struct Image8 {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;
};

/// Reads gray or RGB PNGs; palette, alpha and 16-bit inputs are normalised
/// to 8-bit gray/RGB. Throws IoError.
Image8 read_png(const std::string& path);
void write_png(const std::string& path, const Image8& img);

Frame to_frame(const Image8& img);
RgbFrame to_rgb_frame(const Image8& img);

/// Quantises [0,1] to 8 bits with round-to-nearest.
std::uint8_t quantize(float v);
Image8 from_frame(const Frame& f);
std::vector<std::uint8_t> to_gray8(const Frame& f);
Frame from_gray8(int width, int height, const std::uint8_t* bytes);

}  // namespace spv::image_io
