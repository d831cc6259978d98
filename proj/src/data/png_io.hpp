#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/image.hpp"

namespace ecdm::data {

// Minimal PNG support: 8-bit grayscale and RGB, non-interlaced. Encoding
// always writes filter type 0 scanlines with a fixed zlib level, so identical
// pixels produce identical files.
struct RawImage {
    int width = 0, height = 0, channels = 0;  // channels: 1 or 3
    std::vector<uint8_t> pixels;              // row-major, interleaved
};

void write_png(const std::string& path, const RawImage& image);
RawImage read_png(const std::string& path);
// Header-only read for cheap dimension validation.
void read_png_header(const std::string& path, int* width, int* height, int* channels);

// [-1,1] <-> [0,255] affine mapping used for all image files.
RawImage to_raw(const ImageTensor& t);
ImageTensor from_raw(const RawImage& raw);

void save_image(const std::string& path, const ImageTensor& t);
ImageTensor load_image(const std::string& path);

} // namespace ecdm::data
