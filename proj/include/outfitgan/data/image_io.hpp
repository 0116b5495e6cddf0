#pragma once

#include <string>

#include "outfitgan/core/types.hpp"

namespace outfitgan::data {

/// Lossless 8-bit PNG round trip for [-1,1] images. Values are mapped
/// linearly: u8 = round((x+1)*127.5), x = u8/127.5 - 1.

void write_png_rgb(const std::string& path, const FeatureMap<float>& image);
FeatureMap<float> read_png_rgb(const std::string& path);

/// Masks are stored as 8-bit grayscale 0/255 and read back as {0,1}.
void write_png_gray(const std::string& path, const FeatureMap<float>& mask);
FeatureMap<float> read_png_gray(const std::string& path);

/// Snap a value onto the representable 8-bit grid (used by the corpus
/// generator so saved and in-memory pixels agree bit-exactly).
inline float quantize_u8(float x) {
    float u = std::round((x + 1.0f) * 127.5f);
    if (u < 0.0f) u = 0.0f;
    if (u > 255.0f) u = 255.0f;
    return u / 127.5f - 1.0f;
}

}  // namespace outfitgan::data
