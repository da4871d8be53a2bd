#pragma once

#include <filesystem>

#include "nalu/tensor.hpp"

// Grayscale PNG I/O. Images are Tensor[1,H,W] with values in [0, 1].
namespace nalu::png {

// Accepts 8- and 16-bit grayscale (palette/RGB inputs are converted to gray,
// alpha is dropped). Values are scaled by the bit depth's maximum.
Tensor read(const std::filesystem::path& path);
// Values are clamped to [0, 1] and quantized to the given bit depth (8 or 16).
void write(const std::filesystem::path& path, const Tensor& image, int bit_depth = 16);

}  // namespace nalu::png
