#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsa/tensor.hpp"

namespace lsa::png {

// Encodes an [h,w,c] image (c = 1 or 3, values clamped to [0,1]) as an 8-bit PNG.
std::vector<std::uint8_t> encode(const Tensor& img);
void write_file(const std::string& path, const Tensor& img);

// Decodes a non-interlaced 8-bit PNG (gray, RGB, or RGBA; alpha is dropped).
// Returns an [h,w,c] tensor with values in [0,1], c = 1 or 3.
Tensor decode(const std::uint8_t* data, std::size_t size);
Tensor read_file(const std::string& path);

}  // namespace lsa::png
