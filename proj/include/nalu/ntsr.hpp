#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "nalu/tensor.hpp"

namespace nalu::ntsr {

// Binary tensor container:
//   "NTSR" | version u8 (0x01) | dtype u8 (0x00 = f32) | rank u16 | rank x u32 dims | f32 payload
// All integers and floats little-endian, payload row-major.
inline constexpr unsigned char kVersion = 0x01;
inline constexpr unsigned char kDtypeF32 = 0x00;

std::string encode(const Tensor& t);
Tensor decode(const std::string& bytes);

void write_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_file(const std::filesystem::path& path);

}  // namespace nalu::ntsr
