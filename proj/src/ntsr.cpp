#include "nalu/ntsr.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <type_traits>

#include "nalu/error.hpp"

namespace nalu::ntsr {

namespace {

template <typename T>
void put_le(std::string& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("NTSR: truncated data");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string encode(const Tensor& t) {
  if (t.rank() > std::numeric_limits<std::uint16_t>::max()) throw IoError("NTSR: rank too large");
  std::string out = "NTSR";
  out.push_back(static_cast<char>(kVersion));
  out.push_back(static_cast<char>(kDtypeF32));
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.rank()));
  for (std::size_t d : t.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) throw IoError("NTSR: dim too large");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + 4 * t.numel());
  for (float v : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor decode(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 4, "NTSR") != 0) throw IoError("NTSR: bad magic");
  std::size_t pos = 4;
  const auto version = get_le<std::uint8_t>(bytes, pos);
  if (version != kVersion) throw IoError("NTSR: unsupported version " + std::to_string(version));
  const auto dtype = get_le<std::uint8_t>(bytes, pos);
  if (dtype != kDtypeF32) throw IoError("NTSR: unsupported dtype " + std::to_string(dtype));
  const auto rank = get_le<std::uint16_t>(bytes, pos);
  Shape shape(rank);
  for (auto& d : shape) d = get_le<std::uint32_t>(bytes, pos);
  const std::size_t n = shape_numel(shape);
  if (bytes.size() - pos != 4 * n) {
    throw IoError("NTSR: payload size " + std::to_string(bytes.size() - pos) +
                  " does not match shape " + shape_str(shape));
  }
  std::vector<float> data(n);
  for (auto& v : data) v = std::bit_cast<float>(get_le<std::uint32_t>(bytes, pos));
  return Tensor(std::move(shape), std::move(data));
}

void write_file(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for writing: " + path.string());
  const std::string bytes = encode(t);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

Tensor read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace nalu::ntsr
