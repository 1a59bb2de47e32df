#include "star/stf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>

#include "star/errors.hpp"

namespace star {
namespace {

constexpr char kMagic[4] = {'S', 'T', 'F', '1'};
constexpr std::uint32_t kMaxRank = 16;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_le(const std::uint8_t* p, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_stf(const Tensor& tensor) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * tensor.rank() + 8 * tensor.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
  for (std::size_t d : tensor.shape()) {
    if (d > std::numeric_limits<std::uint32_t>::max()) {
      throw FormatError("STF dims: extent " + std::to_string(d) + " exceeds u32");
    }
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (double v : tensor.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

Tensor decode_stf(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("STF magic: expected \"STF1\"");
  }
  if (bytes.size() < 8) throw FormatError("STF rank: header truncated");
  const auto rank = static_cast<std::uint32_t>(get_le(bytes.data() + 4, 4));
  if (rank > kMaxRank) {
    throw FormatError("STF rank: " + std::to_string(rank) + " exceeds limit " +
                      std::to_string(kMaxRank));
  }
  const std::size_t header = 8 + 4 * static_cast<std::size_t>(rank);
  if (bytes.size() < header) {
    throw FormatError("STF dims: expected " + std::to_string(rank) + " dims, file truncated");
  }
  Shape shape(rank);
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<std::size_t>(get_le(bytes.data() + 8 + 4 * i, 4));
    if (shape[i] != 0 && count > (std::numeric_limits<std::size_t>::max() / 8) / shape[i]) {
      throw FormatError("STF dims: element count overflows");
    }
    count *= shape[i];
  }
  const std::size_t expected = header + 8 * count;
  if (bytes.size() != expected) {
    throw FormatError("STF payload: expected " + std::to_string(8 * count) + " bytes for shape " +
                      shape_string(shape) + ", found " + std::to_string(bytes.size() - header));
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i) {
    data[i] = std::bit_cast<double>(get_le(bytes.data() + header + 8 * i, 8));
  }
  return Tensor(std::move(shape), std::move(data));
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

void write_stf(const std::filesystem::path& path, const Tensor& tensor) {
  write_file_bytes(path, encode_stf(tensor));
}

Tensor read_stf(const std::filesystem::path& path) {
  try {
    return decode_stf(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace star
