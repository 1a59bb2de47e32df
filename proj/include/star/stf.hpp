#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "star/tensor.hpp"

namespace star {

/// Simple Tensor File: "STF1", u32 LE rank, rank x u32 LE dims, row-major f64 LE payload.
std::vector<std::uint8_t> encode_stf(const Tensor& tensor);
/// Throws FormatError naming the offending field (magic, rank, dims, payload).
Tensor decode_stf(std::span<const std::uint8_t> bytes);

void write_stf(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_stf(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace star
