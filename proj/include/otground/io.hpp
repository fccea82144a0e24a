#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "otground/ot.hpp"

namespace otground {

// Embedding file layout, all little-endian:
//   "OTEB" | u16 version (1) | u32 count | u32 dim | count*dim f32, row-major
inline constexpr std::array<char, 4> kEmbeddingMagic = {'O', 'T', 'E', 'B'};
inline constexpr std::uint16_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 14;

// Values are narrowed to 32-bit floats.
std::string encode_embeddings(const MatrixXd& rows);
MatrixXd decode_embeddings(std::string_view bytes);

void write_embeddings(const std::filesystem::path& path, const MatrixXd& rows);
MatrixXd read_embeddings(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

} // namespace otground
