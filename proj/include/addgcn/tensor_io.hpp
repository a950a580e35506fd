#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "addgcn/tensor.hpp"

// ADGT binary tensor format:
//   "ADGT" | u8 version (1) | u8 dtype (0 = f32) | u8 rank |
//   rank x u32 LE extents | row-major f32 LE payload

namespace addgcn {

inline constexpr std::uint8_t kAdgtVersion = 1;
inline constexpr std::uint8_t kAdgtFloat32 = 0;

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
/// Decodes one tensor starting at `offset`; advances `offset` past it.
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes, std::size_t& offset);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

// Little-endian primitives shared by the checkpoint container.
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f32(std::vector<std::uint8_t>& out, float v);
std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& offset);
std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t& offset);

}  // namespace addgcn
