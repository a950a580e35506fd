#include "addgcn/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace addgcn {

namespace {

constexpr char kMagic[4] = {'A', 'D', 'G', 'T'};

[[noreturn]] void truncated(std::size_t offset, std::size_t need, std::size_t have) {
  throw FormatError("ADGT: truncated at byte offset " + std::to_string(offset) + " (need " +
                    std::to_string(need) + " bytes, " + std::to_string(have) + " available)");
}

void require(const std::vector<std::uint8_t>& in, std::size_t offset, std::size_t need) {
  if (offset > in.size() || in.size() - offset < need) truncated(offset, need, in.size() - std::min(offset, in.size()));
}

}  // namespace

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& offset) {
  require(in, offset, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[offset + i]) << (8 * i);
  offset += 4;
  return v;
}

std::uint64_t get_u64(const std::vector<std::uint8_t>& in, std::size_t& offset) {
  require(in, offset, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[offset + i]) << (8 * i);
  offset += 8;
  return v;
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() > 255) throw ContractError("ADGT: rank exceeds 255");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(kAdgtVersion);
  out.push_back(kAdgtFloat32);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) {
    if (e > 0xffffffffULL) throw ContractError("ADGT: extent exceeds u32");
    put_u32(out, static_cast<std::uint32_t>(e));
  }
  out.reserve(out.size() + 4 * t.numel());
  for (float v : t.data()) put_f32(out, v);
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& in, std::size_t& offset) {
  const std::size_t start = offset;
  require(in, offset, 7);
  if (std::memcmp(in.data() + offset, kMagic, 4) != 0) {
    throw FormatError("ADGT: bad magic at byte offset " + std::to_string(start));
  }
  offset += 4;
  const std::uint8_t version = in[offset++];
  if (version != kAdgtVersion) {
    throw FormatError("ADGT: unsupported version " + std::to_string(version));
  }
  const std::uint8_t dtype = in[offset++];
  if (dtype != kAdgtFloat32) throw FormatError("ADGT: unsupported dtype " + std::to_string(dtype));
  const std::uint8_t rank = in[offset++];
  if (rank == 0) throw FormatError("ADGT: rank 0 at byte offset " + std::to_string(offset - 1));
  Shape shape;
  for (std::uint8_t i = 0; i < rank; ++i) {
    auto e = get_u32(in, offset);
    if (e == 0) throw FormatError("ADGT: zero extent on axis " + std::to_string(i));
    shape.push_back(e);
  }
  const std::size_t n = numel(shape);
  require(in, offset, 4 * n);
  std::vector<float> values(n);
  for (auto& v : values) v = std::bit_cast<float>(get_u32(in, offset));
  return Tensor::from(std::move(shape), std::move(values));
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  std::size_t offset = 0;
  auto t = decode_tensor(bytes, offset);
  if (offset != bytes.size()) {
    throw FormatError("ADGT: " + std::to_string(bytes.size() - offset) +
                      " trailing bytes after payload at offset " + std::to_string(offset));
  }
  return t;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) { write_file(path, encode_tensor(t)); }

Tensor load_tensor(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace addgcn
