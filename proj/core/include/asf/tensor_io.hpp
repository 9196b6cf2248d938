#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <variant>
#include <vector>

#include "asf/tensor.hpp"

namespace asf {

// ASFT on-disk tensor format:
//   magic "ASFT" | version u16 LE | dtype u8 (0=f32, 1=f64) | rank u8 |
//   dims u64 LE each | payload row-major LE
// The reader validates the exact byte length and rejects any mismatch with
// a FormatError naming the offending byte offset.

inline constexpr std::uint16_t kAsftVersion = 1;

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

namespace detail_io {

inline void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

template <typename T>
inline void put_le(std::vector<std::uint8_t>& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  put_bytes(out, &v, sizeof(T));  // little-endian host assumed
}

template <typename T>
inline T get_le(const std::vector<std::uint8_t>& in, std::size_t& off,
                const char* what) {
  if (off + sizeof(T) > in.size())
    throw FormatError(std::string("truncated file reading ") + what +
                      " at byte offset " + std::to_string(off));
  T v;
  std::memcpy(&v, in.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  return buf;
}

inline void write_file(const std::filesystem::path& path,
                       const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to " + path.string());
}

template <typename T>
inline void encode_tensor_body(std::vector<std::uint8_t>& out, const Tensor<T>& t) {
  put_le<std::uint8_t>(out, sizeof(T) == 4 ? 0 : 1);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) put_le<std::uint64_t>(out, d);
  put_bytes(out, t.raw(), t.size() * sizeof(T));
}

// Parses dtype/rank/dims/payload from `in` starting at `off`; `exact_end`
// requires the payload to end exactly at in.size().
inline AnyTensor decode_tensor_body(const std::vector<std::uint8_t>& in,
                                    std::size_t& off, bool exact_end) {
  const auto dtype = get_le<std::uint8_t>(in, off, "dtype");
  if (dtype > 1)
    throw FormatError("unknown dtype code " + std::to_string(int(dtype)) +
                      " at byte offset " + std::to_string(off - 1));
  const auto rank = get_le<std::uint8_t>(in, off, "rank");
  if (rank == 0)
    throw FormatError("zero rank at byte offset " + std::to_string(off - 1));
  Shape shape(rank);
  std::uint64_t numel = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t dim_off = off;
    shape[i] = get_le<std::uint64_t>(in, off, "dim");
    if (shape[i] == 0)
      throw FormatError("zero dimension at byte offset " + std::to_string(dim_off));
    if (numel > (std::uint64_t(1) << 40) / shape[i])
      throw FormatError("dimension product overflow at byte offset " +
                        std::to_string(dim_off));
    numel *= shape[i];
  }
  const std::size_t esize = dtype == 0 ? 4 : 8;
  const std::uint64_t payload = numel * esize;
  if (off + payload > in.size() || (exact_end && off + payload != in.size()))
    throw FormatError("payload length mismatch: expected " + std::to_string(payload) +
                      " bytes at offset " + std::to_string(off) + ", file has " +
                      std::to_string(in.size() - off));
  if (dtype == 0) {
    std::vector<float> data(numel);
    std::memcpy(data.data(), in.data() + off, payload);
    off += payload;
    return Tensor<float>(std::move(shape), std::move(data));
  }
  std::vector<double> data(numel);
  std::memcpy(data.data(), in.data() + off, payload);
  off += payload;
  return Tensor<double>(std::move(shape), std::move(data));
}

}  // namespace detail_io

template <typename T>
inline std::vector<std::uint8_t> encode_tensor(const Tensor<T>& t) {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  std::vector<std::uint8_t> out;
  detail_io::put_bytes(out, "ASFT", 4);
  detail_io::put_le<std::uint16_t>(out, kAsftVersion);
  detail_io::encode_tensor_body(out, t);
  return out;
}

inline AnyTensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  std::size_t off = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ASFT", 4) != 0)
    throw FormatError("bad magic at byte offset 0");
  off = 4;
  const auto version = detail_io::get_le<std::uint16_t>(bytes, off, "version");
  if (version != kAsftVersion)
    throw FormatError("unsupported version " + std::to_string(version) +
                      " at byte offset 4");
  return detail_io::decode_tensor_body(bytes, off, /*exact_end=*/true);
}

template <typename T>
inline void write_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  detail_io::write_file(path, encode_tensor(t));
}

inline AnyTensor read_tensor(const std::filesystem::path& path) {
  return decode_tensor(detail_io::read_file(path));
}

template <typename T>
inline Tensor<T> read_tensor_as(const std::filesystem::path& path) {
  auto any = read_tensor(path);
  if (auto* t = std::get_if<Tensor<T>>(&any)) return std::move(*t);
  throw FormatError("tensor in " + path.string() + " has the other precision");
}

// Binary PGM (P5, maxval 255). `frame` is W x H; pixel = round(255 * value).
template <typename T>
inline void write_pgm(const std::filesystem::path& path, const Tensor<T>& frame) {
  if (frame.rank() != 2)
    throw DimensionError("PGM frame must be rank 2, got " + shape_str(frame.shape()));
  const std::size_t w = frame.dim(0), h = frame.dim(1);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << "P5\n" << w << " " << h << "\n255\n";
  for (std::size_t hi = 0; hi < h; ++hi)
    for (std::size_t wi = 0; wi < w; ++wi) {
      const double v = std::min(1.0, std::max(0.0, double(frame.at(wi, hi))));
      f.put(static_cast<char>(std::lround(255.0 * v)));
    }
  if (!f) throw IoError("short write to " + path.string());
}

}  // namespace asf
