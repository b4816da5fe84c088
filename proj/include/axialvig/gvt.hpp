#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "axialvig/tensor.hpp"

// GVT tensor file format (bit-exact, little-endian):
//   magic   "GVTF" (4 bytes)
//   version u32 = 1
//   dtype   u8   (0 = f32, 1 = f64)
//   rank    u8   (1..4)
//   extents rank x u64
//   payload raw row-major scalars

namespace axialvig::gvt {

inline constexpr char kMagic[4] = {'G', 'V', 'T', 'F'};
inline constexpr std::uint32_t kVersion = 1;

template <typename S>
constexpr std::uint8_t dtype_code();
template <>
constexpr std::uint8_t dtype_code<float>() { return 0; }
template <>
constexpr std::uint8_t dtype_code<double>() { return 1; }

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw FormatError("gvt: write failed");
}

inline void get_bytes(std::istream& is, void* p, std::size_t n,
                      const char* what) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n)
    throw FormatError(std::string("gvt: truncated file while reading ") + what);
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(os, b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  put_bytes(os, b, 8);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  get_bytes(is, b, 4, what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& is, const char* what) {
  unsigned char b[8];
  get_bytes(is, b, 8, what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}

// Scalars are serialized through a fixed-width little-endian integer view so
// the file layout does not depend on host endianness.
template <typename S>
void put_scalars(std::ostream& os, const S* p, Index count) {
  using Bits = std::conditional_t<sizeof(S) == 4, std::uint32_t, std::uint64_t>;
  for (Index i = 0; i < count; ++i) {
    Bits bits;
    std::memcpy(&bits, &p[i], sizeof(S));
    if constexpr (sizeof(S) == 4)
      put_u32(os, bits);
    else
      put_u64(os, bits);
  }
}

template <typename S>
void get_scalars(std::istream& is, S* p, Index count) {
  using Bits = std::conditional_t<sizeof(S) == 4, std::uint32_t, std::uint64_t>;
  for (Index i = 0; i < count; ++i) {
    Bits bits;
    if constexpr (sizeof(S) == 4)
      bits = get_u32(is, "payload");
    else
      bits = get_u64(is, "payload");
    std::memcpy(&p[i], &bits, sizeof(S));
  }
}

}  // namespace detail

template <typename S>
void write(std::ostream& os, const Tensor<S>& t) {
  if (t.rank() < 1) throw FormatError("gvt: cannot write empty tensor");
  detail::put_bytes(os, kMagic, 4);
  detail::put_u32(os, kVersion);
  std::uint8_t dtype = dtype_code<S>();
  detail::put_bytes(os, &dtype, 1);
  std::uint8_t rank = static_cast<std::uint8_t>(t.rank());
  detail::put_bytes(os, &rank, 1);
  for (int i = 0; i < t.rank(); ++i)
    detail::put_u64(os, static_cast<std::uint64_t>(t.dim(i)));
  detail::put_scalars(os, t.data(), t.numel());
}

template <typename S>
void write_file(const std::string& path, const Tensor<S>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("gvt: cannot open " + path + " for writing");
  write(os, t);
}

// Header up to and including rank/extents; payload handled per dtype.
struct Header {
  std::uint8_t dtype = 0;
  Shape shape;
};

inline Header read_header(std::istream& is) {
  char magic[4];
  detail::get_bytes(is, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("gvt: bad magic bytes");
  std::uint32_t version = detail::get_u32(is, "version");
  if (version != kVersion)
    throw FormatError("gvt: unsupported version " + std::to_string(version));
  std::uint8_t dtype;
  detail::get_bytes(is, &dtype, 1, "dtype");
  if (dtype > 1)
    throw FormatError("gvt: unknown dtype code " + std::to_string(dtype));
  std::uint8_t rank;
  detail::get_bytes(is, &rank, 1, "rank");
  if (rank < 1 || rank > 4)
    throw FormatError("gvt: rank must be 1..4, got " + std::to_string(rank));
  std::vector<Index> extents(rank);
  for (int i = 0; i < rank; ++i) {
    std::uint64_t e = detail::get_u64(is, "extent");
    if (e < 1) throw FormatError("gvt: extent on axis " + std::to_string(i) +
                                 " must be >= 1");
    extents[i] = static_cast<Index>(e);
  }
  Header h;
  h.dtype = dtype;
  switch (rank) {
    case 1: h.shape = Shape{extents[0]}; break;
    case 2: h.shape = Shape{extents[0], extents[1]}; break;
    case 3: h.shape = Shape{extents[0], extents[1], extents[2]}; break;
    default:
      h.shape = Shape{extents[0], extents[1], extents[2], extents[3]};
  }
  return h;
}

// Strict typed read: dtype in the file must match S.
template <typename S>
Tensor<S> read(std::istream& is) {
  Header h = read_header(is);
  if (h.dtype != dtype_code<S>())
    throw FormatError("gvt: dtype mismatch: file holds " +
                      std::string(h.dtype == 0 ? "f32" : "f64"));
  Tensor<S> t(h.shape);
  detail::get_scalars(is, t.data(), t.numel());
  return t;
}

template <typename S>
Tensor<S> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("gvt: cannot open " + path);
  return read<S>(is);
}

using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

inline AnyTensor read_any(std::istream& is) {
  Header h = read_header(is);
  if (h.dtype == 0) {
    Tensor<float> t(h.shape);
    detail::get_scalars(is, t.data(), t.numel());
    return t;
  }
  Tensor<double> t(h.shape);
  detail::get_scalars(is, t.data(), t.numel());
  return t;
}

inline AnyTensor read_any_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("gvt: cannot open " + path);
  return read_any(is);
}

// Converting read: loads either dtype and casts elementwise to S.
template <typename S>
Tensor<S> read_as_file(const std::string& path) {
  AnyTensor any = read_any_file(path);
  if (auto* p = std::get_if<Tensor<S>>(&any)) return std::move(*p);
  return std::visit(
      [](const auto& t) {
        Tensor<S> out(t.shape());
        for (Index i = 0; i < t.numel(); ++i)
          out[i] = static_cast<S>(t[i]);
        return out;
      },
      any);
}

}  // namespace axialvig::gvt
