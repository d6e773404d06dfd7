#include "ethident/binary_io.hpp"

#include <array>
#include <bit>
#include <cstring>

#include "ethident/error.hpp"

namespace ethident::binary {
namespace {

template <std::size_t N>
void put_bytes(std::ostream& out, std::uint64_t v) {
  std::array<char, N> buf{};
  for (std::size_t i = 0; i < N; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(buf.data(), N);
}

template <std::size_t N>
std::uint64_t get_bytes(std::istream& in) {
  std::array<unsigned char, N> buf{};
  in.read(reinterpret_cast<char*>(buf.data()), N);
  if (!in) throw Error(ErrorKind::Format, "unexpected end of binary stream");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < N; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void put_u32(std::ostream& out, std::uint32_t v) { put_bytes<4>(out, v); }
void put_u64(std::ostream& out, std::uint64_t v) { put_bytes<8>(out, v); }

void put_amount(std::ostream& out, Amount v) {
  put_u64(out, static_cast<std::uint64_t>(v));
  put_u64(out, static_cast<std::uint64_t>(v >> 64));
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_string(std::ostream& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

std::uint32_t get_u32(std::istream& in) { return static_cast<std::uint32_t>(get_bytes<4>(in)); }
std::uint64_t get_u64(std::istream& in) { return get_bytes<8>(in); }

Amount get_amount(std::istream& in) {
  const Amount lo = get_u64(in);
  const Amount hi = get_u64(in);
  return lo | (hi << 64);
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

std::string get_string(std::istream& in) {
  const auto n = get_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw Error(ErrorKind::Format, "truncated string in binary stream");
  return s;
}

void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in || got != magic) throw Error(ErrorKind::Format, "bad magic, expected " + std::string(magic));
}

}  // namespace ethident::binary
