#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "ethident/amount.hpp"

// Little-endian primitives shared by the snapshot, dataset and checkpoint
// formats.
namespace ethident::binary {

void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_amount(std::ostream& out, Amount v);
void put_f64(std::ostream& out, double v);
void put_string(std::ostream& out, std::string_view s);
void put_magic(std::ostream& out, std::string_view magic);

std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);
Amount get_amount(std::istream& in);
double get_f64(std::istream& in);
std::string get_string(std::istream& in);
// Throws Error(Format) when the next bytes differ from `magic`.
void expect_magic(std::istream& in, std::string_view magic);

}  // namespace ethident::binary
