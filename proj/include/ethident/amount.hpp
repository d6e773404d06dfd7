#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace ethident {

// Wei-denominated amount. 128 bits covers every on-chain value with room
// for summing hundreds of millions of transactions exactly.
using Amount = unsigned __int128;

inline constexpr double kWeiPerEther = 1e18;

// Parses a non-negative decimal integer. Returns nullopt on empty input, any
// non-digit character, or overflow.
std::optional<Amount> parse_amount(std::string_view text);

std::string format_amount(Amount value);

double amount_to_double(Amount value);

inline double amount_to_ether(Amount value) { return amount_to_double(value) / kWeiPerEther; }

}  // namespace ethident
