#include "ethident/amount.hpp"

#include <algorithm>

namespace ethident {

std::optional<Amount> parse_amount(std::string_view text) {
  if (text.empty()) return std::nullopt;
  constexpr Amount kMax = ~Amount{0};
  Amount value = 0;
  for (char c : text) {
    if (c < '0' || c > '9') return std::nullopt;
    const auto digit = static_cast<unsigned>(c - '0');
    if (value > (kMax - digit) / 10) return std::nullopt;
    value = value * 10 + digit;
  }
  return value;
}

std::string format_amount(Amount value) {
  if (value == 0) return "0";
  std::string out;
  while (value > 0) {
    out.push_back(static_cast<char>('0' + static_cast<int>(value % 10)));
    value /= 10;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

double amount_to_double(Amount value) {
  const auto hi = static_cast<unsigned long long>(value >> 64);
  const auto lo = static_cast<unsigned long long>(value);
  return static_cast<double>(hi) * 18446744073709551616.0 + static_cast<double>(lo);
}

}  // namespace ethident
