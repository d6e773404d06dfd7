#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ethident/lw_aig.hpp"
#include "ethident/records.hpp"

namespace ethident {

enum class Archetype { Exchange, Ico, Mining, Phish };
inline constexpr std::array<Archetype, 4> kArchetypes = {Archetype::Exchange, Archetype::Ico, Archetype::Mining,
                                                         Archetype::Phish};
const char* archetype_label(Archetype a);  // "exchange", "ico", "mining", "phish"

// Per-archetype template. Degrees count distinct counterparties, so they
// survive interaction merging unchanged. Amounts are per transaction in Ether.
struct ArchetypeSpec {
  std::uint32_t count = 0;
  std::uint32_t in_degree_min = 0, in_degree_max = 0;
  std::uint32_t out_degree_min = 0, out_degree_max = 0;
  std::uint32_t times_min = 1, times_max = 1;  // transactions per counterparty
  double in_amount_mean = 1.0, in_amount_sigma = 0.5;  // lognormal around the mean
  double out_amount_mean = 1.0;
  double out_amount_sigma = 0.5;
  bool out_amount_absolute = false;  // out sigma in Ether instead of lognormal
  std::uint32_t calls_min = 0, calls_max = 0;
  std::uint32_t preferred_contracts = 6;
  double preference = 0.8;  // share of calls that go to the preferred contracts
};

struct SyntheticSpec {
  ArchetypeSpec exchange;
  ArchetypeSpec ico;
  ArchetypeSpec mining;
  ArchetypeSpec phish;
  std::uint32_t background_accounts = 4000;
  std::uint32_t background_transactions = 10000;
  std::uint32_t background_calls = 3000;
  // Part of the background split into one community per archetype. Community
  // members share the archetype's contract preferences and are drawn as its
  // counterparties with probability `affinity`.
  double community_share = 0.6;
  double affinity = 0.8;
  std::uint32_t contracts = 64;
  std::int64_t start_timestamp = 1'500'000'000;
  std::uint32_t span_days = 180;

  // Documented defaults with the given number of accounts per archetype.
  static SyntheticSpec defaults(std::uint32_t per_class = 50);
  ArchetypeSpec& archetype(Archetype a);
  const ArchetypeSpec& archetype(Archetype a) const;
};

struct SyntheticData {
  std::vector<InteractionRecord> records;
  std::vector<std::pair<std::string, std::string>> labels;  // account, archetype label
  LwAig graph;  // labelled
};

SyntheticData gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

}  // namespace ethident
