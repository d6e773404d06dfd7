#include "ethident/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "ethident/error.hpp"
#include "ethident/random.hpp"

namespace ethident {

const char* archetype_label(Archetype a) {
  switch (a) {
    case Archetype::Exchange: return "exchange";
    case Archetype::Ico: return "ico";
    case Archetype::Mining: return "mining";
    case Archetype::Phish: return "phish";
  }
  return "?";
}

SyntheticSpec SyntheticSpec::defaults(std::uint32_t per_class) {
  SyntheticSpec s;
  // hub: many counterparties both ways, repeated interactions
  s.exchange = {per_class, 25, 60, 25, 60, 3, 12, 2.0, 1.2, 2.0, 1.2, false, 10, 40, 6, 0.8};
  // fan-out of moderate rewards after a few large investments
  s.ico = {per_class, 3, 8, 25, 60, 1, 1, 20.0, 0.8, 3.0, 0.3, false, 2, 10, 6, 0.8};
  // regular payouts of a stable size
  s.mining = {per_class, 0, 2, 25, 60, 2, 8, 5.0, 0.5, 0.8, 0.01, true, 0, 4, 6, 0.8};
  // sink: many small similar deposits, nothing out
  s.phish = {per_class, 20, 50, 0, 1, 1, 2, 0.3, 0.15, 0.5, 0.5, false, 0, 3, 6, 0.8};
  return s;
}

ArchetypeSpec& SyntheticSpec::archetype(Archetype a) {
  switch (a) {
    case Archetype::Exchange: return exchange;
    case Archetype::Ico: return ico;
    case Archetype::Mining: return mining;
    case Archetype::Phish: return phish;
  }
  return exchange;
}

const ArchetypeSpec& SyntheticSpec::archetype(Archetype a) const {
  return const_cast<SyntheticSpec*>(this)->archetype(a);
}

namespace {

std::string account_id(std::uint32_t kind, std::uint64_t index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "0x%02x%038llx", kind, static_cast<unsigned long long>(index));
  return buf;
}

Amount to_wei(double ether) {
  ether = std::max(ether, 1e-9);
  return static_cast<Amount>(std::llround(ether * 1e9)) * static_cast<Amount>(1'000'000'000ULL);
}

struct Generator {
  const SyntheticSpec& spec;
  Rng rng;
  std::vector<InteractionRecord> records;
  std::uint64_t block = 1;

  std::int64_t timestamp() {
    return spec.start_timestamp + static_cast<std::int64_t>(rng.below(std::uint64_t{spec.span_days} * 86400));
  }

  std::uint32_t between(std::uint32_t lo, std::uint32_t hi) {
    return hi <= lo ? lo : lo + static_cast<std::uint32_t>(rng.below(hi - lo + 1));
  }

  double lognormal(double mean, double sigma) { return mean * std::exp(sigma * rng.normal() - 0.5 * sigma * sigma); }

  void transfer(const std::string& from, const std::string& to, double ether) {
    InteractionRecord r;
    r.block_number = block++;
    r.timestamp = timestamp();
    r.from = from;
    r.to = to;
    r.value = to_wei(ether);
    records.push_back(std::move(r));
  }

  void call(const std::string& from, const std::string& contract) {
    InteractionRecord r;
    r.block_number = block++;
    r.timestamp = timestamp();
    r.from = from;
    r.to = contract;
    r.to_is_contract = true;
    r.calling_function = "0x" + contract.substr(contract.size() - 8);
    records.push_back(std::move(r));
  }

  // k distinct values of [0, n)
  std::vector<std::uint32_t> distinct(std::uint32_t k, std::uint32_t n) {
    k = std::min(k, n);
    std::vector<std::uint32_t> picked;
    picked.reserve(k);
    while (picked.size() < k) {
      const auto v = static_cast<std::uint32_t>(rng.below(n));
      if (std::find(picked.begin(), picked.end(), v) == picked.end()) picked.push_back(v);
    }
    return picked;
  }
};

}  // namespace

SyntheticData gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  if (spec.background_accounts < 2) throw Error(ErrorKind::Config, "synthetic spec needs at least 2 background accounts");
  if (spec.contracts < 1) throw Error(ErrorKind::Config, "synthetic spec needs at least one contract");
  for (auto a : kArchetypes) {
    const auto& t = spec.archetype(a);
    if (t.in_degree_min > t.in_degree_max || t.out_degree_min > t.out_degree_max || t.times_min > t.times_max ||
        t.calls_min > t.calls_max || t.times_min < 1) {
      throw Error(ErrorKind::Config, std::string("inconsistent ranges for archetype ") + archetype_label(a));
    }
    const auto pool = static_cast<std::uint64_t>(spec.background_accounts);
    if (t.in_degree_max + t.out_degree_max > pool) {
      throw Error(ErrorKind::Config, std::string("not enough background accounts for ") + archetype_label(a));
    }
  }

  Generator gen{spec, Rng(seed), {}};
  const std::uint32_t n_bg = spec.background_accounts;
  std::vector<std::string> background(n_bg);
  for (std::uint32_t i = 0; i < n_bg; ++i) background[i] = account_id(0, i);
  std::vector<std::string> contracts(spec.contracts);
  for (std::uint32_t i = 0; i < spec.contracts; ++i) contracts[i] = account_id(0xca, i);

  std::array<std::vector<std::uint32_t>, kArchetypes.size()> preferred;
  for (auto a : kArchetypes) {
    preferred[static_cast<std::size_t>(a)] = gen.distinct(spec.archetype(a).preferred_contracts, spec.contracts);
  }
  const auto community_size = static_cast<std::uint32_t>(
      std::clamp(spec.community_share, 0.0, 1.0) * n_bg / static_cast<double>(kArchetypes.size()));
  auto community_of = [&](std::uint32_t b) -> int {
    if (community_size == 0 || b >= community_size * kArchetypes.size()) return -1;
    return static_cast<int>(b / community_size);
  };
  auto pick_contract = [&](int community, double preference) {
    if (community >= 0) {
      const auto& pref = preferred[static_cast<std::size_t>(community)];
      if (!pref.empty() && gen.rng.bernoulli(preference)) return pref[gen.rng.below(pref.size())];
    }
    return static_cast<std::uint32_t>(gen.rng.below(spec.contracts));
  };

  for (std::uint32_t i = 0; i < spec.background_transactions; ++i) {
    const auto a = static_cast<std::uint32_t>(gen.rng.below(n_bg));
    auto b = static_cast<std::uint32_t>(gen.rng.below(n_bg - 1));
    if (b >= a) ++b;
    gen.transfer(background[a], background[b], gen.lognormal(1.0, 1.5));
  }
  for (std::uint32_t i = 0; i < spec.background_calls; ++i) {
    const auto b = static_cast<std::uint32_t>(gen.rng.below(n_bg));
    const int community = community_of(b);
    const double preference = community >= 0 ? spec.archetype(kArchetypes[community]).preference : 0.0;
    gen.call(background[b], contracts[pick_contract(community, preference)]);
  }

  SyntheticData data;
  std::uint64_t labelled = 0;
  for (auto a : kArchetypes) {
    const auto& t = spec.archetype(a);
    const auto index = static_cast<std::uint32_t>(a);
    for (std::uint32_t k = 0; k < t.count; ++k) {
      const std::string self = account_id(1 + index, labelled++);
      data.labels.emplace_back(self, archetype_label(a));
      const auto in_deg = gen.between(t.in_degree_min, t.in_degree_max);
      const auto out_deg = gen.between(t.out_degree_min, t.out_degree_max);
      std::vector<std::uint32_t> peers;
      while (peers.size() < in_deg + out_deg) {
        const auto v = community_size > 0 && gen.rng.bernoulli(spec.affinity)
                           ? index * community_size + static_cast<std::uint32_t>(gen.rng.below(community_size))
                           : static_cast<std::uint32_t>(gen.rng.below(n_bg));
        if (std::find(peers.begin(), peers.end(), v) == peers.end()) peers.push_back(v);
      }
      // Mining pools pay every miner roughly the same share.
      const double payout = t.out_amount_mean;
      for (std::uint32_t p = 0; p < peers.size(); ++p) {
        const auto times = gen.between(t.times_min, t.times_max);
        for (std::uint32_t r = 0; r < times; ++r) {
          if (p < in_deg) {
            gen.transfer(background[peers[p]], self, gen.lognormal(t.in_amount_mean, t.in_amount_sigma));
          } else if (t.out_amount_absolute) {
            gen.transfer(self, background[peers[p]], payout + t.out_amount_sigma * gen.rng.normal());
          } else {
            gen.transfer(self, background[peers[p]], gen.lognormal(t.out_amount_mean, t.out_amount_sigma));
          }
        }
      }
      const auto calls = gen.between(t.calls_min, t.calls_max);
      for (std::uint32_t c = 0; c < calls; ++c) {
        gen.call(self, contracts[pick_contract(static_cast<int>(index), t.preference)]);
      }
    }
  }

  // Interleave so record order carries no class signal.
  gen.rng.shuffle(gen.records);
  std::stable_sort(gen.records.begin(), gen.records.end(),
            [](const InteractionRecord& x, const InteractionRecord& y) { return x.timestamp < y.timestamp; });
  for (std::size_t i = 0; i < gen.records.size(); ++i) gen.records[i].block_number = 1 + i;
  data.records = std::move(gen.records);
  data.graph = attach_labels(build_lw_aig(data.records), data.labels).graph;
  return data;
}

}  // namespace ethident
