#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ethident/autodiff.hpp"
#include "ethident/lw_aig.hpp"
#include "ethident/random.hpp"
#include "ethident/records.hpp"
#include "ethident/sampler.hpp"

namespace testing {

using namespace ethident;

inline InteractionRecord tx(const std::string& from, const std::string& to, Amount value, std::int64_t ts = 100) {
  InteractionRecord r;
  r.block_number = 1;
  r.timestamp = ts;
  r.from = from;
  r.to = to;
  r.value = value;
  return r;
}

inline InteractionRecord call(const std::string& from, const std::string& contract, std::int64_t ts = 100,
                              Amount value = 0) {
  InteractionRecord r = tx(from, contract, value, ts);
  r.to_is_contract = true;
  r.calling_function = "transfer";
  return r;
}

// Random mix of transfers, self transfers, zero values, calls, CA-initiated rows.
inline std::vector<InteractionRecord> random_records(std::size_t count, std::uint32_t accounts, std::uint32_t contracts,
                                                     std::uint64_t seed) {
  Rng rng(seed);
  std::vector<InteractionRecord> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto a = "e" + std::to_string(rng.below(accounts));
    const double u = rng.uniform();
    if (u < 0.65) {
      const auto b = "e" + std::to_string(rng.below(accounts));
      Amount v = rng.bernoulli(0.1) ? 0 : static_cast<Amount>(rng.next()) * 1000u + rng.below(1000);
      out.push_back(tx(a, b, v, 1 + static_cast<std::int64_t>(rng.below(1'000'000))));
    } else if (u < 0.85) {
      out.push_back(call(a, "c" + std::to_string(rng.below(contracts)), 1 + static_cast<std::int64_t>(rng.below(1000))));
    } else if (u < 0.93) {
      auto r = tx("c" + std::to_string(rng.below(contracts)), a, rng.below(100000));
      r.from_is_contract = true;
      out.push_back(r);
    } else {
      auto r = tx(a, "c" + std::to_string(rng.below(contracts)), rng.below(100000));
      r.to_is_contract = true;  // plain transfer into a contract
      out.push_back(r);
    }
  }
  return out;
}

// Random LwAig over n nodes with unique directed edges and sparse features.
inline LwAig random_graph(std::uint32_t n, double edge_prob, std::uint32_t features, std::uint64_t seed,
                          bool integer_scores = false) {
  Rng rng(seed);
  AccountTable eoas;
  for (std::uint32_t i = 0; i < n; ++i) eoas.intern("n" + std::to_string(i));
  AccountTable cas;
  for (std::uint32_t j = 0; j < features; ++j) cas.intern("c" + std::to_string(j));
  std::vector<LwAig::Edge> edges;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < n; ++j) {
      if (!rng.bernoulli(edge_prob)) continue;
      EdgeFeatures f;
      f.times = 1 + rng.below(integer_scores ? 4 : 50);
      f.amount = integer_scores ? static_cast<Amount>(rng.below(6)) : static_cast<Amount>(rng.below(1'000'000'000));
      edges.push_back({i, j, f});
    }
  }
  std::vector<std::vector<FeatureEntry>> rows(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < features; ++j) {
      if (rng.bernoulli(0.3)) rows[i].push_back({j, 1 + rng.below(5)});
    }
  }
  return LwAig::from_parts(std::move(eoas), std::move(cas), std::move(edges), std::move(rows));
}

// Central differences of a scalar function of one matrix, compared with an
// analytic gradient: max |a - n| / max(1, |n|).
inline double gradient_error(ad::Matrix& x, const std::function<double()>& f, const ad::Matrix& analytic,
                             double eps = 1e-5) {
  double worst = 0.0;
  for (ad::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + eps;
    const double up = f();
    x.data()[i] = keep - eps;
    const double down = f();
    x.data()[i] = keep;
    const double numeric = (up - down) / (2 * eps);
    worst = std::max(worst, std::abs(analytic.data()[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

inline ad::Matrix random_matrix(ad::Index rows, ad::Index cols, Rng& rng, double scale = 1.0) {
  ad::Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace testing
