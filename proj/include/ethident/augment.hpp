#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "ethident/sampler.hpp"

namespace ethident {

enum class AugmentKind { Identity, NodeDrop, EdgeRemove, NodeAttrMask, EdgeAttrMask, Resample };

inline constexpr double kDefaultPerturbation = 0.10;

struct AugmentOp {
  AugmentKind kind = AugmentKind::Identity;
  double probability = kDefaultPerturbation;
  // Resample only; defaults to the strategy following the origin one in
  // lexicographic name order (amount -> avgAmount -> times -> amount).
  std::optional<Indicator> resample_to;

  bool operator==(const AugmentOp&) const = default;
};

std::string augment_name(const AugmentOp& op);
// Accepts identity, nodeDrop, edgeRemove, nodeAttrMask, edgeAttrMask,
// resample, resample:<strategy>.
AugmentOp parse_augment(std::string_view name, double probability = kDefaultPerturbation);
// "op1&op2" (also accepts "op1,op2").
std::pair<AugmentOp, AugmentOp> parse_augment_pair(std::string_view spec, double probability = kDefaultPerturbation);
std::string augment_pair_name(const AugmentOp& first, const AugmentOp& second);

Indicator default_resample_target(Indicator origin);

// Pure function of (op, subgraph, seed). The target survives every operator
// and the label is carried over as the view's pseudo-label.
AccountSubgraph apply_augment(const AugmentOp& op, const AccountSubgraph& subgraph, std::uint64_t seed,
                              const LwAig* graph = nullptr);

struct ViewPair {
  AccountSubgraph first;
  AccountSubgraph second;
};

ViewPair make_view_pair(const AccountSubgraph& subgraph, const AugmentOp& first, const AugmentOp& second,
                        std::uint64_t seed, const LwAig* graph = nullptr);

}  // namespace ethident
