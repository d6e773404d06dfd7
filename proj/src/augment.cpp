#include "ethident/augment.hpp"

#include <algorithm>

#include "ethident/error.hpp"
#include "ethident/random.hpp"

namespace ethident {

std::string augment_name(const AugmentOp& op) {
  switch (op.kind) {
    case AugmentKind::Identity: return "identity";
    case AugmentKind::NodeDrop: return "nodeDrop";
    case AugmentKind::EdgeRemove: return "edgeRemove";
    case AugmentKind::NodeAttrMask: return "nodeAttrMask";
    case AugmentKind::EdgeAttrMask: return "edgeAttrMask";
    case AugmentKind::Resample:
      return op.resample_to ? "resample:" + std::string(indicator_name(*op.resample_to)) : "resample";
  }
  return "identity";
}

AugmentOp parse_augment(std::string_view name, double probability) {
  AugmentOp op;
  op.probability = probability;
  if (name == "identity") {
    op.kind = AugmentKind::Identity;
  } else if (name == "nodeDrop") {
    op.kind = AugmentKind::NodeDrop;
  } else if (name == "edgeRemove") {
    op.kind = AugmentKind::EdgeRemove;
  } else if (name == "nodeAttrMask") {
    op.kind = AugmentKind::NodeAttrMask;
  } else if (name == "edgeAttrMask") {
    op.kind = AugmentKind::EdgeAttrMask;
  } else if (name == "resample") {
    op.kind = AugmentKind::Resample;
  } else if (name.starts_with("resample:")) {
    op.kind = AugmentKind::Resample;
    op.resample_to = parse_indicator(name.substr(9));
  } else {
    throw Error(ErrorKind::Config, "unknown augmentation '" + std::string(name) + "'");
  }
  if (probability < 0.0 || probability > 1.0) throw Error(ErrorKind::Config, "augmentation probability outside [0,1]");
  return op;
}

std::pair<AugmentOp, AugmentOp> parse_augment_pair(std::string_view spec, double probability) {
  auto split = spec.find('&');
  if (split == std::string_view::npos) split = spec.find(',');
  if (split == std::string_view::npos) {
    throw Error(ErrorKind::Config, "augmentation pair must look like op1&op2, got '" + std::string(spec) + "'");
  }
  return {parse_augment(spec.substr(0, split), probability), parse_augment(spec.substr(split + 1), probability)};
}

std::string augment_pair_name(const AugmentOp& first, const AugmentOp& second) {
  return augment_name(first) + "&" + augment_name(second);
}

Indicator default_resample_target(Indicator origin) {
  switch (origin) {
    case Indicator::Amount: return Indicator::AvgAmount;
    case Indicator::AvgAmount: return Indicator::Times;
    case Indicator::Times: return Indicator::Amount;
  }
  return Indicator::Amount;
}

namespace {

AccountSubgraph drop_nodes(const AccountSubgraph& in, double p, Rng& rng) {
  std::vector<std::int64_t> remap(in.nodes.size(), -1);
  AccountSubgraph out;
  out.feature_dim = in.feature_dim;
  out.label = in.label;
  out.origin = in.origin;
  for (std::size_t i = 0; i < in.nodes.size(); ++i) {
    const bool drop = rng.bernoulli(p);
    if (i == 0 || !drop) {
      remap[i] = static_cast<std::int64_t>(out.nodes.size());
      out.nodes.push_back(in.nodes[i]);
      out.features.push_back(in.features[i]);
    }
  }
  for (const auto& e : in.edges) {
    if (remap[e.src] >= 0 && remap[e.dst] >= 0) {
      out.edges.push_back(
          {static_cast<std::uint32_t>(remap[e.src]), static_cast<std::uint32_t>(remap[e.dst]), e.features});
    }
  }
  return out;
}

}  // namespace

AccountSubgraph apply_augment(const AugmentOp& op, const AccountSubgraph& subgraph, std::uint64_t seed,
                              const LwAig* graph) {
  Rng rng(seed);
  const double p = op.probability;
  switch (op.kind) {
    case AugmentKind::Identity: return subgraph;
    case AugmentKind::NodeDrop: return drop_nodes(subgraph, p, rng);
    case AugmentKind::EdgeRemove: {
      AccountSubgraph out = subgraph;
      out.edges.clear();
      for (const auto& e : subgraph.edges) {
        if (!rng.bernoulli(p)) out.edges.push_back(e);
      }
      return out;
    }
    case AugmentKind::NodeAttrMask: {
      // Zero entries stay zero under masking, so only stored entries draw.
      AccountSubgraph out = subgraph;
      for (auto& row : out.features) {
        std::erase_if(row, [&](const FeatureEntry&) { return rng.bernoulli(p); });
      }
      return out;
    }
    case AugmentKind::EdgeAttrMask: {
      AccountSubgraph out = subgraph;
      for (auto& e : out.edges) {
        if (rng.bernoulli(p)) e.features.times = 0;
        if (rng.bernoulli(p)) e.features.amount = 0;
      }
      return out;
    }
    case AugmentKind::Resample: {
      if (graph == nullptr) {
        throw Error(ErrorKind::ResampleWithoutGraph, "resample augmentation needs the originating graph");
      }
      SamplingStrategy strategy = subgraph.origin;
      strategy.indicator = op.resample_to.value_or(default_resample_target(subgraph.origin.indicator));
      auto out = sample_subgraph(*graph, subgraph.target(), strategy, subgraph.label);
      out.origin = subgraph.origin;
      return out;
    }
  }
  return subgraph;
}

ViewPair make_view_pair(const AccountSubgraph& subgraph, const AugmentOp& first, const AugmentOp& second,
                        std::uint64_t seed, const LwAig* graph) {
  return {apply_augment(first, subgraph, derive_seed(seed, 1), graph),
          apply_augment(second, subgraph, derive_seed(seed, 2), graph)};
}

}  // namespace ethident
