#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ethident/lw_aig.hpp"

namespace ethident {

// Edge statistic that ranks neighbours during TopK sampling.
enum class Indicator { Amount, Times, AvgAmount };

std::string_view indicator_name(Indicator i);    // "amount" | "times" | "avgAmount"
std::string_view indicator_suffix(Indicator i);  // "-A" | "-T" | "-aA"
Indicator parse_indicator(std::string_view name);

struct SamplingStrategy {
  Indicator indicator = Indicator::Amount;
  std::uint32_t hops = 2;     // h
  std::uint32_t fanout = 20;  // K

  bool operator==(const SamplingStrategy&) const = default;
};

double edge_score(const EdgeFeatures& f, Indicator indicator);

struct SubgraphEdge {
  std::uint32_t src = 0;  // local positions
  std::uint32_t dst = 0;
  EdgeFeatures features;

  bool operator==(const SubgraphEdge&) const = default;
};

// Induced neighbourhood of one target account. nodes[0] is the target; the
// remaining nodes are in ascending graph index. Edge endpoints are local.
struct AccountSubgraph {
  std::vector<NodeId> nodes;
  std::vector<SubgraphEdge> edges;
  std::vector<std::vector<FeatureEntry>> features;
  std::uint32_t feature_dim = 0;
  std::uint32_t label = 0;
  SamplingStrategy origin;

  NodeId target() const { return nodes.front(); }
  bool operator==(const AccountSubgraph&) const = default;
};

// Undirected neighbours of v (self excluded) scored by the connecting edge;
// a counterpart reached in both directions keeps the larger score. Sorted by
// node index.
std::vector<std::pair<NodeId, double>> scored_neighbors(const LwAig& graph, NodeId v, Indicator indicator);

// TopK neighbours: score descending, ties by ascending node index.
std::vector<NodeId> top_k_neighbors(const LwAig& graph, NodeId v, Indicator indicator, std::uint32_t k);

// Recursive h-hop TopK node set. Result holds the target first, then the other
// nodes ascending.
std::vector<NodeId> sample_neighborhood(const LwAig& graph, NodeId target, const SamplingStrategy& strategy);

// `nodes` must begin with the target; the order is kept.
AccountSubgraph induce_subgraph(const LwAig& graph, const std::vector<NodeId>& nodes, std::uint32_t label);

AccountSubgraph sample_subgraph(const LwAig& graph, NodeId target, const SamplingStrategy& strategy,
                                std::uint32_t label);

struct SubgraphDataset {
  std::string name;
  SamplingStrategy strategy;
  std::uint64_t seed = 0;
  std::vector<std::string> classes;
  std::uint32_t feature_dim = 0;
  std::vector<AccountSubgraph> subgraphs;

  bool operator==(const SubgraphDataset&) const = default;
};

// Binary dataset: every account labelled `positive_label` (class 1) plus an
// equal number (times negative_ratio) of other-labelled accounts drawn
// uniformly without replacement (class 0).
SubgraphDataset build_dataset(const LwAig& graph, const SamplingStrategy& strategy, const std::string& positive_label,
                              double negative_ratio, std::uint64_t seed);

// One class per distinct label, classes in lexicographic order.
SubgraphDataset build_multiclass_dataset(const LwAig& graph, const SamplingStrategy& strategy);

// Directory layout: meta.json + subgraphs.bin.
void save_dataset(const std::string& dir, const SubgraphDataset& dataset);
SubgraphDataset load_dataset(const std::string& dir);

}  // namespace ethident
