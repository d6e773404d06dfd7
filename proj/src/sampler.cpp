#include "ethident/sampler.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <unordered_map>

#include "ethident/binary_io.hpp"
#include "ethident/error.hpp"
#include "ethident/random.hpp"
#include "json.hpp"

namespace ethident {

std::string_view indicator_name(Indicator i) {
  switch (i) {
    case Indicator::Amount: return "amount";
    case Indicator::Times: return "times";
    case Indicator::AvgAmount: return "avgAmount";
  }
  return "amount";
}

std::string_view indicator_suffix(Indicator i) {
  switch (i) {
    case Indicator::Amount: return "-A";
    case Indicator::Times: return "-T";
    case Indicator::AvgAmount: return "-aA";
  }
  return "-A";
}

Indicator parse_indicator(std::string_view name) {
  if (name == "amount" || name == "A") return Indicator::Amount;
  if (name == "times" || name == "T") return Indicator::Times;
  if (name == "avgAmount" || name == "aA") return Indicator::AvgAmount;
  throw Error(ErrorKind::Config, "unknown sampling strategy '" + std::string(name) + "'");
}

double edge_score(const EdgeFeatures& f, Indicator indicator) {
  switch (indicator) {
    case Indicator::Amount: return amount_to_double(f.amount);
    case Indicator::Times: return static_cast<double>(f.times);
    case Indicator::AvgAmount:
      return f.times == 0 ? 0.0 : amount_to_double(f.amount) / static_cast<double>(f.times);
  }
  return 0.0;
}

std::vector<std::pair<NodeId, double>> scored_neighbors(const LwAig& graph, NodeId v, Indicator indicator) {
  const auto out = graph.out_edges(v);
  const auto in = graph.in_edges(v);
  const auto& edges = graph.edges();
  std::vector<std::pair<NodeId, double>> result;
  result.reserve(out.size() + in.size());
  std::size_t a = 0;
  std::size_t b = 0;
  while (a < out.size() || b < in.size()) {
    NodeId node;
    double score;
    if (b == in.size() || (a < out.size() && out[a].node < in[b].node)) {
      node = out[a].node;
      score = edge_score(edges[out[a++].edge].features, indicator);
    } else if (a == out.size() || in[b].node < out[a].node) {
      node = in[b].node;
      score = edge_score(edges[in[b++].edge].features, indicator);
    } else {
      node = out[a].node;
      score = std::max(edge_score(edges[out[a++].edge].features, indicator),
                       edge_score(edges[in[b++].edge].features, indicator));
    }
    if (node != v) result.emplace_back(node, score);
  }
  return result;
}

std::vector<NodeId> top_k_neighbors(const LwAig& graph, NodeId v, Indicator indicator, std::uint32_t k) {
  auto scored = scored_neighbors(graph, v, indicator);
  const auto take = std::min<std::size_t>(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(),
                    [](const auto& x, const auto& y) { return x.second != y.second ? x.second > y.second : x.first < y.first; });
  std::vector<NodeId> out(take);
  for (std::size_t i = 0; i < take; ++i) out[i] = scored[i].first;
  return out;
}

std::vector<NodeId> sample_neighborhood(const LwAig& graph, NodeId target, const SamplingStrategy& strategy) {
  if (target >= graph.eoa_count()) {
    throw Error(ErrorKind::UnknownNode, "target " + std::to_string(target) + " is not a node of the graph");
  }
  std::set<NodeId> selected{target};
  std::vector<NodeId> frontier{target};
  for (std::uint32_t hop = 0; hop < strategy.hops && !frontier.empty(); ++hop) {
    std::set<NodeId> next;
    for (NodeId v : frontier) {
      for (NodeId u : top_k_neighbors(graph, v, strategy.indicator, strategy.fanout)) next.insert(u);
    }
    selected.insert(next.begin(), next.end());
    frontier.assign(next.begin(), next.end());
  }
  std::vector<NodeId> nodes{target};
  for (NodeId v : selected) {
    if (v != target) nodes.push_back(v);
  }
  return nodes;
}

AccountSubgraph induce_subgraph(const LwAig& graph, const std::vector<NodeId>& nodes, std::uint32_t label) {
  AccountSubgraph sg;
  sg.nodes = nodes;
  sg.label = label;
  sg.feature_dim = static_cast<std::uint32_t>(graph.ca_count());
  std::unordered_map<NodeId, std::uint32_t> local;
  local.reserve(nodes.size() * 2);
  for (std::uint32_t i = 0; i < nodes.size(); ++i) local.emplace(nodes[i], i);
  const auto& edges = graph.edges();
  for (std::uint32_t i = 0; i < nodes.size(); ++i) {
    for (const auto& inc : graph.out_edges(nodes[i])) {
      auto it = local.find(inc.node);
      if (it != local.end()) sg.edges.push_back({i, it->second, edges[inc.edge].features});
    }
  }
  sg.features.reserve(nodes.size());
  for (NodeId v : nodes) {
    const auto row = graph.node_features(v);
    sg.features.emplace_back(row.begin(), row.end());
  }
  return sg;
}

AccountSubgraph sample_subgraph(const LwAig& graph, NodeId target, const SamplingStrategy& strategy,
                                std::uint32_t label) {
  auto sg = induce_subgraph(graph, sample_neighborhood(graph, target, strategy), label);
  sg.origin = strategy;
  return sg;
}

SubgraphDataset build_dataset(const LwAig& graph, const SamplingStrategy& strategy, const std::string& positive_label,
                              double negative_ratio, std::uint64_t seed) {
  std::vector<NodeId> positives;
  std::vector<NodeId> others;
  for (const auto& [node, label] : graph.labels()) (label == positive_label ? positives : others).push_back(node);
  if (positives.empty()) {
    throw Error(ErrorKind::InsufficientNegatives, "no account carries label " + positive_label);
  }
  const auto wanted = static_cast<std::size_t>(std::llround(negative_ratio * static_cast<double>(positives.size())));
  if (others.size() < wanted) {
    throw Error(ErrorKind::InsufficientNegatives, "need " + std::to_string(wanted) + " negatives for " +
                                                      positive_label + ", only " + std::to_string(others.size()) +
                                                      " other-labelled accounts");
  }
  Rng rng(seed);
  for (std::size_t i = 0; i < wanted; ++i) std::swap(others[i], others[i + rng.below(others.size() - i)]);
  others.resize(wanted);
  std::sort(others.begin(), others.end());

  SubgraphDataset ds;
  ds.name = positive_label;
  ds.strategy = strategy;
  ds.seed = seed;
  ds.classes = {"other", positive_label};
  ds.feature_dim = static_cast<std::uint32_t>(graph.ca_count());
  for (NodeId v : positives) ds.subgraphs.push_back(sample_subgraph(graph, v, strategy, 1));
  for (NodeId v : others) ds.subgraphs.push_back(sample_subgraph(graph, v, strategy, 0));
  return ds;
}

SubgraphDataset build_multiclass_dataset(const LwAig& graph, const SamplingStrategy& strategy) {
  std::set<std::string> names;
  for (const auto& [node, label] : graph.labels()) names.insert(label);
  SubgraphDataset ds;
  ds.name = "all";
  ds.strategy = strategy;
  ds.classes.assign(names.begin(), names.end());
  ds.feature_dim = static_cast<std::uint32_t>(graph.ca_count());
  for (const auto& [node, label] : graph.labels()) {
    const auto cls = static_cast<std::uint32_t>(std::distance(names.begin(), names.find(label)));
    ds.subgraphs.push_back(sample_subgraph(graph, node, strategy, cls));
  }
  return ds;
}

namespace {
constexpr std::string_view kDatasetMagic = "SUBGR1";
}

void save_dataset(const std::string& dir, const SubgraphDataset& dataset) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json meta;
  meta["name"] = dataset.name;
  meta["strategy"] = indicator_name(dataset.strategy.indicator);
  meta["suffix"] = indicator_suffix(dataset.strategy.indicator);
  meta["h"] = dataset.strategy.hops;
  meta["K"] = dataset.strategy.fanout;
  meta["seed"] = dataset.seed;
  meta["classes"] = dataset.classes;
  meta["feature_dim"] = dataset.feature_dim;
  meta["count"] = dataset.subgraphs.size();
  {
    std::ofstream out(fs::path(dir) / "meta.json");
    if (!out) throw Error(ErrorKind::Io, "cannot write " + dir + "/meta.json");
    out << meta.dump(2) << '\n';
  }
  std::ofstream out(fs::path(dir) / "subgraphs.bin", std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + dir + "/subgraphs.bin");
  using namespace binary;
  put_magic(out, kDatasetMagic);
  put_u64(out, dataset.subgraphs.size());
  for (const auto& sg : dataset.subgraphs) {
    put_u32(out, sg.label);
    put_u32(out, static_cast<std::uint32_t>(sg.nodes.size()));
    for (NodeId v : sg.nodes) put_u32(out, v);
    put_u32(out, static_cast<std::uint32_t>(sg.edges.size()));
    for (const auto& e : sg.edges) {
      put_u32(out, e.src);
      put_u32(out, e.dst);
      put_u64(out, e.features.times);
      put_amount(out, e.features.amount);
    }
    for (const auto& row : sg.features) {
      put_u32(out, static_cast<std::uint32_t>(row.size()));
      for (const auto& entry : row) {
        put_u32(out, entry.column);
        put_u64(out, entry.count);
      }
    }
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing dataset " + dir);
}

SubgraphDataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream meta_in(fs::path(dir) / "meta.json");
  if (!meta_in) throw Error(ErrorKind::Io, "cannot open " + dir + "/meta.json");
  SubgraphDataset ds;
  try {
    const auto meta = nlohmann::json::parse(meta_in);
    ds.name = meta.at("name").get<std::string>();
    ds.strategy.indicator = parse_indicator(meta.at("strategy").get<std::string>());
    ds.strategy.hops = meta.at("h").get<std::uint32_t>();
    ds.strategy.fanout = meta.at("K").get<std::uint32_t>();
    ds.seed = meta.at("seed").get<std::uint64_t>();
    ds.classes = meta.at("classes").get<std::vector<std::string>>();
    ds.feature_dim = meta.at("feature_dim").get<std::uint32_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, "bad meta.json in " + dir + ": " + e.what());
  }
  std::ifstream in(fs::path(dir) / "subgraphs.bin", std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + dir + "/subgraphs.bin");
  using namespace binary;
  expect_magic(in, kDatasetMagic);
  const auto count = get_u64(in);
  ds.subgraphs.reserve(count);
  for (std::uint64_t s = 0; s < count; ++s) {
    AccountSubgraph sg;
    sg.feature_dim = ds.feature_dim;
    sg.origin = ds.strategy;
    sg.label = get_u32(in);
    if (sg.label >= ds.classes.size()) throw Error(ErrorKind::Format, "subgraph label out of range");
    sg.nodes.resize(get_u32(in));
    if (sg.nodes.empty()) throw Error(ErrorKind::Format, "subgraph without target");
    for (auto& v : sg.nodes) v = get_u32(in);
    sg.edges.resize(get_u32(in));
    for (auto& e : sg.edges) {
      e.src = get_u32(in);
      e.dst = get_u32(in);
      e.features.times = get_u64(in);
      e.features.amount = get_amount(in);
      if (e.src >= sg.nodes.size() || e.dst >= sg.nodes.size()) throw Error(ErrorKind::Format, "edge endpoint out of range");
    }
    sg.features.resize(sg.nodes.size());
    for (auto& row : sg.features) {
      row.resize(get_u32(in));
      for (auto& entry : row) {
        entry.column = get_u32(in);
        entry.count = get_u64(in);
        if (entry.column >= ds.feature_dim) throw Error(ErrorKind::Format, "feature column out of range");
      }
    }
    ds.subgraphs.push_back(std::move(sg));
  }
  return ds;
}

}  // namespace ethident
