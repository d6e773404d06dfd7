#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <filesystem>

#include "ethident/error.hpp"
#include "ethident/sampler.hpp"
#include "oracles.hpp"

using namespace ethident;
using testing::tx;

namespace {

NodeId id(const LwAig& g, const std::string& key) { return *g.eoas().find(key); }

std::set<std::string> keys(const LwAig& g, const std::vector<NodeId>& nodes) {
  std::set<std::string> out;
  for (NodeId v : nodes) out.insert(g.eoas().key(v));
  return out;
}

LwAig star(std::uint32_t leaves) {
  std::vector<InteractionRecord> recs;
  for (std::uint32_t i = 0; i < leaves; ++i) recs.push_back(tx("t", "l" + std::to_string(i), 1 + i));
  return build_lw_aig(recs);
}

LwAig labelled(std::size_t positives, std::size_t others) {
  std::vector<InteractionRecord> recs;
  std::vector<std::pair<std::string, std::string>> labels;
  for (std::size_t i = 0; i < positives + others; ++i) {
    const auto key = "a" + std::to_string(i);
    recs.push_back(tx(key, "hub", 1 + i));
    labels.push_back({key, i < positives ? "phish" : (i % 2 ? "exchange" : "ico")});
  }
  return attach_labels(build_lw_aig(recs), labels).graph;
}

}  // namespace

TEST_CASE("isolated target") {
  const auto g = build_lw_aig({tx("a", "a", 3), tx("b", "c", 1)});
  for (auto ind : {Indicator::Amount, Indicator::Times, Indicator::AvgAmount}) {
    CHECK(sample_neighborhood(g, id(g, "a"), {ind, 2, 5}) == std::vector<NodeId>{id(g, "a")});
  }
}

TEST_CASE("star with five amounts, K=3") {
  const auto g = build_lw_aig({tx("t", "n10", 10), tx("t", "n8", 8), tx("n6", "t", 6), tx("t", "n4", 4), tx("t", "n2", 2)});
  const auto nodes = sample_neighborhood(g, id(g, "t"), {Indicator::Amount, 1, 3});
  CHECK(nodes.front() == id(g, "t"));
  CHECK(keys(g, nodes) == std::set<std::string>{"t", "n10", "n8", "n6"});
}

TEST_CASE("two-hop chain with K=1") {
  const auto g = build_lw_aig({tx("a", "b", 1), tx("b", "c", 2)});
  CHECK(keys(g, sample_neighborhood(g, id(g, "a"), {Indicator::Amount, 2, 1})) == std::set<std::string>{"a", "b", "c"});
  // equal scores: b's single pick goes back to a
  const auto tied = build_lw_aig({tx("a", "b", 1), tx("b", "c", 1)});
  CHECK(keys(tied, sample_neighborhood(tied, id(tied, "a"), {Indicator::Times, 2, 1})) == std::set<std::string>{"a", "b"});
}

TEST_CASE("both directions keep the larger score") {
  // b: out 1, in 9 -> 9; c: 5
  const auto g = build_lw_aig({tx("a", "b", 1), tx("b", "a", 9), tx("a", "c", 5)});
  const auto top = top_k_neighbors(g, id(g, "a"), Indicator::Amount, 1);
  REQUIRE(top.size() == 1);
  CHECK(top[0] == id(g, "b"));
}

TEST_CASE("avgAmount and times scores") {
  CHECK(edge_score({4, 10}, Indicator::AvgAmount) == 2.5);
  CHECK(edge_score({4, 10}, Indicator::Times) == 4.0);
  CHECK(edge_score({4, 10}, Indicator::Amount) == 10.0);
}

TEST_CASE("ties break by ascending node index") {
  const auto g = build_lw_aig({tx("t", "x", 5), tx("t", "y", 5), tx("t", "z", 5)});
  const auto top = top_k_neighbors(g, id(g, "t"), Indicator::Amount, 2);
  CHECK(top == std::vector<NodeId>{id(g, "x"), id(g, "y")});
}

TEST_CASE("K above the neighbour count returns everyone") {
  const auto g = star(4);
  CHECK(sample_neighborhood(g, id(g, "t"), {Indicator::Amount, 1, 50}).size() == 5);
}

TEST_CASE("unknown target") {
  const auto g = star(2);
  try {
    sample_neighborhood(g, 99, {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::UnknownNode);
  }
}

TEST_CASE("brute-force oracle, monotonicity and size bound on 200 random graphs") {
  const auto start = std::chrono::steady_clock::now();
  std::size_t checked = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const std::uint32_t n = 10 + static_cast<std::uint32_t>(seed % 41);
    const auto g = testing::random_graph(n, 3.0 / n, 2, seed, seed % 2 == 0);
    for (auto ind : {Indicator::Amount, Indicator::Times, Indicator::AvgAmount}) {
      for (std::uint32_t h : {1u, 2u}) {
        for (std::uint32_t k : {1u, 2u, 5u, 20u}) {
          for (NodeId t = 0; t < n; t += 3) {
            const auto got = sample_neighborhood(g, t, {ind, h, k});
            REQUIRE(got.front() == t);
            const std::set<NodeId> set(got.begin(), got.end());
            REQUIRE(set.size() == got.size());
            REQUIRE(set == oracles::sample(g, t, ind, h, k));
            double bound = 1;
            double term = 1;
            for (std::uint32_t i = 0; i < h; ++i) bound += (term *= k);
            REQUIRE(static_cast<double>(set.size()) <= bound);
            const auto wider = sample_neighborhood(g, t, {ind, h, k + 1});
            const auto deeper = sample_neighborhood(g, t, {ind, h + 1, k});
            for (NodeId v : got) {
              REQUIRE(std::find(wider.begin(), wider.end(), v) != wider.end());
              REQUIRE(std::find(deeper.begin(), deeper.end(), v) != deeper.end());
            }
            ++checked;
          }
        }
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  MESSAGE("checked " << checked << " samples in " << secs << " s");
  CHECK(secs < 10.0);
}

TEST_CASE("induced subgraph") {
  const auto g = build_lw_aig({tx("a", "b", 1), tx("b", "c", 2)});
  const auto sg = induce_subgraph(g, {id(g, "a"), id(g, "b")}, 3);
  REQUIRE(sg.edges.size() == 1);
  CHECK(sg.edges[0] == SubgraphEdge{0, 1, {1, 1}});
  CHECK(sg.label == 3);

  std::vector<NodeId> all{id(g, "b"), id(g, "a"), id(g, "c")};
  const auto full = induce_subgraph(g, all, 0);
  CHECK(full.edges.size() == g.edge_count());
  CHECK(full.target() == id(g, "b"));
}

TEST_CASE("induced subgraph matches a filter oracle") {
  const auto g = testing::random_graph(30, 0.12, 4, 77);
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<NodeId> nodes;
    for (NodeId v = 0; v < 30; ++v)
      if (rng.bernoulli(0.4)) nodes.push_back(v);
    if (nodes.empty()) nodes.push_back(0);
    const auto sg = induce_subgraph(g, nodes, 0);
    std::set<std::tuple<NodeId, NodeId, std::uint64_t>> want;
    for (const auto& e : g.edges()) {
      if (std::count(nodes.begin(), nodes.end(), e.src) && std::count(nodes.begin(), nodes.end(), e.dst))
        want.insert({e.src, e.dst, e.features.times});
    }
    std::set<std::tuple<NodeId, NodeId, std::uint64_t>> got;
    for (const auto& e : sg.edges) got.insert({nodes[e.src], nodes[e.dst], e.features.times});
    CHECK(got == want);
    REQUIRE(sg.features.size() == nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto row = g.node_features(nodes[i]);
      CHECK(sg.features[i] == std::vector<FeatureEntry>(row.begin(), row.end()));
    }
  }
}

TEST_CASE("binary dataset assembly") {
  const auto g = labelled(10, 50);
  const auto ds = build_dataset(g, {Indicator::Amount, 2, 5}, "phish", 1.0, 42);
  CHECK(ds.subgraphs.size() == 20);
  CHECK(std::count_if(ds.subgraphs.begin(), ds.subgraphs.end(), [](const auto& s) { return s.label == 1; }) == 10);
  for (const auto& s : ds.subgraphs) {
    const bool pos = g.labels().at(s.target()) == "phish";
    CHECK(pos == (s.label == 1));
  }
  CHECK(build_dataset(g, {Indicator::Amount, 2, 5}, "phish", 1.0, 42) == ds);
  const auto other = build_dataset(g, {Indicator::Amount, 2, 5}, "phish", 1.0, 43);
  CHECK(other.subgraphs.size() == 20);

  try {
    build_dataset(labelled(10, 4), {}, "phish", 1.0, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientNegatives);
  }
}

TEST_CASE("multiclass dataset and directory round trip") {
  const auto g = labelled(6, 12);
  const auto ds = build_multiclass_dataset(g, {Indicator::Times, 1, 3});
  CHECK(ds.classes == std::vector<std::string>{"exchange", "ico", "phish"});
  CHECK(ds.subgraphs.size() == 18);
  const auto dir = (std::filesystem::temp_directory_path() / "ethident_dataset_test").string();
  save_dataset(dir, ds);
  CHECK(std::filesystem::exists(dir + "/meta.json"));
  CHECK(load_dataset(dir) == ds);
  std::filesystem::remove_all(dir);
}

TEST_CASE("suffixes") {
  CHECK(indicator_suffix(Indicator::Amount) == "-A");
  CHECK(indicator_suffix(Indicator::Times) == "-T");
  CHECK(indicator_suffix(Indicator::AvgAmount) == "-aA");
  CHECK(parse_indicator("avgAmount") == Indicator::AvgAmount);
}
