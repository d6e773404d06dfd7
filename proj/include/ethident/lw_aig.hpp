#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ethident/amount.hpp"
#include "ethident/records.hpp"

namespace ethident {

using NodeId = std::uint32_t;

enum class AccountKind { Eoa, Ca };

// Bijection between opaque account keys and dense indices 0..n-1.
class AccountTable {
 public:
  NodeId intern(const std::string& key);
  std::optional<NodeId> find(const std::string& key) const;
  const std::string& key(NodeId id) const { return keys_[id]; }
  std::size_t size() const { return keys_.size(); }
  const std::vector<std::string>& keys() const { return keys_; }

  bool operator==(const AccountTable& other) const { return keys_ == other.keys_; }

 private:
  std::vector<std::string> keys_;
  std::unordered_map<std::string, NodeId> index_;
};

struct EdgeFeatures {
  std::uint64_t times = 0;  // t: number of merged interactions
  Amount amount = 0;        // w~: total merged value in wei

  bool operator==(const EdgeFeatures&) const = default;
};

struct FeatureEntry {
  std::uint32_t column = 0;  // contract index
  std::uint64_t count = 0;

  bool operator==(const FeatureEntry&) const = default;
};

// Lightweight account interaction graph: homogeneous over EOAs, one merged
// directed edge per ordered pair, contract-call counts as sparse node
// features. Immutable once built.
class LwAig {
 public:
  struct Edge {
    NodeId src;
    NodeId dst;
    EdgeFeatures features;
  };

  // Adjacent node seen from one endpoint; `edge` indexes edges().
  struct Incidence {
    NodeId node;
    std::uint32_t edge;
  };

  LwAig() = default;

  std::size_t eoa_count() const { return eoas_.size(); }
  std::size_t ca_count() const { return cas_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  const AccountTable& eoas() const { return eoas_; }
  const AccountTable& cas() const { return cas_; }
  const std::vector<Edge>& edges() const { return edges_; }

  std::span<const Incidence> out_edges(NodeId v) const;
  std::span<const Incidence> in_edges(NodeId v) const;
  std::optional<std::uint32_t> find_edge(NodeId src, NodeId dst) const;

  // Sparse row x_v sorted by column.
  std::span<const FeatureEntry> node_features(NodeId v) const;

  const std::map<NodeId, std::string>& labels() const { return labels_; }

  bool operator==(const LwAig& other) const;

  LwAig with_labels(std::map<NodeId, std::string> labels) const;

  // Constructs the graph from already-grouped parts. Edges must be unique per
  // ordered pair; rows of `features` must have sorted columns.
  static LwAig from_parts(AccountTable eoas, AccountTable cas, std::vector<Edge> edges,
                          std::vector<std::vector<FeatureEntry>> features);

 private:
  AccountTable eoas_;
  AccountTable cas_;
  std::vector<Edge> edges_;  // sorted by (src, dst)
  std::vector<std::uint64_t> out_offsets_;
  std::vector<Incidence> out_;
  std::vector<std::uint64_t> in_offsets_;
  std::vector<Incidence> in_;
  std::vector<std::uint64_t> feature_offsets_;
  std::vector<FeatureEntry> features_;
  std::map<NodeId, std::string> labels_;
};

// Merges EOA->EOA transactions per ordered pair into [t, w~] and counts
// EOA-initiated contract calls per contract. CA-initiated records and plain
// transfers into contracts are not part of the lightweight graph.
LwAig build_lw_aig(const std::vector<InteractionRecord>& records);

struct LabelAttachment {
  LwAig graph;
  std::vector<std::string> unresolved;  // keys with no EOA node
};

// Throws DuplicateConflictingLabel when one account receives two different
// labels; identical repeats are accepted.
LabelAttachment attach_labels(const LwAig& graph, const std::vector<std::pair<std::string, std::string>>& labels);

std::vector<std::pair<std::string, std::string>> read_labels_csv(const std::string& path);
void write_labels_csv(const std::string& path, const std::vector<std::pair<std::string, std::string>>& labels);

// "LWAIG1" binary snapshot, little-endian.
void write_snapshot(std::ostream& out, const LwAig& graph);
LwAig read_snapshot(std::istream& in);
void save_snapshot(const std::string& path, const LwAig& graph);
LwAig load_snapshot(const std::string& path);

}  // namespace ethident
