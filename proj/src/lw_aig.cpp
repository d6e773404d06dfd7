#include "ethident/lw_aig.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "ethident/binary_io.hpp"
#include "ethident/error.hpp"

namespace ethident {

NodeId AccountTable::intern(const std::string& key) {
  auto [it, inserted] = index_.try_emplace(key, static_cast<NodeId>(keys_.size()));
  if (inserted) keys_.push_back(key);
  return it->second;
}

std::optional<NodeId> AccountTable::find(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const LwAig::Incidence> LwAig::out_edges(NodeId v) const {
  return {out_.data() + out_offsets_[v], out_.data() + out_offsets_[v + 1]};
}

std::span<const LwAig::Incidence> LwAig::in_edges(NodeId v) const {
  return {in_.data() + in_offsets_[v], in_.data() + in_offsets_[v + 1]};
}

std::optional<std::uint32_t> LwAig::find_edge(NodeId src, NodeId dst) const {
  const auto out = out_edges(src);
  auto it = std::lower_bound(out.begin(), out.end(), dst,
                             [](const Incidence& inc, NodeId node) { return inc.node < node; });
  if (it == out.end() || it->node != dst) return std::nullopt;
  return it->edge;
}

std::span<const FeatureEntry> LwAig::node_features(NodeId v) const {
  return {features_.data() + feature_offsets_[v], features_.data() + feature_offsets_[v + 1]};
}

bool LwAig::operator==(const LwAig& other) const {
  if (!(eoas_ == other.eoas_) || !(cas_ == other.cas_) || labels_ != other.labels_) return false;
  if (edges_.size() != other.edges_.size() || features_ != other.features_ ||
      feature_offsets_ != other.feature_offsets_) {
    return false;
  }
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto& a = edges_[e];
    const auto& b = other.edges_[e];
    if (a.src != b.src || a.dst != b.dst || !(a.features == b.features)) return false;
  }
  return true;
}

LwAig LwAig::with_labels(std::map<NodeId, std::string> labels) const {
  LwAig copy = *this;
  copy.labels_ = std::move(labels);
  return copy;
}

LwAig LwAig::from_parts(AccountTable eoas, AccountTable cas, std::vector<Edge> edges,
                        std::vector<std::vector<FeatureEntry>> features) {
  LwAig g;
  const std::size_t n = eoas.size();
  g.eoas_ = std::move(eoas);
  g.cas_ = std::move(cas);
  std::sort(edges.begin(), edges.end(),
            [](const Edge& a, const Edge& b) { return a.src != b.src ? a.src < b.src : a.dst < b.dst; });
  for (std::size_t e = 1; e < edges.size(); ++e) {
    if (edges[e].src == edges[e - 1].src && edges[e].dst == edges[e - 1].dst) {
      throw Error(ErrorKind::Format, "duplicate edge for one ordered pair");
    }
  }
  for (const auto& e : edges) {
    if (e.src >= n || e.dst >= n) throw Error(ErrorKind::Format, "edge endpoint out of range");
  }
  g.edges_ = std::move(edges);

  g.out_offsets_.assign(n + 1, 0);
  g.in_offsets_.assign(n + 1, 0);
  for (const auto& e : g.edges_) {
    ++g.out_offsets_[e.src + 1];
    ++g.in_offsets_[e.dst + 1];
  }
  for (std::size_t v = 0; v < n; ++v) {
    g.out_offsets_[v + 1] += g.out_offsets_[v];
    g.in_offsets_[v + 1] += g.in_offsets_[v];
  }
  g.out_.resize(g.edges_.size());
  g.in_.resize(g.edges_.size());
  std::vector<std::uint64_t> out_fill(g.out_offsets_.begin(), g.out_offsets_.end() - 1);
  std::vector<std::uint64_t> in_fill(g.in_offsets_.begin(), g.in_offsets_.end() - 1);
  // Edges are sorted by (src, dst), so both adjacency lists come out sorted by node.
  for (std::uint32_t e = 0; e < g.edges_.size(); ++e) {
    const auto& edge = g.edges_[e];
    g.out_[out_fill[edge.src]++] = {edge.dst, e};
  }
  std::vector<std::uint32_t> by_dst(g.edges_.size());
  for (std::uint32_t e = 0; e < by_dst.size(); ++e) by_dst[e] = e;
  std::stable_sort(by_dst.begin(), by_dst.end(), [&](std::uint32_t a, std::uint32_t b) {
    const auto& ea = g.edges_[a];
    const auto& eb = g.edges_[b];
    return ea.dst != eb.dst ? ea.dst < eb.dst : ea.src < eb.src;
  });
  for (auto e : by_dst) g.in_[in_fill[g.edges_[e].dst]++] = {g.edges_[e].src, e};

  features.resize(n);
  g.feature_offsets_.assign(n + 1, 0);
  for (std::size_t v = 0; v < n; ++v) {
    auto& row = features[v];
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k - 1].column >= row[k].column) throw Error(ErrorKind::Format, "feature row columns not sorted");
    }
    for (const auto& entry : row) {
      if (entry.column >= g.cas_.size()) throw Error(ErrorKind::Format, "feature column out of range");
      if (entry.count == 0) throw Error(ErrorKind::Format, "zero feature entry stored");
    }
    g.feature_offsets_[v + 1] = g.feature_offsets_[v] + row.size();
    g.features_.insert(g.features_.end(), row.begin(), row.end());
  }
  return g;
}

LwAig build_lw_aig(const std::vector<InteractionRecord>& records) {
  AccountTable eoas;
  AccountTable cas;
  std::map<std::pair<NodeId, NodeId>, EdgeFeatures> merged;
  std::vector<std::map<std::uint32_t, std::uint64_t>> calls;

  for (const auto& r : records) {
    // Register every account mentioned so indices follow first appearance.
    const NodeId from = r.from_is_contract ? cas.intern(r.from) : eoas.intern(r.from);
    const NodeId to = r.to_is_contract ? cas.intern(r.to) : eoas.intern(r.to);
    if (r.from_is_contract) continue;
    if (r.to_is_contract) {
      if (!r.calling_function) continue;
      if (calls.size() <= from) calls.resize(from + 1);
      ++calls[from][to];
      continue;
    }
    auto& f = merged[{from, to}];
    f.times += 1;
    f.amount += r.value;
  }

  std::vector<LwAig::Edge> edges;
  edges.reserve(merged.size());
  for (const auto& [pair, features] : merged) edges.push_back({pair.first, pair.second, features});

  std::vector<std::vector<FeatureEntry>> features(eoas.size());
  for (std::size_t v = 0; v < calls.size(); ++v) {
    for (const auto& [column, count] : calls[v]) features[v].push_back({column, count});
  }
  return LwAig::from_parts(std::move(eoas), std::move(cas), std::move(edges), std::move(features));
}

LabelAttachment attach_labels(const LwAig& graph, const std::vector<std::pair<std::string, std::string>>& labels) {
  std::map<NodeId, std::string> resolved = graph.labels();
  std::map<std::string, std::string> seen;
  LabelAttachment result;
  for (const auto& [key, label] : labels) {
    auto [it, inserted] = seen.try_emplace(key, label);
    if (!inserted && it->second != label) {
      throw Error(ErrorKind::DuplicateConflictingLabel,
                  "account " + key + " labelled both " + it->second + " and " + label);
    }
    auto node = graph.eoas().find(key);
    if (!node) {
      if (inserted) result.unresolved.push_back(key);
      continue;
    }
    auto [rit, fresh] = resolved.try_emplace(*node, label);
    if (!fresh && rit->second != label) {
      throw Error(ErrorKind::DuplicateConflictingLabel,
                  "account " + key + " labelled both " + rit->second + " and " + label);
    }
  }
  result.graph = graph.with_labels(std::move(resolved));
  return result;
}

std::vector<std::pair<std::string, std::string>> read_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (line_no == 1 && cells.size() >= 2 && cells[0] == "account" && cells[1] == "label") continue;
    if (cells.size() < 2) throw Error(ErrorKind::MissingColumn, "label row needs account,label", line_no);
    if (cells[0].empty()) throw Error(ErrorKind::EmptyAccountId, "empty account in label row", line_no);
    out.emplace_back(cells[0], cells[1]);
  }
  return out;
}

void write_labels_csv(const std::string& path, const std::vector<std::pair<std::string, std::string>>& labels) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << "account,label\n";
  for (const auto& [account, label] : labels) out << account << ',' << label << '\n';
}

namespace {
constexpr std::string_view kSnapshotMagic = "LWAIG1";
}

// Layout: magic, n_eoa, n_ca, n_edges, n_feature_entries (u64 each), EOA keys,
// CA keys, out-offsets (n+1 u64), per edge {dst u32, t u64, w~ u128} in CSR
// order, feature triplets {row u32, column u32, count u64}.
void write_snapshot(std::ostream& out, const LwAig& graph) {
  using namespace binary;
  put_magic(out, kSnapshotMagic);
  const auto n = graph.eoa_count();
  std::uint64_t feature_entries = 0;
  for (NodeId v = 0; v < n; ++v) feature_entries += graph.node_features(v).size();
  put_u64(out, n);
  put_u64(out, graph.ca_count());
  put_u64(out, graph.edge_count());
  put_u64(out, feature_entries);
  for (const auto& key : graph.eoas().keys()) put_string(out, key);
  for (const auto& key : graph.cas().keys()) put_string(out, key);
  std::uint64_t offset = 0;
  put_u64(out, offset);
  for (NodeId v = 0; v < n; ++v) {
    offset += graph.out_edges(v).size();
    put_u64(out, offset);
  }
  for (const auto& e : graph.edges()) {
    put_u32(out, e.dst);
    put_u64(out, e.features.times);
    put_amount(out, e.features.amount);
  }
  for (NodeId v = 0; v < n; ++v) {
    for (const auto& entry : graph.node_features(v)) {
      put_u32(out, v);
      put_u32(out, entry.column);
      put_u64(out, entry.count);
    }
  }
  if (!out) throw Error(ErrorKind::Io, "failed writing snapshot");
}

LwAig read_snapshot(std::istream& in) {
  using namespace binary;
  expect_magic(in, kSnapshotMagic);
  const auto n = get_u64(in);
  const auto ca = get_u64(in);
  const auto m = get_u64(in);
  const auto feature_entries = get_u64(in);
  AccountTable eoas;
  AccountTable cas;
  for (std::uint64_t i = 0; i < n; ++i) eoas.intern(get_string(in));
  for (std::uint64_t i = 0; i < ca; ++i) cas.intern(get_string(in));
  if (eoas.size() != n || cas.size() != ca) throw Error(ErrorKind::Format, "duplicate account key in snapshot");
  std::vector<std::uint64_t> offsets(n + 1);
  for (auto& o : offsets) o = get_u64(in);
  if (offsets.front() != 0 || offsets.back() != m) throw Error(ErrorKind::Format, "inconsistent CSR offsets");
  std::vector<LwAig::Edge> edges;
  edges.reserve(m);
  for (NodeId v = 0; v < n; ++v) {
    if (offsets[v + 1] < offsets[v]) throw Error(ErrorKind::Format, "decreasing CSR offsets");
    for (auto k = offsets[v]; k < offsets[v + 1]; ++k) {
      LwAig::Edge e{v, get_u32(in), {}};
      e.features.times = get_u64(in);
      e.features.amount = get_amount(in);
      if (e.features.times == 0) throw Error(ErrorKind::Format, "edge with zero interaction count");
      edges.push_back(e);
    }
  }
  std::vector<std::vector<FeatureEntry>> features(n);
  for (std::uint64_t k = 0; k < feature_entries; ++k) {
    const auto row = get_u32(in);
    const auto column = get_u32(in);
    const auto count = get_u64(in);
    if (row >= n) throw Error(ErrorKind::Format, "feature row out of range");
    features[row].push_back({column, count});
  }
  return LwAig::from_parts(std::move(eoas), std::move(cas), std::move(edges), std::move(features));
}

void save_snapshot(const std::string& path, const LwAig& graph) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  write_snapshot(out, graph);
}

LwAig load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return read_snapshot(in);
}

}  // namespace ethident
