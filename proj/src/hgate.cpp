#include "ethident/hgate.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "ethident/error.hpp"

namespace ethident {

using ad::Index;
using ad::Matrix;
using ad::Parameter;
using ad::Var;

FeatureNormalizer FeatureNormalizer::fit(std::span<const AccountSubgraph> subgraphs) {
  double n = 0, st = 0, stt = 0, sw = 0, sww = 0;
  for (const auto& sg : subgraphs) {
    for (const auto& e : sg.edges) {
      const double t = std::log1p(static_cast<double>(e.features.times));
      const double w = std::log1p(amount_to_double(e.features.amount));
      n += 1;
      st += t;
      stt += t * t;
      sw += w;
      sww += w * w;
    }
  }
  FeatureNormalizer f;
  if (n == 0) return f;
  f.times_mean = st / n;
  f.amount_mean = sw / n;
  const double vt = std::max(0.0, stt / n - f.times_mean * f.times_mean);
  const double vw = std::max(0.0, sww / n - f.amount_mean * f.amount_mean);
  f.times_std = vt > 1e-12 ? std::sqrt(vt) : 1.0;
  f.amount_std = vw > 1e-12 ? std::sqrt(vw) : 1.0;
  return f;
}

double FeatureNormalizer::times(std::uint64_t t) const {
  return (std::log1p(static_cast<double>(t)) - times_mean) / times_std;
}

double FeatureNormalizer::amount(Amount w) const {
  return (std::log1p(amount_to_double(w)) - amount_mean) / amount_std;
}

SubgraphBatch make_batch(std::span<const AccountSubgraph> subgraphs, const FeatureNormalizer& normalizer,
                         std::uint32_t feature_dim) {
  std::vector<const AccountSubgraph*> ptrs;
  ptrs.reserve(subgraphs.size());
  for (const auto& sg : subgraphs) ptrs.push_back(&sg);
  return make_batch(ptrs, normalizer, feature_dim);
}

SubgraphBatch make_batch(std::span<const AccountSubgraph* const> subgraphs, const FeatureNormalizer& normalizer,
                         std::uint32_t feature_dim) {
  using Triplet = Eigen::Triplet<double>;
  SubgraphBatch batch;
  batch.graphs = subgraphs.size();
  batch.node_offsets.push_back(0);
  for (const auto* sg : subgraphs) {
    if (sg->nodes.empty()) throw Error(ErrorKind::EmptySegment, "subgraph without nodes");
    batch.nodes += sg->nodes.size();
    batch.node_offsets.push_back(static_cast<std::uint32_t>(batch.nodes));
  }

  std::vector<Triplet> node_triplets;
  std::vector<Triplet> message_triplets;
  std::vector<std::uint32_t> neighbor_dest;
  std::vector<std::uint32_t> neighbor_src;
  batch.entry_dest.reserve(batch.nodes);
  for (std::uint32_t i = 0; i < batch.nodes; ++i) {
    batch.entry_dest.push_back(i);
    batch.entry_src.push_back(i);
  }

  for (std::size_t b = 0; b < subgraphs.size(); ++b) {
    const auto& sg = *subgraphs[b];
    const std::uint32_t base = batch.node_offsets[b];
    if (sg.feature_dim != feature_dim) throw Error(ErrorKind::ShapeMismatch, "subgraph feature width differs from model");
    for (std::uint32_t i = 0; i < sg.nodes.size(); ++i) {
      batch.node_graph.push_back(static_cast<std::uint32_t>(b));
      for (const auto& entry : sg.features[i]) {
        node_triplets.emplace_back(base + i, entry.column, std::log1p(static_cast<double>(entry.count)));
      }
    }
    batch.targets.push_back(base);
    batch.labels.push_back(sg.label);

    // (receiver, neighbour) -> edge feature used for the message.
    std::map<std::pair<std::uint32_t, std::uint32_t>, EdgeFeatures> incoming;
    std::map<std::pair<std::uint32_t, std::uint32_t>, EdgeFeatures> outgoing;
    for (const auto& e : sg.edges) {
      if (e.src == e.dst) continue;
      incoming[{e.dst, e.src}] = e.features;  // j -> i seen from i = e.dst
      outgoing[{e.src, e.dst}] = e.features;  // i -> j seen from i = e.src
    }
    std::map<std::pair<std::uint32_t, std::uint32_t>, EdgeFeatures> message = outgoing;
    for (const auto& [key, f] : incoming) message[key] = f;
    for (const auto& [key, f] : message) {
      const auto [i, j] = key;
      const auto row = static_cast<int>(neighbor_dest.size());
      neighbor_dest.push_back(base + i);
      neighbor_src.push_back(base + j);
      for (const auto& entry : sg.features[j]) {
        message_triplets.emplace_back(row, entry.column, std::log1p(static_cast<double>(entry.count)));
      }
      message_triplets.emplace_back(row, feature_dim, normalizer.times(f.times));
      message_triplets.emplace_back(row, feature_dim + 1, normalizer.amount(f.amount));
    }
  }
  batch.entry_dest.insert(batch.entry_dest.end(), neighbor_dest.begin(), neighbor_dest.end());
  batch.entry_src.insert(batch.entry_src.end(), neighbor_src.begin(), neighbor_src.end());

  batch.node_features.resize(static_cast<Index>(batch.nodes), feature_dim);
  batch.node_features.setFromTriplets(node_triplets.begin(), node_triplets.end());
  batch.message_features.resize(static_cast<Index>(neighbor_dest.size()), feature_dim + 2);
  batch.message_features.setFromTriplets(message_triplets.begin(), message_triplets.end());
  return batch;
}

namespace {

Matrix glorot(Index rows, Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-limit, limit);
  return m;
}

Parameter weight(const std::string& name, Index rows, Index cols, Rng& rng) {
  return Parameter(name, glorot(rows, cols, rng));
}

Parameter bias(const std::string& name, Index cols) { return Parameter(name, Matrix::Zero(1, cols)); }

}  // namespace

HgateParams HgateParams::init(const HgateConfig& config, std::uint64_t seed) {
  if (config.hidden == 0 || config.classes < 2 || config.layers == 0) {
    throw Error(ErrorKind::Config, "encoder needs hidden > 0, layers > 0 and at least two classes");
  }
  Rng rng(seed);
  const Index d = config.hidden;
  const Index f = config.feature_dim;
  HgateParams p;
  p.config = config;
  p.align = weight("align", d, f + 2, rng);
  p.align_target = weight("align_target", d, f, rng);
  for (std::uint32_t l = 0; l < config.layers; ++l) {
    const auto prefix = "layer" + std::to_string(l) + ".";
    p.layers.push_back({weight(prefix + "attention", 1, 2 * d, rng), weight(prefix + "transform", d, d, rng)});
  }
  p.pool_attention = weight("pool.attention", 1, 2 * d, rng);
  p.pool_transform = weight("pool.transform", d, d, rng);
  p.proj_w1 = weight("proj.w1", d, d, rng);
  p.proj_b1 = bias("proj.b1", d);
  p.proj_w2 = weight("proj.w2", d, d, rng);
  p.proj_b2 = bias("proj.b2", d);
  p.proj_skip = weight("proj.skip", d, d, rng);
  p.pred_w1 = weight("pred.w1", d, d, rng);
  p.pred_b1 = bias("pred.b1", d);
  p.pred_w2 = weight("pred.w2", config.classes, d, rng);
  p.pred_b2 = bias("pred.b2", config.classes);
  return p;
}

std::vector<Parameter*> HgateParams::all() {
  std::vector<Parameter*> out{&align, &align_target};
  for (auto& l : layers) {
    out.push_back(&l.attention);
    out.push_back(&l.transform);
  }
  for (auto* p : {&pool_attention, &pool_transform, &proj_w1, &proj_b1, &proj_w2, &proj_b2, &proj_skip, &pred_w1,
                  &pred_b1, &pred_w2, &pred_b2}) {
    out.push_back(p);
  }
  return out;
}

std::vector<const Parameter*> HgateParams::all() const {
  auto mutable_all = const_cast<HgateParams*>(this)->all();
  return {mutable_all.begin(), mutable_all.end()};
}

void HgateParams::zero_grad() {
  for (auto* p : all()) p->zero_grad();
}

ad::NamedTensors HgateParams::to_tensors() const {
  ad::NamedTensors out;
  for (const auto* p : all()) out.emplace_back(p->name, p->value);
  Matrix hyper(1, 3);
  hyper << config.leaky_slope, config.dropout, static_cast<double>(config.layers);
  out.emplace_back("config", hyper);
  return out;
}

HgateParams HgateParams::from_tensors(const ad::NamedTensors& tensors) {
  std::map<std::string, Matrix> by_name(tensors.begin(), tensors.end());
  auto take = [&](const std::string& name) -> const Matrix& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorKind::Format, "checkpoint lacks tensor " + name);
    return it->second;
  };
  const Matrix& hyper = take("config");
  if (hyper.size() != 3) throw Error(ErrorKind::Format, "checkpoint config tensor malformed");
  HgateConfig config;
  config.leaky_slope = hyper(0, 0);
  config.dropout = hyper(0, 1);
  config.layers = static_cast<std::uint32_t>(hyper(0, 2));
  const Matrix& align = take("align");
  config.hidden = static_cast<std::uint32_t>(align.rows());
  config.feature_dim = static_cast<std::uint32_t>(align.cols() - 2);
  config.classes = static_cast<std::uint32_t>(take("pred.w2").rows());

  HgateParams p = init(config, 0);
  for (auto* param : p.all()) {
    const Matrix& m = take(param->name);
    ad::require_shape(m.rows() == param->value.rows() && m.cols() == param->value.cols(), "checkpoint", m,
                      param->value);
    param->value = m;
  }
  return p;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  auto tensors = checkpoint.params.to_tensors();
  Matrix norm(1, 4);
  norm << checkpoint.normalizer.times_mean, checkpoint.normalizer.times_std, checkpoint.normalizer.amount_mean,
      checkpoint.normalizer.amount_std;
  tensors.emplace_back("normalizer", norm);
  ad::save_tensors(path, tensors);
}

Checkpoint load_checkpoint(const std::string& path) {
  auto tensors = ad::load_tensors(path);
  Checkpoint c;
  c.params = HgateParams::from_tensors(tensors);
  for (const auto& [name, m] : tensors) {
    if (name != "normalizer") continue;
    if (m.size() != 4) throw Error(ErrorKind::Format, "checkpoint normalizer malformed");
    c.normalizer = {m(0, 0), m(0, 1), m(0, 2), m(0, 3)};
  }
  return c;
}

AlignedInputs align_neighbors(ad::Tape& tape, HgateParams& params, const SubgraphBatch& batch) {
  const Var align = tape.parameter(params.align);
  const Var align_target = tape.parameter(params.align_target);
  AlignedInputs out;
  out.nodes = ad::sparse_linear(batch.node_features, align_target);
  out.messages = ad::leaky_relu(ad::sparse_linear(batch.message_features, align), params.config.leaky_slope);
  return out;
}

Var node_attention_layer(ad::Tape& tape, LayerParams& layer, const HgateConfig& config, Var h, const Var* messages,
                         const SubgraphBatch& batch, Var* alpha_out) {
  const Index d = config.hidden;
  if (h.cols() != d) throw Error(ErrorKind::ShapeMismatch, "attention layer input width differs from hidden size");
  const Var attention = tape.parameter(layer.attention);
  const Var transform = tape.parameter(layer.transform);
  const Var query_w = ad::slice_cols(attention, 0, d);
  const Var key_w = ad::slice_cols(attention, d, d);

  // gather per-node projections onto entries
  const Var query = ad::gather_rows(ad::linear(h, query_w), batch.entry_dest);
  const Var key = messages != nullptr
                      ? ad::concat_rows(ad::linear(h, key_w), ad::linear(*messages, key_w))
                      : ad::gather_rows(ad::linear(h, key_w), batch.entry_src);
  const Var scores = ad::leaky_relu(ad::add(query, key), config.leaky_slope);
  const Var alpha = ad::segment_softmax(scores, batch.entry_dest, batch.nodes);
  if (alpha_out != nullptr) *alpha_out = alpha;
  // sum_j alpha_ij W h_j computed as W (sum_j alpha_ij h_j)
  const Var mixed = messages != nullptr
                        ? ad::segment_weighted_sum(ad::concat_rows(h, *messages), alpha, batch.entry_dest, batch.nodes)
                        : ad::segment_weighted_sum(h, alpha, batch.entry_src, batch.entry_dest, batch.nodes);
  return ad::elu(ad::linear(mixed, transform));
}

Var attentive_pool(ad::Tape& tape, HgateParams& params, Var h, const SubgraphBatch& batch, Var* beta_out,
                   std::vector<std::uint32_t>* dest_out) {
  const Index d = params.config.hidden;
  for (std::size_t b = 0; b < batch.graphs; ++b) {
    if (batch.node_offsets[b] == batch.node_offsets[b + 1]) {
      throw Error(ErrorKind::EmptySegment, "subgraph " + std::to_string(b) + " has no nodes");
    }
  }
  const Var attention = tape.parameter(params.pool_attention);
  const Var transform = tape.parameter(params.pool_transform);
  const Var summary = ad::segment_max(h, batch.node_graph, batch.graphs);

  std::vector<std::uint32_t> dest(batch.graphs);
  for (std::uint32_t b = 0; b < batch.graphs; ++b) dest[b] = b;
  dest.insert(dest.end(), batch.node_graph.begin(), batch.node_graph.end());

  const Var members = ad::concat_rows(summary, h);
  const Var query = ad::gather_rows(ad::linear(summary, ad::slice_cols(attention, 0, d)), dest);
  const Var key = ad::linear(members, ad::slice_cols(attention, d, d));
  const Var beta = ad::segment_softmax(ad::leaky_relu(ad::add(query, key), params.config.leaky_slope), dest,
                                       batch.graphs);
  if (beta_out != nullptr) *beta_out = beta;
  const Var pooled = ad::segment_weighted_sum(ad::linear(members, transform), beta, dest, batch.graphs);
  if (dest_out != nullptr) *dest_out = std::move(dest);
  return ad::elu(pooled);
}

Encoding encode(ad::Tape& tape, HgateParams& params, const SubgraphBatch& batch, bool training, Rng& rng) {
  if (params.config.feature_dim != static_cast<std::uint32_t>(batch.node_features.cols())) {
    throw Error(ErrorKind::ShapeMismatch, "batch feature width differs from the model");
  }
  Encoding out;
  const auto aligned = align_neighbors(tape, params, batch);
  Var h = aligned.nodes;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (l > 0) h = ad::dropout(h, params.config.dropout, training, rng);
    Var alpha;
    h = node_attention_layer(tape, params.layers[l], params.config, h, l == 0 ? &aligned.messages : nullptr, batch,
                             &alpha);
    out.alphas.push_back(alpha);
  }
  out.nodes = h;
  out.graphs = attentive_pool(tape, params, h, batch, &out.pool_weights, &out.pool_dest);
  return out;
}

Var project(ad::Tape& tape, HgateParams& params, Var g) {
  if (g.cols() != params.config.hidden) throw Error(ErrorKind::ShapeMismatch, "projection input width");
  const Var hidden = ad::relu(ad::add_row(ad::linear(g, tape.parameter(params.proj_w1)), tape.parameter(params.proj_b1)));
  const Var out = ad::add_row(ad::linear(hidden, tape.parameter(params.proj_w2)), tape.parameter(params.proj_b2));
  return ad::add(out, ad::linear(g, tape.parameter(params.proj_skip)));
}

Var predict_logits(ad::Tape& tape, HgateParams& params, Var g) {
  if (g.cols() != params.config.hidden) throw Error(ErrorKind::ShapeMismatch, "prediction input width");
  const Var hidden = ad::relu(ad::add_row(ad::linear(g, tape.parameter(params.pred_w1)), tape.parameter(params.pred_b1)));
  return ad::add_row(ad::linear(hidden, tape.parameter(params.pred_w2)), tape.parameter(params.pred_b2));
}

Var predict(ad::Tape& tape, HgateParams& params, Var g) { return ad::softmax_rows(predict_logits(tape, params, g)); }

}  // namespace ethident
