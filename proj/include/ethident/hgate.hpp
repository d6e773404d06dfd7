#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ethident/autodiff.hpp"
#include "ethident/sampler.hpp"

namespace ethident {

struct HgateConfig {
  std::uint32_t feature_dim = 0;  // F, number of contract columns
  std::uint32_t hidden = 128;     // d
  std::uint32_t layers = 2;       // k stacked attention layers
  std::uint32_t classes = 2;
  double leaky_slope = 0.2;
  double dropout = 0.2;
};

// Column normalisation of interaction features: log1p, then z-score with
// statistics of the training subgraphs. Node contract-call counts are log1p'd.
struct FeatureNormalizer {
  double times_mean = 0.0;
  double times_std = 1.0;
  double amount_mean = 0.0;
  double amount_std = 1.0;

  static FeatureNormalizer fit(std::span<const AccountSubgraph> subgraphs);
  double times(std::uint64_t t) const;
  double amount(Amount w) const;
};

// Several subgraphs packed into one disjoint graph.
//
// Attention entries come in two blocks: one self entry (i, i) per node in node
// order, then one entry per (i, j) undirected neighbour pair, grouped by i.
// message_features row k holds [x_j || e_ij] for neighbour entry k, where e_ij
// is the j->i edge when present and the i->j edge otherwise.
struct SubgraphBatch {
  std::size_t graphs = 0;
  std::size_t nodes = 0;
  ad::SparseMatrix node_features;     // nodes x F
  ad::SparseMatrix message_features;  // neighbour entries x (F + 2)
  std::vector<std::uint32_t> node_graph;
  std::vector<std::uint32_t> node_offsets;  // graphs + 1
  std::vector<std::uint32_t> entry_dest;
  std::vector<std::uint32_t> entry_src;
  std::vector<std::uint32_t> targets;
  std::vector<std::uint32_t> labels;

  std::size_t neighbor_entries() const { return entry_dest.size() - nodes; }
};

SubgraphBatch make_batch(std::span<const AccountSubgraph* const> subgraphs, const FeatureNormalizer& normalizer,
                         std::uint32_t feature_dim);
SubgraphBatch make_batch(std::span<const AccountSubgraph> subgraphs, const FeatureNormalizer& normalizer,
                         std::uint32_t feature_dim);

struct LayerParams {
  ad::Parameter attention;  // 1 x 2d
  ad::Parameter transform;  // d x d
};

// Every learnable matrix of the encoder and both heads.
struct HgateParams {
  HgateConfig config;
  ad::Parameter align;         // d x (F + 2), neighbour alignment
  ad::Parameter align_target;  // d x F
  std::vector<LayerParams> layers;
  ad::Parameter pool_attention;  // 1 x 2d
  ad::Parameter pool_transform;  // d x d
  // projection head: z = W2 relu(W1 g + b1) + b2 + S g
  ad::Parameter proj_w1, proj_b1, proj_w2, proj_b2, proj_skip;
  // prediction head: softmax(V2 relu(V1 g + c1) + c2)
  ad::Parameter pred_w1, pred_b1, pred_w2, pred_b2;

  // Glorot-uniform matrices, zero biases.
  static HgateParams init(const HgateConfig& config, std::uint64_t seed);

  std::vector<ad::Parameter*> all();
  std::vector<const ad::Parameter*> all() const;
  void zero_grad();

  ad::NamedTensors to_tensors() const;
  static HgateParams from_tensors(const ad::NamedTensors& tensors);
};

struct Checkpoint {
  HgateParams params;
  FeatureNormalizer normalizer;
};
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

struct AlignedInputs {
  ad::Var nodes;     // nodes x d: Theta_x0 x_i
  ad::Var messages;  // neighbour entries x d: LeakyRelu(Theta_x [x_j || e_ij])
};

struct Encoding {
  ad::Var graphs;                // B x d subgraph embeddings g
  ad::Var nodes;                 // nodes x d final account embeddings
  std::vector<ad::Var> alphas;   // per layer, one weight per attention entry
  ad::Var pool_weights;          // B self entries then one per node
  std::vector<std::uint32_t> pool_dest;
};

AlignedInputs align_neighbors(ad::Tape& tape, HgateParams& params, const SubgraphBatch& batch);

// One node-level attention layer. `messages` (may be empty Var when layer > 0)
// supplies neighbour inputs for the first layer.
ad::Var node_attention_layer(ad::Tape& tape, LayerParams& layer, const HgateConfig& config, ad::Var h,
                             const ad::Var* messages, const SubgraphBatch& batch, ad::Var* alpha_out = nullptr);

ad::Var attentive_pool(ad::Tape& tape, HgateParams& params, ad::Var h, const SubgraphBatch& batch,
                       ad::Var* beta_out = nullptr, std::vector<std::uint32_t>* dest_out = nullptr);

Encoding encode(ad::Tape& tape, HgateParams& params, const SubgraphBatch& batch, bool training, Rng& rng);

ad::Var project(ad::Tape& tape, HgateParams& params, ad::Var g);
ad::Var predict_logits(ad::Tape& tape, HgateParams& params, ad::Var g);
ad::Var predict(ad::Tape& tape, HgateParams& params, ad::Var g);  // row-stochastic probabilities

}  // namespace ethident
