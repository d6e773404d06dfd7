#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ethident/augment.hpp"
#include "ethident/hgate.hpp"
#include "ethident/sampler.hpp"

namespace ethident {

struct TrainConfig {
  std::uint32_t hops = 2;       // h
  std::uint32_t fanout = 20;    // K
  std::uint32_t layers = 2;     // k
  std::uint32_t hidden = 128;   // d
  double tau = 0.2;
  double lambda = 0.01;
  double perturbation = 0.10;   // P
  std::uint32_t batch_size = 32;
  double lr = 0.001;
  double dropout = 0.2;
  std::uint32_t patience = 20;
  std::uint32_t max_epochs = 100;
  std::uint32_t folds = 3;
  std::uint32_t repeats = 10;
  std::uint64_t seed = 0;
  std::string augmentation = "edgeRemove&nodeDrop";
  Indicator strategy = Indicator::Amount;
  bool use_sgd = false;
  bool symmetric_contrast = false;
  // Classification loss on both augmented views (default) or on the raw subgraph.
  bool predict_on_raw = false;
  double label_fraction = 1.0;  // stratified subsample of each training split
  double leaky_slope = 0.2;

  // Throws Config on violated invariants (tau > 0, lambda >= 0, N >= 2, ...).
  void validate() const;
};

// Applies key=value pairs named after the fields (h, K, k_layers, d, tau,
// lambda, P, batch, lr, dropout, patience, epochs, folds, repeats, seed, aug,
// strategy, optimizer, symmetric, pred_on, label_fraction, leaky_slope).
void apply_config_value(TrainConfig& config, const std::string& key, const std::string& value);
// Reads a flat key=value document; '#' starts a comment.
void apply_config_file(TrainConfig& config, const std::string& path);
std::map<std::string, std::string> config_entries(const TrainConfig& config);

// Subgraph contrast: mean over anchors i of
//   -log( exp(cos(z1_i, z2_i)/tau) / sum_{j != i} exp(cos(z1_i, z2_j)/tau) ).
// The symmetric variant averages this with the z2-anchored direction.
ad::Var contrastive_loss(ad::Var z1, ad::Var z2, double tau, bool symmetric = false);

// -(1/N) sum_i log p_i[y_i] with probabilities clamped at 1e-12.
double prediction_loss(const ad::Matrix& probabilities, std::span<const std::uint32_t> labels);

double micro_f1(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn);
// Single-label multi-class micro-F1 over pooled predictions.
double micro_f1(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> truth);

// Splits indices into k parts, preserving class proportions.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::uint32_t> labels, std::uint32_t k,
                                                       std::uint64_t seed);
std::vector<std::size_t> stratified_subsample(std::span<const std::uint32_t> labels,
                                              std::span<const std::size_t> indices, double fraction,
                                              std::uint64_t seed);

struct BatchLosses {
  double prediction = 0.0;
  double contrast = 0.0;
  double total = 0.0;
};

// Loss of one batch at fixed parameters: L = L_pred + lambda * L_self.
BatchLosses batch_losses(HgateParams& params, const FeatureNormalizer& normalizer,
                         std::span<const AccountSubgraph> subgraphs, const TrainConfig& config, std::uint64_t seed,
                         bool training, const LwAig* graph = nullptr);

struct EpochRecord {
  std::uint32_t epoch = 0;
  double prediction_loss = 0.0;
  double contrast_loss = 0.0;
  double val_f1 = 0.0;
};

struct TrainResult {
  HgateParams params;  // best-validation checkpoint
  FeatureNormalizer normalizer;
  std::vector<EpochRecord> history;
  std::uint32_t best_epoch = 0;
  double best_val_f1 = -1.0;
};

TrainResult train(std::span<const AccountSubgraph> train_set, std::span<const AccountSubgraph> val_set,
                  std::uint32_t classes, std::uint32_t feature_dim, const TrainConfig& config,
                  const LwAig* graph = nullptr, std::uint64_t seed_stream = 0);

struct Evaluation {
  std::vector<std::uint32_t> predicted;
  std::vector<std::uint32_t> truth;
  ad::Matrix probabilities;
  double f1 = 0.0;
};

Evaluation evaluate(HgateParams& params, const FeatureNormalizer& normalizer,
                    std::span<const AccountSubgraph> subgraphs, std::uint32_t batch_size = 64);

// Subgraph embeddings g in eval mode.
ad::Matrix embed(HgateParams& params, const FeatureNormalizer& normalizer, std::span<const AccountSubgraph> subgraphs,
                 std::uint32_t batch_size = 64);

struct FoldResult {
  std::uint32_t repeat = 0;
  std::uint32_t fold = 0;
  double f1 = 0.0;
  std::uint32_t best_epoch = 0;
  std::vector<EpochRecord> history;
};

struct CrossValidation {
  std::vector<FoldResult> folds;
  double mean_f1 = 0.0;
  double std_f1 = 0.0;
  TrainResult best_model;  // model of the fold with the best validation F1
};

// Repeated stratified k-fold: fold f tests on part f, validates on part f+1
// and trains on the rest (1:1:1 for k = 3).
CrossValidation cross_validate(const SubgraphDataset& dataset, const TrainConfig& config,
                               const LwAig* graph = nullptr);

}  // namespace ethident
