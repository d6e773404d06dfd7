#include "ethident/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "ethident/error.hpp"
#include "ethident/random.hpp"

namespace ethident {

using ad::Matrix;
using ad::Var;

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::Config, msg); };
  if (!(tau > 0.0)) fail("tau must be positive");
  if (!(lambda >= 0.0)) fail("lambda must be non-negative");
  if (batch_size < 2) fail("batch size must be at least 2 for the contrastive term");
  if (perturbation < 0.0 || perturbation > 1.0) fail("P must lie in [0,1]");
  if (dropout < 0.0 || dropout >= 1.0) fail("dropout must lie in [0,1)");
  if (hops < 1 || fanout < 1) fail("h and K must be at least 1");
  if (layers < 1 || hidden < 1) fail("k_layers and d must be at least 1");
  if (folds < 3) fail("folds must be at least 3 (train, validation and test parts)");
  if (repeats < 1) fail("repeats must be at least 1");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(label_fraction > 0.0 && label_fraction <= 1.0)) fail("label_fraction must lie in (0,1]");
  parse_augment_pair(augmentation, perturbation);
}

namespace {

std::uint64_t to_u64(const std::string& key, const std::string& value, std::uint64_t max) {
  try {
    std::size_t used = 0;
    if (value.empty() || value[0] == '-') throw std::out_of_range(key);
    const auto v = std::stoull(value, &used);
    if (used != value.size() || v > max) throw std::out_of_range(key);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Config, key + " expects a non-negative integer, got '" + value + "'");
  }
}

std::uint32_t to_u32(const std::string& key, const std::string& value) {
  return static_cast<std::uint32_t>(to_u64(key, value, 0xffffffffULL));
}

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::Config, key + " expects a number, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw Error(ErrorKind::Config, key + " expects true/false, got '" + value + "'");
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

void apply_config_value(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "h") c.hops = to_u32(key, value);
  else if (key == "K") c.fanout = to_u32(key, value);
  else if (key == "k_layers") c.layers = to_u32(key, value);
  else if (key == "d") c.hidden = to_u32(key, value);
  else if (key == "tau") c.tau = to_double(key, value);
  else if (key == "lambda") c.lambda = to_double(key, value);
  else if (key == "P") c.perturbation = to_double(key, value);
  else if (key == "batch") c.batch_size = to_u32(key, value);
  else if (key == "lr") c.lr = to_double(key, value);
  else if (key == "dropout") c.dropout = to_double(key, value);
  else if (key == "patience") c.patience = to_u32(key, value);
  else if (key == "epochs") c.max_epochs = to_u32(key, value);
  else if (key == "folds") c.folds = to_u32(key, value);
  else if (key == "repeats") c.repeats = to_u32(key, value);
  else if (key == "seed") c.seed = to_u64(key, value, ~std::uint64_t{0});
  else if (key == "aug") c.augmentation = value;
  else if (key == "strategy") c.strategy = parse_indicator(value);
  else if (key == "optimizer") {
    if (value != "adam" && value != "sgd") throw Error(ErrorKind::Config, "optimizer must be adam or sgd");
    c.use_sgd = value == "sgd";
  } else if (key == "symmetric") c.symmetric_contrast = to_bool(key, value);
  else if (key == "pred_on") {
    if (value != "views" && value != "raw") throw Error(ErrorKind::Config, "pred_on must be views or raw");
    c.predict_on_raw = value == "raw";
  } else if (key == "label_fraction") c.label_fraction = to_double(key, value);
  else if (key == "leaky_slope") c.leaky_slope = to_double(key, value);
  else throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
}

void apply_config_file(TrainConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path);
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorKind::Config, "expected key=value", line_no);
    try {
      apply_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(ErrorKind::Config, e.what(), line_no);
    }
  }
}

std::map<std::string, std::string> config_entries(const TrainConfig& c) {
  return {{"h", std::to_string(c.hops)},
          {"K", std::to_string(c.fanout)},
          {"k_layers", std::to_string(c.layers)},
          {"d", std::to_string(c.hidden)},
          {"tau", fmt(c.tau)},
          {"lambda", fmt(c.lambda)},
          {"P", fmt(c.perturbation)},
          {"batch", std::to_string(c.batch_size)},
          {"lr", fmt(c.lr)},
          {"dropout", fmt(c.dropout)},
          {"patience", std::to_string(c.patience)},
          {"epochs", std::to_string(c.max_epochs)},
          {"folds", std::to_string(c.folds)},
          {"repeats", std::to_string(c.repeats)},
          {"seed", std::to_string(c.seed)},
          {"aug", c.augmentation},
          {"strategy", std::string(indicator_name(c.strategy))},
          {"optimizer", c.use_sgd ? "sgd" : "adam"},
          {"symmetric", c.symmetric_contrast ? "true" : "false"},
          {"pred_on", c.predict_on_raw ? "raw" : "views"},
          {"label_fraction", fmt(c.label_fraction)},
          {"leaky_slope", fmt(c.leaky_slope)}};
}

Var contrastive_loss(Var z1, Var z2, double tau, bool symmetric) {
  ad::require_shape(z1.rows() == z2.rows() && z1.cols() == z2.cols(), "contrastive_loss", z1.value(), z2.value());
  if (z1.rows() < 2) throw Error(ErrorKind::ShapeMismatch, "contrastive loss needs at least two pairs");
  const Var n1 = ad::l2_normalize_rows(z1);
  const Var n2 = ad::l2_normalize_rows(z2);
  const Var sim = ad::scale(ad::matmul(n1, ad::transpose(n2)), 1.0 / tau);
  auto anchored = [](Var s) { return ad::mean(ad::sub(ad::logsumexp_rows(s, true), ad::diagonal(s))); };
  const Var forward = anchored(sim);
  if (!symmetric) return forward;
  return ad::scale(ad::add(forward, anchored(ad::transpose(sim))), 0.5);
}

double prediction_loss(const Matrix& probabilities, std::span<const std::uint32_t> labels) {
  if (static_cast<ad::Index>(labels.size()) != probabilities.rows() || labels.empty()) {
    throw Error(ErrorKind::ShapeMismatch, "prediction_loss: label count differs from probability rows");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    total -= std::log(std::max(probabilities(static_cast<ad::Index>(i), labels[i]), 1e-12));
  }
  return total / static_cast<double>(labels.size());
}

double micro_f1(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn) {
  const auto denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double micro_f1(std::span<const std::uint32_t> predicted, std::span<const std::uint32_t> truth) {
  if (predicted.size() != truth.size()) throw Error(ErrorKind::ShapeMismatch, "micro_f1 length mismatch");
  std::uint64_t tp = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) tp += predicted[i] == truth[i];
  // Each wrong single-label prediction is one FP (predicted class) and one FN (true class).
  const std::uint64_t wrong = truth.size() - tp;
  return micro_f1(tp, wrong, wrong);
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const std::uint32_t> labels, std::uint32_t k,
                                                       std::uint64_t seed) {
  if (k == 0) throw Error(ErrorKind::Config, "fold count must be positive");
  std::map<std::uint32_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> parts(k);
  std::size_t next = 0;
  for (auto& [cls, members] : by_class) {
    rng.shuffle(members);
    for (auto idx : members) {
      parts[next % k].push_back(idx);
      ++next;
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return parts;
}

std::vector<std::size_t> stratified_subsample(std::span<const std::uint32_t> labels,
                                              std::span<const std::size_t> indices, double fraction,
                                              std::uint64_t seed) {
  if (fraction >= 1.0) return {indices.begin(), indices.end()};
  std::map<std::uint32_t, std::vector<std::size_t>> by_class;
  for (auto i : indices) by_class[labels[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (auto& [cls, members] : by_class) {
    rng.shuffle(members);
    const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * members.size())));
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(std::min(keep, members.size())));
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

struct Forward {
  Var total;
  Var prediction;
  std::optional<Var> contrast;
};

Forward forward_batch(ad::Tape& tape, HgateParams& params, const FeatureNormalizer& normalizer,
                      std::span<const AccountSubgraph* const> raw, const TrainConfig& config, std::uint64_t seed,
                      bool training, const LwAig* graph, bool force_contrast) {
  const auto [op1, op2] = parse_augment_pair(config.augmentation, config.perturbation);
  const std::uint32_t f = params.config.feature_dim;
  Rng dropout_rng(derive_seed(seed, 0xd40f));
  std::vector<std::uint32_t> labels;
  for (const auto* sg : raw) labels.push_back(sg->label);

  const bool identical_views = op1.kind == AugmentKind::Identity && op2.kind == AugmentKind::Identity;
  const bool contrast = force_contrast || config.lambda > 0.0;
  Forward out;
  if (!contrast && (config.predict_on_raw || identical_views)) {
    // Both views coincide with the raw subgraph: one encoder pass.
    const auto batch = make_batch(raw, normalizer, f);
    const auto enc = encode(tape, params, batch, training, dropout_rng);
    out.prediction = ad::cross_entropy(predict_logits(tape, params, enc.graphs), labels);
    out.total = out.prediction;
    return out;
  }

  std::vector<AccountSubgraph> first;
  std::vector<AccountSubgraph> second;
  first.reserve(raw.size());
  second.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto views = make_view_pair(*raw[i], op1, op2, derive_seed(seed, i), graph);
    first.push_back(std::move(views.first));
    second.push_back(std::move(views.second));
  }
  const auto b1 = make_batch(first, normalizer, f);
  const auto b2 = make_batch(second, normalizer, f);
  const auto e1 = encode(tape, params, b1, training, dropout_rng);
  const auto e2 = encode(tape, params, b2, training, dropout_rng);
  if (config.predict_on_raw) {
    const auto b0 = make_batch(raw, normalizer, f);
    const auto e0 = encode(tape, params, b0, training, dropout_rng);
    out.prediction = ad::cross_entropy(predict_logits(tape, params, e0.graphs), labels);
  } else {
    out.prediction = ad::scale(ad::add(ad::cross_entropy(predict_logits(tape, params, e1.graphs), labels),
                                       ad::cross_entropy(predict_logits(tape, params, e2.graphs), labels)),
                               0.5);
  }
  out.total = out.prediction;
  if (contrast) {
    out.contrast = contrastive_loss(project(tape, params, e1.graphs), project(tape, params, e2.graphs), config.tau,
                                    config.symmetric_contrast);
    if (config.lambda > 0.0) out.total = ad::add(out.prediction, ad::scale(*out.contrast, config.lambda));
  }
  return out;
}

std::vector<const AccountSubgraph*> pointers(std::span<const AccountSubgraph> items) {
  std::vector<const AccountSubgraph*> out;
  out.reserve(items.size());
  for (const auto& s : items) out.push_back(&s);
  return out;
}

}  // namespace

BatchLosses batch_losses(HgateParams& params, const FeatureNormalizer& normalizer,
                         std::span<const AccountSubgraph> subgraphs, const TrainConfig& config, std::uint64_t seed,
                         bool training, const LwAig* graph) {
  ad::Tape tape;
  const auto ptrs = pointers(subgraphs);
  const auto fwd = forward_batch(tape, params, normalizer, ptrs, config, seed, training, graph, true);
  BatchLosses out;
  out.prediction = fwd.prediction.scalar();
  out.contrast = fwd.contrast ? fwd.contrast->scalar() : 0.0;
  out.total = out.prediction + config.lambda * out.contrast;
  return out;
}

Evaluation evaluate(HgateParams& params, const FeatureNormalizer& normalizer,
                    std::span<const AccountSubgraph> subgraphs, std::uint32_t batch_size) {
  Evaluation ev;
  ev.probabilities.resize(static_cast<ad::Index>(subgraphs.size()), params.config.classes);
  Rng unused(0);
  for (std::size_t start = 0; start < subgraphs.size(); start += batch_size) {
    const auto chunk = subgraphs.subspan(start, std::min<std::size_t>(batch_size, subgraphs.size() - start));
    ad::Tape tape;
    const auto batch = make_batch(chunk, normalizer, params.config.feature_dim);
    const auto enc = encode(tape, params, batch, false, unused);
    const auto probs = predict(tape, params, enc.graphs).value();
    ev.probabilities.middleRows(static_cast<ad::Index>(start), probs.rows()) = probs;
    for (ad::Index r = 0; r < probs.rows(); ++r) {
      ad::Index best = 0;
      probs.row(r).maxCoeff(&best);
      ev.predicted.push_back(static_cast<std::uint32_t>(best));
      ev.truth.push_back(chunk[static_cast<std::size_t>(r)].label);
    }
  }
  ev.f1 = subgraphs.empty() ? 0.0 : micro_f1(ev.predicted, ev.truth);
  return ev;
}

Matrix embed(HgateParams& params, const FeatureNormalizer& normalizer, std::span<const AccountSubgraph> subgraphs,
             std::uint32_t batch_size) {
  Matrix out(static_cast<ad::Index>(subgraphs.size()), params.config.hidden);
  Rng unused(0);
  for (std::size_t start = 0; start < subgraphs.size(); start += batch_size) {
    const auto chunk = subgraphs.subspan(start, std::min<std::size_t>(batch_size, subgraphs.size() - start));
    ad::Tape tape;
    const auto enc = encode(tape, params, make_batch(chunk, normalizer, params.config.feature_dim), false, unused);
    out.middleRows(static_cast<ad::Index>(start), enc.graphs.rows()) = enc.graphs.value();
  }
  return out;
}

TrainResult train(std::span<const AccountSubgraph> train_set, std::span<const AccountSubgraph> val_set,
                  std::uint32_t classes, std::uint32_t feature_dim, const TrainConfig& config, const LwAig* graph,
                  std::uint64_t seed_stream) {
  config.validate();
  if (train_set.size() < 2) throw Error(ErrorKind::EmptySplit, "training split needs at least two subgraphs");
  if (val_set.empty()) throw Error(ErrorKind::EmptySplit, "validation split is empty");

  const std::uint64_t seed = derive_seed(config.seed, seed_stream);
  HgateConfig model;
  model.feature_dim = feature_dim;
  model.hidden = config.hidden;
  model.layers = config.layers;
  model.classes = classes;
  model.dropout = config.dropout;
  model.leaky_slope = config.leaky_slope;

  TrainResult result;
  result.normalizer = FeatureNormalizer::fit(train_set);
  HgateParams params = HgateParams::init(model, derive_seed(seed, 1));
  ad::OptimizerConfig opt;
  opt.kind = config.use_sgd ? ad::OptimizerConfig::Kind::Sgd : ad::OptimizerConfig::Kind::Adam;
  opt.lr = config.lr;
  ad::Optimizer optimizer(opt);
  const auto param_list = params.all();

  const auto all = pointers(train_set);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(seed, 2));

  for (std::uint32_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double pred_sum = 0.0;
    double self_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      if (end - start < 2) break;
      std::vector<const AccountSubgraph*> chunk;
      for (std::size_t k = start; k < end; ++k) chunk.push_back(all[order[k]]);
      const std::uint64_t batch_seed = derive_seed(seed, (std::uint64_t{epoch} << 32) | batches);

      ad::Tape tape;
      Forward fwd;
      try {
        fwd = forward_batch(tape, params, result.normalizer, chunk, config, batch_seed, true, graph, false);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonFiniteValue) throw;
        throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + " batch " +
                                                  std::to_string(batches) + ": " + e.what());
      }
      if (!std::isfinite(fwd.total.scalar())) {
        throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + " batch " + std::to_string(batches) +
                                                  ": loss " + std::to_string(fwd.total.scalar()));
      }
      params.zero_grad();
      tape.backward(fwd.total);
      optimizer.step(param_list);
      pred_sum += fwd.prediction.scalar();
      self_sum += fwd.contrast ? fwd.contrast->scalar() : 0.0;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.prediction_loss = batches ? pred_sum / static_cast<double>(batches) : 0.0;
    rec.contrast_loss = batches ? self_sum / static_cast<double>(batches) : 0.0;
    rec.val_f1 = evaluate(params, result.normalizer, val_set).f1;
    result.history.push_back(rec);
    if (rec.val_f1 > result.best_val_f1) {
      result.best_val_f1 = rec.val_f1;
      result.best_epoch = epoch;
      result.params = params;
    }
    if (epoch - result.best_epoch >= config.patience) break;
  }
  return result;
}

CrossValidation cross_validate(const SubgraphDataset& dataset, const TrainConfig& config, const LwAig* graph) {
  config.validate();
  std::vector<std::uint32_t> labels;
  for (const auto& sg : dataset.subgraphs) labels.push_back(sg.label);
  const auto classes = static_cast<std::uint32_t>(dataset.classes.size());
  CrossValidation cv;
  double best_val = -1.0;
  for (std::uint32_t r = 0; r < config.repeats; ++r) {
    const auto parts = stratified_folds(labels, config.folds, derive_seed(config.seed, 1000 + r));
    for (std::uint32_t f = 0; f < config.folds; ++f) {
      const auto& test_idx = parts[f];
      const auto& val_idx = parts[(f + 1) % config.folds];
      std::vector<std::size_t> train_idx;
      for (std::uint32_t p = 0; p < config.folds; ++p) {
        if (p != f && p != (f + 1) % config.folds) train_idx.insert(train_idx.end(), parts[p].begin(), parts[p].end());
      }
      std::sort(train_idx.begin(), train_idx.end());
      train_idx = stratified_subsample(labels, train_idx, config.label_fraction,
                                       derive_seed(config.seed, 2000 + r * 64 + f));
      if (test_idx.empty() || val_idx.empty() || train_idx.empty()) {
        throw Error(ErrorKind::EmptySplit, "fold " + std::to_string(f) + " of repeat " + std::to_string(r) +
                                               " has an empty split");
      }
      std::vector<std::uint32_t> seen;
      for (auto i : train_idx) seen.push_back(labels[i]);
      std::sort(seen.begin(), seen.end());
      if (std::unique(seen.begin(), seen.end()) - seen.begin() < 2) {
        throw Error(ErrorKind::SingleClassFold, "training split of fold " + std::to_string(f) + " has one class");
      }
      auto gather = [&](const std::vector<std::size_t>& idx) {
        std::vector<AccountSubgraph> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(dataset.subgraphs[i]);
        return out;
      };
      const auto train_set = gather(train_idx);
      const auto val_set = gather(val_idx);
      const auto test_set = gather(test_idx);
      auto model = train(train_set, val_set, classes, dataset.feature_dim, config, graph, r * 64 + f);
      const auto ev = evaluate(model.params, model.normalizer, test_set);
      cv.folds.push_back({r, f, ev.f1, model.best_epoch, model.history});
      if (model.best_val_f1 > best_val) {
        best_val = model.best_val_f1;
        cv.best_model = std::move(model);
      }
    }
  }
  double total = 0.0;
  for (const auto& f : cv.folds) total += f.f1;
  cv.mean_f1 = total / static_cast<double>(cv.folds.size());
  double var = 0.0;
  for (const auto& f : cv.folds) var += (f.f1 - cv.mean_f1) * (f.f1 - cv.mean_f1);
  cv.std_f1 = std::sqrt(var / static_cast<double>(cv.folds.size()));
  return cv;
}

}  // namespace ethident
