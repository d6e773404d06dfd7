#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ethident/baselines.hpp"
#include "ethident/error.hpp"
#include "ethident/hgate.hpp"
#include "ethident/lw_aig.hpp"
#include "ethident/records.hpp"
#include "ethident/sampler.hpp"
#include "ethident/synthetic.hpp"
#include "ethident/runtime.hpp"
#include "ethident/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ethident;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config_path;
  std::map<std::string, std::string> overrides;
};

TrainConfig resolve_config(const Globals& g) {
  TrainConfig c;
  if (!g.config_path.empty()) apply_config_file(c, g.config_path);
  for (const auto& [k, v] : g.overrides) apply_config_value(c, k, v);
  if (g.seed_set) c.seed = g.seed;
  c.validate();
  return c;
}

json config_json(const TrainConfig& c) {
  json out = json::object();
  for (const auto& [k, v] : config_entries(c)) out[k] = v;
  return out;
}

void write_json(const std::string& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << doc.dump(2) << '\n';
}

std::vector<Indicator> parse_strategies(const std::string& list) {
  std::vector<Indicator> out;
  std::string item;
  std::istringstream in(list);
  while (std::getline(in, item, '|')) {
    std::istringstream inner(item);
    std::string part;
    while (std::getline(inner, part, ',')) {
      if (!part.empty()) out.push_back(parse_indicator(part));
    }
  }
  if (out.empty()) throw Error(ErrorKind::Config, "no sampling strategy given");
  return out;
}

void add_train_flags(CLI::App* cmd, Globals& g) {
  const std::pair<const char*, const char*> flags[] = {
      {"--hops", "h"},         {"--fanout", "K"},        {"--layers", "k_layers"},  {"--hidden", "d"},
      {"--tau", "tau"},        {"--lambda", "lambda"},   {"--P,--perturbation", "P"}, {"--batch", "batch"},
      {"--lr", "lr"},          {"--dropout", "dropout"}, {"--patience", "patience"}, {"--epochs", "epochs"},
      {"--folds", "folds"},    {"--repeats", "repeats"}, {"--aug", "aug"},           {"--strategy", "strategy"},
      {"--optimizer", "optimizer"}, {"--symmetric", "symmetric"}, {"--pred-on", "pred_on"},
      {"--label-fraction", "label_fraction"}, {"--leaky-slope", "leaky_slope"}};
  for (const auto& [flag, key] : flags) {
    std::string k = key;
    cmd->add_option_function<std::string>(flag, [&g, k](const std::string& v) { g.overrides[k] = v; }, k);
  }
}

int cmd_gen(const Globals& g, const std::string& out_dir, std::uint32_t per_class, std::uint32_t background,
            std::uint32_t background_tx) {
  auto spec = SyntheticSpec::defaults(per_class);
  if (background) spec.background_accounts = background;
  if (background_tx) spec.background_transactions = background_tx;
  const auto data = gen_synthetic(spec, g.seed);
  fs::create_directories(out_dir);
  std::ofstream records(out_dir + "/records.csv");
  if (!records) throw Error(ErrorKind::Io, "cannot write " + out_dir + "/records.csv");
  write_records_csv(records, data.records);
  write_labels_csv(out_dir + "/labels.csv", data.labels);
  std::cout << "wrote " << data.records.size() << " records and " << data.labels.size() << " labels to " << out_dir
            << '\n';
  return 0;
}

int cmd_build(const std::string& records_path, const std::string& out) {
  const auto records = ingest_records_file(records_path);
  const auto graph = build_lw_aig(records);
  save_snapshot(out, graph);
  std::cout << "lw-AIG: " << graph.eoa_count() << " accounts, " << graph.edge_count() << " edges, "
            << graph.ca_count() << " contracts\n";
  return 0;
}

int cmd_sample(const Globals& g, const std::string& graph_path, const std::string& labels_path,
               const std::string& strategies, const std::string& positive, double negative_ratio,
               const std::string& name, const std::string& out_dir) {
  const auto cfg = resolve_config(g);
  const auto raw = load_snapshot(graph_path);
  const auto attached = attach_labels(raw, read_labels_csv(labels_path));
  if (!attached.unresolved.empty()) {
    std::cerr << attached.unresolved.size() << " labelled accounts are not in the graph\n";
  }
  const auto list = strategies.empty() ? std::vector<Indicator>{cfg.strategy} : parse_strategies(strategies);
  fs::create_directories(out_dir);
  for (auto ind : list) {
    SamplingStrategy s{ind, cfg.hops, cfg.fanout};
    auto ds = positive.empty() ? build_multiclass_dataset(attached.graph, s)
                               : build_dataset(attached.graph, s, positive, negative_ratio, cfg.seed);
    ds.name = name + std::string(indicator_suffix(ind));
    const auto dir = (fs::path(out_dir) / ds.name).string();
    save_dataset(dir, ds);
    std::cout << dir << ": " << ds.subgraphs.size() << " subgraphs, " << ds.classes.size() << " classes\n";
  }
  return 0;
}

int cmd_train(const Globals& g, const std::string& dataset_dir, const std::string& graph_path,
              const std::string& out_dir) {
  auto cfg = resolve_config(g);
  const auto ds = load_dataset(dataset_dir);
  cfg.hops = ds.strategy.hops;
  cfg.fanout = ds.strategy.fanout;
  cfg.strategy = ds.strategy.indicator;
  std::optional<LwAig> graph;
  if (!graph_path.empty()) graph = load_snapshot(graph_path);
  const auto cv = cross_validate(ds, cfg, graph ? &*graph : nullptr);

  fs::create_directories(out_dir);
  json folds = json::array();
  std::ofstream history(out_dir + "/history.jsonl");
  for (const auto& f : cv.folds) {
    folds.push_back({{"repeat", f.repeat}, {"fold", f.fold}, {"f1", f.f1}, {"best_epoch", f.best_epoch}});
    for (const auto& e : f.history) {
      history << json{{"repeat", f.repeat}, {"fold", f.fold}, {"epoch", e.epoch}, {"L_pred", e.prediction_loss},
                      {"L_self", e.contrast_loss}, {"val_f1", e.val_f1}}
                     .dump()
              << '\n';
    }
  }
  const json metrics = {{"dataset", ds.name},
                        {"strategy", indicator_name(ds.strategy.indicator)},
                        {"config", config_json(cfg)},
                        {"folds", folds},
                        {"mean_f1", cv.mean_f1},
                        {"std_f1", cv.std_f1}};
  write_json(out_dir + "/metrics.json", metrics);
  save_checkpoint(out_dir + "/model.ckpt", {cv.best_model.params, cv.best_model.normalizer});
  std::cout << "micro-F1 " << cv.mean_f1 << " +- " << cv.std_f1 << " over " << cv.folds.size() << " folds\n";
  return 0;
}

int cmd_eval(const Globals& g, const std::string& checkpoint_path, const std::string& dataset_dir,
             const std::string& out) {
  const auto cfg = resolve_config(g);
  auto ckpt = load_checkpoint(checkpoint_path);
  const auto ds = load_dataset(dataset_dir);
  if (ckpt.params.config.feature_dim != ds.feature_dim) {
    throw Error(ErrorKind::ShapeMismatch, "checkpoint feature width differs from the dataset");
  }
  const auto ev = evaluate(ckpt.params, ckpt.normalizer, ds.subgraphs);
  const json metrics = {{"dataset", ds.name},
                        {"strategy", indicator_name(ds.strategy.indicator)},
                        {"config", config_json(cfg)},
                        {"folds", json::array({{{"f1", ev.f1}}})},
                        {"mean_f1", ev.f1},
                        {"std_f1", 0.0}};
  if (out.empty()) {
    std::cout << metrics.dump(2) << '\n';
  } else {
    write_json(out, metrics);
    std::cout << "micro-F1 " << ev.f1 << '\n';
  }
  return 0;
}

int cmd_embed(const std::string& checkpoint_path, const std::string& dataset_dir, const std::string& out_path) {
  auto ckpt = load_checkpoint(checkpoint_path);
  const auto ds = load_dataset(dataset_dir);
  const auto g = embed(ckpt.params, ckpt.normalizer, ds.subgraphs);
  std::ofstream out(out_path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + out_path);
  out.precision(17);
  out << "subgraph";
  for (Eigen::Index c = 0; c < g.cols(); ++c) out << ",g" << c;
  out << '\n';
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    out << r;
    for (Eigen::Index c = 0; c < g.cols(); ++c) out << ',' << g(r, c);
    out << '\n';
  }
  return 0;
}

int cmd_features(const std::string& records_path, const std::string& labels_path, const std::string& out_path) {
  const auto records = ingest_records_file(records_path);
  std::vector<std::string> accounts;
  std::vector<std::string> labels;
  if (!labels_path.empty()) {
    for (auto& [acct, label] : read_labels_csv(labels_path)) {
      accounts.push_back(acct);
      labels.push_back(label);
    }
  } else {
    std::set<std::string> seen;
    for (const auto& r : records) {
      if (!r.from_is_contract && seen.insert(r.from).second) accounts.push_back(r.from);
      if (!r.to_is_contract && seen.insert(r.to).second) accounts.push_back(r.to);
    }
    labels.assign(accounts.size(), "");
  }
  const auto feats = extract_manual_features(accounts, records);
  std::vector<FeatureRow> rows;
  for (std::size_t i = 0; i < accounts.size(); ++i) rows.push_back({accounts[i], labels[i], feats[i]});
  std::ofstream out(out_path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + out_path);
  write_feature_csv(out, rows);
  std::cout << rows.size() << " accounts\n";
  return 0;
}

int cmd_baseline(const Globals& g, const std::string& features_path, const std::string& out) {
  const auto cfg = resolve_config(g);
  std::ifstream in(features_path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + features_path);
  const auto rows = read_feature_csv(in);
  std::map<std::string, std::uint32_t> class_index;
  for (const auto& r : rows) class_index.emplace(r.label, 0);
  std::vector<std::string> classes;
  for (auto& [name, idx] : class_index) {
    idx = static_cast<std::uint32_t>(classes.size());
    classes.push_back(name);
  }
  if (classes.size() < 2) throw Error(ErrorKind::DegenerateLabels, "feature file holds a single label");
  std::vector<std::uint32_t> y;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kManualFeatureCount));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y.push_back(class_index[rows[i].label]);
    const auto v = rows[i].features.values();
    // log1p per column
    for (std::size_t c = 0; c < kManualFeatureCount; ++c) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = std::log1p(v[c]);
  }
  json folds = json::array();
  std::vector<double> scores;
  for (std::uint32_t r = 0; r < cfg.repeats; ++r) {
    const auto parts = stratified_folds(y, cfg.folds, derive_seed(cfg.seed, 1000 + r));
    for (std::uint32_t f = 0; f < cfg.folds; ++f) {
      std::vector<std::size_t> train_idx;
      for (std::uint32_t p = 0; p < cfg.folds; ++p) {
        if (p != f) train_idx.insert(train_idx.end(), parts[p].begin(), parts[p].end());
      }
      auto take = [&](const std::vector<std::size_t>& idx, Eigen::MatrixXd& xs, std::vector<std::uint32_t>& ys) {
        xs.resize(static_cast<Eigen::Index>(idx.size()), x.cols());
        ys.clear();
        for (std::size_t i = 0; i < idx.size(); ++i) {
          xs.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(idx[i]));
          ys.push_back(y[idx[i]]);
        }
      };
      Eigen::MatrixXd xtr, xte;
      std::vector<std::uint32_t> ytr, yte;
      take(train_idx, xtr, ytr);
      take(parts[f], xte, yte);
      const auto model = MulticlassLogReg::fit(xtr, ytr, static_cast<std::uint32_t>(classes.size()));
      const double f1 = micro_f1(model.predict(xte), yte);
      scores.push_back(f1);
      folds.push_back({{"repeat", r}, {"fold", f}, {"f1", f1}});
    }
  }
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  const json metrics = {{"dataset", fs::path(features_path).stem().string()},
                        {"strategy", "manual+lr"},
                        {"config", config_json(cfg)},
                        {"folds", folds},
                        {"mean_f1", mean},
                        {"std_f1", std::sqrt(var / static_cast<double>(scores.size()))}};
  if (out.empty()) std::cout << metrics.dump(2) << '\n';
  else {
    write_json(out, metrics);
    std::cout << "manual+LR micro-F1 " << mean << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Account identification on transaction graphs"};
  app.require_subcommand(1);
  Globals g;
  app.add_option_function<std::uint64_t>(
      "--seed", [&g](std::uint64_t s) { g.seed = s; g.seed_set = true; }, "random seed");
  app.add_option("--config", g.config_path, "key=value configuration file")->check(CLI::ExistingFile);

  std::string out_dir, out, records, labels, graph, dataset, checkpoint, strategies, positive, name = "dataset",
                                                                                          features;
  std::uint32_t per_class = 50, background = 0, background_tx = 0;
  double negative_ratio = 1.0;

  auto* gen = app.add_subcommand("gen", "write synthetic records and labels");
  gen->add_option("--out-dir", out_dir)->required();
  gen->add_option("--per-class", per_class);
  gen->add_option("--background-accounts", background);
  gen->add_option("--background-tx", background_tx);

  auto* build = app.add_subcommand("build", "records -> lw-AIG snapshot");
  build->add_option("--records", records)->required()->check(CLI::ExistingFile);
  build->add_option("--out", out)->required();

  auto* sample = app.add_subcommand("sample", "snapshot + labels -> subgraph dataset directories");
  sample->add_option("--graph", graph)->required()->check(CLI::ExistingFile);
  sample->add_option("--labels", labels)->required()->check(CLI::ExistingFile);
  sample->add_option("--strategies", strategies, "amount|times|avgAmount");
  sample->add_option("--positive", positive, "binary dataset with this label as class 1");
  sample->add_option("--negative-ratio", negative_ratio);
  sample->add_option("--name", name);
  sample->add_option("--out-dir", out_dir)->required();
  add_train_flags(sample, g);

  auto* train_cmd = app.add_subcommand("train", "cross-validated training");
  train_cmd->add_option("--dataset", dataset)->required()->check(CLI::ExistingDirectory);
  train_cmd->add_option("--graph", graph, "snapshot for resample augmentation")->check(CLI::ExistingFile);
  train_cmd->add_option("--out-dir", out_dir)->required();
  add_train_flags(train_cmd, g);

  auto* eval = app.add_subcommand("eval", "checkpoint + dataset -> metrics");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--dataset", dataset)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", out);
  add_train_flags(eval, g);

  auto* embed_cmd = app.add_subcommand("embed", "checkpoint + dataset -> embedding CSV");
  embed_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  embed_cmd->add_option("--dataset", dataset)->required()->check(CLI::ExistingDirectory);
  embed_cmd->add_option("--out", out)->required();

  auto* feat = app.add_subcommand("features", "records -> manual feature CSV");
  feat->add_option("--records", records)->required()->check(CLI::ExistingFile);
  feat->add_option("--labels", labels)->check(CLI::ExistingFile);
  feat->add_option("--out", out)->required();

  auto* base = app.add_subcommand("baseline", "manual features + logistic regression");
  base->add_option("--features", features)->required()->check(CLI::ExistingFile);
  base->add_option("--out", out);
  add_train_flags(base, g);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return cmd_gen(g, out_dir, per_class, background, background_tx);
    if (*build) return cmd_build(records, out);
    if (*sample) return cmd_sample(g, graph, labels, strategies, positive, negative_ratio, name, out_dir);
    if (*train_cmd) return cmd_train(g, dataset, graph, out_dir);
    if (*eval) return cmd_eval(g, checkpoint, dataset, out);
    if (*embed_cmd) return cmd_embed(checkpoint, dataset, out);
    if (*feat) return cmd_features(records, labels, out);
    if (*base) return cmd_baseline(g, features, out);
  } catch (const Error& e) {
    json report = {{"error", std::string(to_string(e.kind()))}, {"message", e.what()}};
    if (e.row()) report["row"] = e.row();
    std::cerr << report.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return 0;
}
