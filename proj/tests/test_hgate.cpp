#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "ethident/error.hpp"
#include "ethident/hgate.hpp"
#include "oracles.hpp"

using namespace ethident;
using ad::Matrix;
using ad::Var;
using Vec = Eigen::VectorXd;
using oracles::fixture;
using oracles::permuted;

namespace {
HgateConfig config(std::uint32_t features, std::uint32_t d = 8, std::uint32_t layers = 2) {
  return oracles::small_model(features, d, layers);
}

double lrelu(double x, double s) { return x > 0 ? x : s * x; }
Vec elu(const Vec& v) { return v.unaryExpr([](double x) { return x > 0 ? x : std::expm1(x); }); }

Vec softmax(const std::vector<double>& a) {
  const double m = *std::max_element(a.begin(), a.end());
  Vec out(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) out[static_cast<Eigen::Index>(i)] = std::exp(a[i] - m);
  return out / out.sum();
}

struct Naive {
  std::vector<Vec> h0;
  std::vector<std::vector<Vec>> alphas;  // per layer, per node: self then neighbours in ascending order
  std::vector<Vec> h;
  Vec beta;
  Vec g;
};

// Straight per-node loops over one subgraph; no batching or segment tricks.
Naive naive_encode(const HgateParams& p, const AccountSubgraph& sg, const FeatureNormalizer& norm) {
  const auto& cfg = p.config;
  const double s = cfg.leaky_slope;
  const auto d = static_cast<Eigen::Index>(cfg.hidden);
  const std::size_t n = sg.nodes.size();
  const auto F = static_cast<Eigen::Index>(cfg.feature_dim);
  std::vector<Vec> x(n, Vec::Zero(F));
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& e : sg.features[i]) x[i][e.column] = std::log1p(static_cast<double>(e.count));

  std::vector<std::map<std::size_t, EdgeFeatures>> nb(n);
  for (const auto& e : sg.edges) {
    if (e.src == e.dst) continue;
    nb[e.dst][e.src] = e.features;  // j -> i preferred
    nb[e.src].try_emplace(e.dst, e.features);
  }
  for (const auto& e : sg.edges) {
    if (e.src != e.dst) nb[e.dst][e.src] = e.features;
  }

  const Matrix& Wx = p.align.value;
  const Matrix& Wx0 = p.align_target.value;
  Naive out;
  for (std::size_t i = 0; i < n; ++i) out.h0.push_back(Wx0 * x[i]);
  std::vector<std::map<std::size_t, Vec>> msg(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& [j, f] : nb[i]) {
      Vec in(F + 2);
      in << x[j], norm.times(f.times), norm.amount(f.amount);
      msg[i][j] = (Wx * in).unaryExpr([s](double v) { return lrelu(v, s); });
    }
  }

  std::vector<Vec> h = out.h0;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const Matrix& a = p.layers[l].attention.value;
    const Matrix& W = p.layers[l].transform.value;
    const Vec aq = a.leftCols(d).transpose();
    const Vec ak = a.rightCols(d).transpose();
    std::vector<Vec> next(n);
    out.alphas.emplace_back();
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<Vec> inputs{h[i]};
      for (const auto& [j, f] : nb[i]) inputs.push_back(l == 0 ? msg[i][j] : h[j]);
      std::vector<double> scores;
      for (const auto& v : inputs) scores.push_back(lrelu(aq.dot(h[i]) + ak.dot(v), s));
      const Vec alpha = softmax(scores);
      Vec acc = Vec::Zero(d);
      for (std::size_t k = 0; k < inputs.size(); ++k) acc += alpha[static_cast<Eigen::Index>(k)] * (W * inputs[k]);
      next[i] = elu(acc);
      out.alphas.back().push_back(alpha);
    }
    h = next;
  }
  out.h = h;

  Vec summary = h[0];
  for (const auto& v : h) summary = summary.cwiseMax(v);
  const Matrix& as = p.pool_attention.value;
  const Vec sq = as.leftCols(d).transpose();
  const Vec sk = as.rightCols(d).transpose();
  std::vector<Vec> members{summary};
  members.insert(members.end(), h.begin(), h.end());
  std::vector<double> scores;
  for (const auto& v : members) scores.push_back(lrelu(sq.dot(summary) + sk.dot(v), s));
  out.beta = softmax(scores);
  Vec acc = Vec::Zero(d);
  for (std::size_t k = 0; k < members.size(); ++k)
    acc += out.beta[static_cast<Eigen::Index>(k)] * (p.pool_transform.value * members[k]);
  out.g = elu(acc);
  return out;
}

struct Run {
  Matrix g;
  Matrix nodes;
  std::vector<Matrix> alphas;
  Matrix beta;
};

Run run(HgateParams& p, const std::vector<AccountSubgraph>& sgs, const FeatureNormalizer& norm) {
  const auto batch = make_batch(sgs, norm, p.config.feature_dim);
  ad::Tape tape;
  Rng rng(0);
  const auto enc = encode(tape, p, batch, false, rng);
  Run r{enc.graphs.value(), enc.nodes.value(), {}, enc.pool_weights.value()};
  for (const auto& a : enc.alphas) r.alphas.push_back(a.value());
  return r;
}

double max_diff(const Matrix& a, const Vec& b) { return (a.transpose() - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("encoder matches a per-node loop oracle") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto f = fixture(seed);
    auto p = HgateParams::init(config(4, 8, seed % 2 ? 2 : 3), seed);
    const auto r = run(p, f.subgraphs, f.norm);
    for (std::size_t b = 0; b < f.subgraphs.size(); ++b) {
      const auto ref = naive_encode(p, f.subgraphs[b], f.norm);
      CHECK(max_diff(r.g.row(static_cast<Eigen::Index>(b)), ref.g) < 1e-10);
    }
  }
}

TEST_CASE("five-node subgraph alignment and attention against loops") {
  auto f = fixture(17, 5, 3, 1);
  f.subgraphs = {induce_subgraph(f.graph, {0, 1, 2, 3, 4}, 0)};
  f.norm = FeatureNormalizer::fit(f.subgraphs);
  auto p = HgateParams::init(config(3, 6, 1), 4);
  const auto batch = make_batch(f.subgraphs, f.norm, 3);
  ad::Tape tape;
  const auto aligned = align_neighbors(tape, p, batch);
  const auto ref = naive_encode(p, f.subgraphs[0], f.norm);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(max_diff(aligned.nodes.value().row(i), ref.h0[i]) < 1e-12);
  Var alpha;
  const Var h1 = node_attention_layer(tape, p.layers[0], p.config, aligned.nodes, &aligned.messages, batch, &alpha);
  for (Eigen::Index i = 0; i < 5; ++i) CHECK(max_diff(h1.value().row(i), ref.h[i]) < 1e-12);
  // entry layout: self block then neighbours grouped by receiver in ascending neighbour order
  std::vector<std::size_t> cursor(5, 0);
  for (std::size_t k = 0; k < batch.entry_dest.size(); ++k) {
    const auto i = batch.entry_dest[k];
    CHECK(alpha.value()(static_cast<Eigen::Index>(k), 0) ==
          doctest::Approx(ref.alphas[0][i][static_cast<Eigen::Index>(cursor[i]++)]).epsilon(1e-12));
  }
}

TEST_CASE("attention weights are normalised") {
  auto f = fixture(3, 40, 5, 8);
  auto p = HgateParams::init(config(5, 8, 3), 3);
  const auto batch = make_batch(f.subgraphs, f.norm, 5);
  const auto r = run(p, f.subgraphs, f.norm);
  for (const auto& alpha : r.alphas) {
    std::vector<double> sums(batch.nodes, 0.0);
    for (std::size_t k = 0; k < batch.entry_dest.size(); ++k) sums[batch.entry_dest[k]] += alpha(static_cast<Eigen::Index>(k), 0);
    for (double s : sums) CHECK(std::abs(s - 1.0) < 1e-12);
  }
  std::vector<double> beta_sums(batch.graphs, 0.0);
  for (std::size_t k = 0; k < batch.graphs; ++k) beta_sums[k] += r.beta(static_cast<Eigen::Index>(k), 0);
  for (std::size_t v = 0; v < batch.nodes; ++v) beta_sums[batch.node_graph[v]] += r.beta(static_cast<Eigen::Index>(batch.graphs + v), 0);
  for (double s : beta_sums) CHECK(std::abs(s - 1.0) < 1e-12);
}

TEST_CASE("zero alignment gives zero messages; lone node has no message rows") {
  auto f = fixture(5);
  auto p = HgateParams::init(config(4), 1);
  p.align.value.setZero();
  const auto batch = make_batch(f.subgraphs, f.norm, 4);
  ad::Tape tape;
  const auto aligned = align_neighbors(tape, p, batch);
  CHECK(aligned.messages.value().isZero(0.0));

  const auto lone = build_lw_aig({testing::call("a", "c0"), testing::call("a", "c0"), testing::call("b", "c1")});
  std::vector<AccountSubgraph> one{sample_subgraph(lone, 0, {}, 0)};
  auto q = HgateParams::init(config(2), 2);
  const auto b1 = make_batch(one, {}, 2);
  CHECK(b1.neighbor_entries() == 0);
  ad::Tape t2;
  const auto a1 = align_neighbors(t2, q, b1);
  Vec x(2);
  x << std::log1p(2.0), 0.0;
  CHECK(max_diff(a1.nodes.value().row(0), q.align_target.value * x) < 1e-14);
  CHECK(a1.messages.rows() == 0);
}

TEST_CASE("equal scores give uniform attention") {
  auto f = fixture(8);
  auto p = HgateParams::init(config(4, 8, 2), 5);
  for (auto& l : p.layers) l.attention.value.setZero();
  p.pool_attention.value.setZero();
  const auto batch = make_batch(f.subgraphs, f.norm, 4);
  const auto r = run(p, f.subgraphs, f.norm);
  std::vector<double> degree(batch.nodes, 0.0);
  for (auto i : batch.entry_dest) degree[i] += 1;
  for (std::size_t k = 0; k < batch.entry_dest.size(); ++k) {
    CHECK(r.alphas[0](static_cast<Eigen::Index>(k), 0) == doctest::Approx(1.0 / degree[batch.entry_dest[k]]).epsilon(1e-14));
  }
  for (std::size_t b = 0; b < batch.graphs; ++b) {
    const double m = batch.node_offsets[b + 1] - batch.node_offsets[b];
    CHECK(r.beta(static_cast<Eigen::Index>(b), 0) == doctest::Approx(1.0 / (m + 1)).epsilon(1e-14));
  }
}

TEST_CASE("isolated node and single-node pooling") {
  const auto lone = build_lw_aig({testing::call("a", "c0"), testing::call("b", "c1")});
  std::vector<AccountSubgraph> one{sample_subgraph(lone, 0, {}, 0)};
  auto p = HgateParams::init(config(2, 5, 1), 7);
  const auto batch = make_batch(one, {}, 2);
  ad::Tape tape;
  const auto aligned = align_neighbors(tape, p, batch);
  Var alpha;
  const Var h1 = node_attention_layer(tape, p.layers[0], p.config, aligned.nodes, &aligned.messages, batch, &alpha);
  CHECK(alpha.value()(0, 0) == 1.0);
  const Vec h0 = aligned.nodes.value().row(0).transpose();
  CHECK(max_diff(h1.value().row(0), elu(p.layers[0].transform.value * h0)) < 1e-14);

  Var beta;
  const Var g = attentive_pool(tape, p, h1, batch, &beta);
  CHECK(beta.value()(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(beta.value()(1, 0) == doctest::Approx(0.5).epsilon(1e-14));
  const Vec hv = h1.value().row(0).transpose();
  CHECK(max_diff(g.value().row(0), elu(p.pool_transform.value * hv)) < 1e-14);
}

TEST_CASE("segment isolation") {
  auto f = fixture(21, 40, 4, 3);
  auto p = HgateParams::init(config(4, 8, 2), 9);
  const auto together = run(p, f.subgraphs, f.norm);
  for (std::size_t b = 0; b < 3; ++b) {
    const auto alone = run(p, {f.subgraphs[b]}, f.norm);
    CHECK((together.g.row(static_cast<Eigen::Index>(b)) - alone.g.row(0)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("node order inside a subgraph does not matter") {
  auto f = fixture(31, 40, 4, 5);
  auto p = HgateParams::init(config(4, 8, 2), 11);
  Rng rng(3);
  for (const auto& sg : f.subgraphs) {
    std::vector<std::uint32_t> perm(sg.nodes.size());
    for (std::uint32_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(perm);
    const auto a = run(p, {sg}, f.norm);
    const auto b = run(p, {permuted(sg, perm)}, f.norm);
    CHECK((a.g - b.g).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("full model gradient check, d = 8, two subgraphs") {
  for (std::uint64_t seed : {41u, 42u}) {
    std::string name;
    const double err = oracles::model_gradient_error(seed, &name);
    MESSAGE("worst relative gradient error " << err << " at " << name);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("heads") {
  auto p = HgateParams::init(config(2, 6, 1), 3);
  Rng rng(8);
  p.proj_b1.value = testing::random_matrix(1, 6, rng);
  p.proj_b2.value = testing::random_matrix(1, 6, rng);
  p.pred_b1.value = testing::random_matrix(1, 6, rng);
  p.pred_b2.value = testing::random_matrix(1, 3, rng);
  ad::Tape tape;
  const Var zero = tape.constant(Matrix::Zero(2, 6));
  const Var z = project(tape, p, zero);
  const Vec b1 = p.proj_b1.value.row(0).transpose().cwiseMax(0.0);
  const Vec expect = p.proj_w2.value * b1 + p.proj_b2.value.row(0).transpose();
  CHECK(max_diff(z.value().row(1), expect) < 1e-14);
  const Vec hb = p.pred_b1.value.row(0).transpose().cwiseMax(0.0);
  const Vec logits = p.pred_w2.value * hb + p.pred_b2.value.row(0).transpose();
  const Vec soft = (logits.array() - logits.maxCoeff()).exp().matrix();
  CHECK(max_diff(predict(tape, p, zero).value().row(0), soft / soft.sum()) < 1e-14);

  const Var g = tape.constant(testing::random_matrix(7, 6, rng, 3.0));
  const Matrix probs = predict(tape, p, g).value();
  for (Eigen::Index r = 0; r < 7; ++r) CHECK(std::abs(probs.row(r).sum() - 1.0) < 1e-12);
  CHECK_THROWS_AS(project(tape, p, tape.constant(Matrix::Zero(2, 5))), Error);
}

TEST_CASE("normalizer") {
  AccountSubgraph sg;
  sg.nodes = {0, 1, 2};
  sg.features.resize(3);
  sg.edges = {{0, 1, {1, 10}}, {1, 2, {3, 1000}}};
  const auto n = FeatureNormalizer::fit(std::span<const AccountSubgraph>(&sg, 1));
  const double t1 = std::log1p(1.0), t2 = std::log1p(3.0);
  CHECK(n.times_mean == doctest::Approx((t1 + t2) / 2));
  CHECK(n.times_std == doctest::Approx((t2 - t1) / 2));
  CHECK(n.times(1) == doctest::Approx(-1.0));
  CHECK(n.amount(1000) == doctest::Approx(1.0));
  const auto empty = FeatureNormalizer::fit({});
  CHECK(empty.times_std == 1.0);
}

TEST_CASE("checkpoint round trip") {
  auto p = HgateParams::init(config(4, 8, 3), 5);
  const Checkpoint c{p, {0.1, 2.0, 3.0, 4.0}};
  const auto path = (std::filesystem::temp_directory_path() / "ethident_hgate_test.ckpt").string();
  save_checkpoint(path, c);
  const auto back = load_checkpoint(path);
  CHECK(back.params.config.layers == 3);
  CHECK(back.params.config.hidden == 8);
  CHECK(back.params.config.classes == 3);
  CHECK(back.normalizer.amount_std == 4.0);
  const auto a = p.all();
  const auto b = back.params.all();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i]->value == b[i]->value);
  std::filesystem::remove(path);
}
