#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "ethident/baselines.hpp"
#include "ethident/error.hpp"
#include "support.hpp"

using namespace ethident;
using testing::call;
using testing::tx;

namespace {

constexpr std::int64_t kDay = 86400;
constexpr std::int64_t kT0 = 1'600'000'000 - 1'600'000'000 % kDay;  // midnight UTC

Amount ether(std::uint64_t e) { return static_cast<Amount>(e) * 1'000'000'000'000'000'000ULL; }

}  // namespace

TEST_CASE("no records") {
  const auto f = extract_manual_features("0xa", {});
  for (double v : f.values()) CHECK(v == 0.0);
}

TEST_CASE("two receipts on one day from two senders") {
  const std::vector<InteractionRecord> recs{tx("0xb", "0xa", ether(3), kT0 + 10), tx("0xc", "0xa", ether(7), kT0 + 5000)};
  const auto f = extract_manual_features("0xa", recs);
  CHECK(f.total_received == 10.0);
  CHECK(f.num_received_tx == 2);
  CHECK(f.inter_acct_received == 2);
  CHECK(f.avg_received == 5.0);
  CHECK(f.active_days == 1);
  CHECK(f.avg_received_day == 10.0);
  CHECK(f.avg_received_tx_day == 2.0);
  CHECK(f.total_output == 0.0);
  CHECK(f.avg_output == 0.0);
}

TEST_CASE("calls to two contracts on two days") {
  const std::vector<InteractionRecord> recs{call("0xa", "C", kT0 + 1), call("0xa", "D", kT0 + kDay + 1)};
  const auto f = extract_manual_features("0xa", recs);
  CHECK(f.times_contract_called == 2);
  CHECK(f.num_contract_called == 2);
  CHECK(f.active_days == 2);
  CHECK(f.times_contract_called_day == 1.0);
  CHECK(f.num_output_tx == 0);
}

TEST_CASE("three-record fixture with sends") {
  const std::vector<InteractionRecord> recs{tx("0xa", "0xb", ether(4), kT0), tx("0xa", "0xb", ether(2), kT0 + kDay),
                                            tx("0xa", "0xc", ether(6), kT0 + 2 * kDay), tx("0xq", "0xr", ether(1), kT0)};
  const auto f = extract_manual_features("0xa", recs);
  CHECK(f.total_output == 12.0);
  CHECK(f.num_output_tx == 3);
  CHECK(f.inter_acct_output == 2);
  CHECK(f.avg_output == 4.0);
  CHECK(f.active_days == 3);
  CHECK(f.avg_output_day == 4.0);
  CHECK(f.avg_output_tx_day == 1.0);
  CHECK(f.num_received_tx == 0);
}

TEST_CASE("identities and reorder idempotence on random records") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto recs = testing::random_records(400, 15, 4, seed);
    std::vector<std::string> accounts;
    for (int i = 0; i < 15; ++i) accounts.push_back("e" + std::to_string(i));
    const auto feats = extract_manual_features(accounts, recs);
    Rng rng(seed);
    rng.shuffle(recs);
    for (std::size_t a = 0; a < accounts.size(); ++a) {
      const auto& f = feats[a];
      CHECK(extract_manual_features(accounts[a], recs) == f);
      if (f.num_received_tx > 0) CHECK(std::abs(f.avg_received * f.num_received_tx - f.total_received) <= 1e-9 * std::max(1.0, f.total_received));
      if (f.num_output_tx > 0) CHECK(std::abs(f.avg_output * f.num_output_tx - f.total_output) <= 1e-9 * std::max(1.0, f.total_output));
      if (f.active_days > 0) {
        CHECK(std::abs(f.avg_received_day * f.active_days - f.total_received) <= 1e-9 * std::max(1.0, f.total_received));
        CHECK(std::abs(f.avg_output_day * f.active_days - f.total_output) <= 1e-9 * std::max(1.0, f.total_output));
      }
      for (double v : f.values()) CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("feature csv round trip") {
  std::vector<FeatureRow> rows;
  const auto recs = testing::random_records(200, 6, 3, 1);
  for (int i = 0; i < 6; ++i) {
    const auto key = "e" + std::to_string(i);
    rows.push_back({key, i % 2 ? "phish" : "ico", extract_manual_features(key, recs)});
  }
  std::stringstream buf;
  write_feature_csv(buf, rows);
  std::string header;
  std::getline(std::istringstream(buf.str()), header);
  CHECK(header.rfind("account,label,active_days,total_received", 0) == 0);
  const auto back = read_feature_csv(buf);
  REQUIRE(back.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(back[i].account == rows[i].account);
    CHECK(back[i].label == rows[i].label);
    CHECK(back[i].features == rows[i].features);
  }
}

TEST_CASE("logistic regression") {
  SUBCASE("zero weights give one half") {
    LogRegModel m{Eigen::VectorXd::Zero(3), 0.0};
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 3);
    CHECK((logreg_predict(m, x).array() == 0.5).all());
  }
  SUBCASE("two separable points") {
    Eigen::MatrixXd x(2, 1);
    x << -1, 1;
    const std::vector<std::uint32_t> y{0, 1};
    const auto m = logreg_fit(x, y);
    const auto p = logreg_predict(m, x);
    CHECK(p[0] < 0.5);
    CHECK(p[1] > 0.5);
  }
  SUBCASE("gradient against finite differences") {
    Rng rng(3);
    Eigen::MatrixXd x(20, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2, 2);
    std::vector<std::uint32_t> y;
    for (int i = 0; i < 20; ++i) y.push_back(rng.bernoulli(0.5));
    LogRegModel m{Eigen::VectorXd(4), 0.3};
    for (int i = 0; i < 4; ++i) m.weights[i] = rng.uniform(-1, 1);
    const double l2 = 0.05;
    const auto g = logreg_gradient(m, x, y, l2);
    double worst = 0;
    for (int i = 0; i <= 4; ++i) {
      auto up = m, down = m;
      const double eps = 1e-6;
      if (i < 4) {
        up.weights[i] += eps;
        down.weights[i] -= eps;
      } else {
        up.bias += eps;
        down.bias -= eps;
      }
      const double num = (logreg_loss(up, x, y, l2) - logreg_loss(down, x, y, l2)) / (2 * eps);
      worst = std::max(worst, std::abs(num - g[i]) / std::max(1.0, std::abs(num)));
    }
    CHECK(worst < 1e-6);
  }
  SUBCASE("single class is rejected") {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 2);
    const std::vector<std::uint32_t> y(4, 1);
    try {
      logreg_fit(x, y);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::DegenerateLabels);
    }
  }
  SUBCASE("extreme logits stay finite") {
    LogRegModel m{Eigen::VectorXd::Constant(1, 1000.0), 0.0};
    Eigen::MatrixXd x(2, 1);
    x << 5, -5;
    const std::vector<std::uint32_t> y{0, 1};
    CHECK(std::isfinite(logreg_loss(m, x, y, 0.0)));
    const auto p = logreg_predict(m, x);
    CHECK(p[0] <= 1.0);
    CHECK(p[1] >= 0.0);
  }
}

TEST_CASE("one-vs-rest on three gaussian blobs") {
  Rng rng(12);
  Eigen::MatrixXd x(150, 2);
  std::vector<std::uint32_t> y;
  const double centers[3][2] = {{0, 0}, {5, 0}, {0, 5}};
  for (int i = 0; i < 150; ++i) {
    const int c = i % 3;
    x(i, 0) = centers[c][0] + rng.normal();
    x(i, 1) = centers[c][1] + rng.normal();
    y.push_back(static_cast<std::uint32_t>(c));
  }
  const auto model = MulticlassLogReg::fit(x, y, 3);
  const auto pred = model.predict(x);
  std::size_t right = 0;
  for (std::size_t i = 0; i < y.size(); ++i) right += pred[i] == y[i];
  CHECK(right >= 140);
}

TEST_CASE("standardizer") {
  Eigen::MatrixXd x(3, 2);
  x << 1, 5, 2, 5, 3, 5;
  const auto s = Standardizer::fit(x);
  const auto z = s.apply(x);
  CHECK(std::abs(z.col(0).mean()) < 1e-15);
  CHECK((z.col(1).array() == 0.0).all());
}
