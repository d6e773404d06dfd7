#include "ethident/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ethident/error.hpp"

namespace ethident {

std::array<double, kManualFeatureCount> ManualFeatureVector::values() const {
  return {active_days,       total_received,        num_received_tx,           inter_acct_received,
          total_output,      num_output_tx,         inter_acct_output,         avg_received,
          avg_received_day,  avg_received_tx_day,   avg_output,                avg_output_day,
          avg_output_tx_day, times_contract_called, times_contract_called_day, num_contract_called};
}

ManualFeatureVector ManualFeatureVector::from_values(std::span<const double> v) {
  if (v.size() != kManualFeatureCount) throw Error(ErrorKind::ShapeMismatch, "expected 16 manual features");
  ManualFeatureVector f;
  double* fields[] = {&f.active_days,       &f.total_received,        &f.num_received_tx,
                      &f.inter_acct_received, &f.total_output,        &f.num_output_tx,
                      &f.inter_acct_output, &f.avg_received,          &f.avg_received_day,
                      &f.avg_received_tx_day, &f.avg_output,          &f.avg_output_day,
                      &f.avg_output_tx_day, &f.times_contract_called, &f.times_contract_called_day,
                      &f.num_contract_called};
  for (std::size_t i = 0; i < kManualFeatureCount; ++i) *fields[i] = v[i];
  return f;
}

namespace {

struct Accumulator {
  std::set<std::int64_t> days;
  Amount received = 0;
  std::uint64_t received_tx = 0;
  std::set<std::string> senders;
  Amount output = 0;
  std::uint64_t output_tx = 0;
  std::set<std::string> receivers;
  std::uint64_t calls = 0;
  std::set<std::string> contracts;

  ManualFeatureVector finish() const {
    ManualFeatureVector f;
    const auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
    f.active_days = static_cast<double>(days.size());
    f.total_received = amount_to_ether(received);
    f.num_received_tx = static_cast<double>(received_tx);
    f.inter_acct_received = static_cast<double>(senders.size());
    f.total_output = amount_to_ether(output);
    f.num_output_tx = static_cast<double>(output_tx);
    f.inter_acct_output = static_cast<double>(receivers.size());
    f.avg_received = ratio(f.total_received, f.num_received_tx);
    f.avg_received_day = ratio(f.total_received, f.active_days);
    f.avg_received_tx_day = ratio(f.num_received_tx, f.active_days);
    f.avg_output = ratio(f.total_output, f.num_output_tx);
    f.avg_output_day = ratio(f.total_output, f.active_days);
    f.avg_output_tx_day = ratio(f.num_output_tx, f.active_days);
    f.times_contract_called = static_cast<double>(calls);
    f.times_contract_called_day = ratio(f.times_contract_called, f.active_days);
    f.num_contract_called = static_cast<double>(contracts.size());
    return f;
  }
};

std::int64_t utc_day(std::int64_t ts) {
  return ts >= 0 ? ts / 86400 : -((-ts + 86399) / 86400);
}

void add_sent(Accumulator& a, const InteractionRecord& r) {
  a.days.insert(utc_day(r.timestamp));
  if (r.is_contract_call()) {
    ++a.calls;
    a.contracts.insert(r.to);
  } else {
    a.output += r.value;
    ++a.output_tx;
    a.receivers.insert(r.to);
  }
}

void add_received(Accumulator& a, const InteractionRecord& r) {
  a.days.insert(utc_day(r.timestamp));
  a.received += r.value;
  ++a.received_tx;
  a.senders.insert(r.from);
}

}  // namespace

ManualFeatureVector extract_manual_features(const std::string& account, std::span<const InteractionRecord> records) {
  Accumulator acc;
  for (const auto& r : records) {
    if (r.from == account) add_sent(acc, r);
    if (r.to == account) add_received(acc, r);
  }
  return acc.finish();
}

std::vector<ManualFeatureVector> extract_manual_features(std::span<const std::string> accounts,
                                                         std::span<const InteractionRecord> records) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < accounts.size(); ++i) index.emplace(accounts[i], i);
  std::vector<Accumulator> acc(accounts.size());
  for (const auto& r : records) {
    if (auto it = index.find(r.from); it != index.end()) add_sent(acc[it->second], r);
    if (auto it = index.find(r.to); it != index.end()) add_received(acc[it->second], r);
  }
  std::vector<ManualFeatureVector> out;
  out.reserve(accounts.size());
  for (const auto& a : acc) out.push_back(a.finish());
  return out;
}

void write_feature_csv(std::ostream& out, std::span<const FeatureRow> rows) {
  out << "account,label";
  for (const char* name : kManualFeatureNames) out << ',' << name;
  out << '\n';
  out.precision(17);
  for (const auto& row : rows) {
    out << row.account << ',' << row.label;
    for (double v : row.features.values()) out << ',' << v;
    out << '\n';
  }
}

std::vector<FeatureRow> read_feature_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::MissingColumn, "empty feature file", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv_line(line);
  std::map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;
  auto require = [&](const std::string& name) {
    auto it = column.find(name);
    if (it == column.end()) throw Error(ErrorKind::MissingColumn, "missing column " + name, 1);
    return it->second;
  };
  const auto account_col = require("account");
  const auto label_col = require("label");
  std::array<std::size_t, kManualFeatureCount> feature_cols{};
  for (std::size_t i = 0; i < kManualFeatureCount; ++i) feature_cols[i] = require(kManualFeatureNames[i]);

  std::vector<FeatureRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() < header.size()) throw Error(ErrorKind::MissingColumn, "short row", line_no);
    FeatureRow row;
    row.account = cells[account_col];
    row.label = cells[label_col];
    std::array<double, kManualFeatureCount> v{};
    for (std::size_t i = 0; i < kManualFeatureCount; ++i) {
      const auto& cell = cells[feature_cols[i]];
      try {
        std::size_t used = 0;
        v[i] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw Error(ErrorKind::NonNumericValue, std::string(kManualFeatureNames[i]) + " = '" + cell + "'", line_no);
      }
    }
    row.features = ManualFeatureVector::from_values(v);
    rows.push_back(std::move(row));
  }
  return rows;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
  Standardizer s;
  const double n = static_cast<double>(std::max<Eigen::Index>(x.rows(), 1));
  s.mean = x.colwise().sum().transpose() / n;
  s.scale.resize(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double var = (x.col(c).array() - s.mean(c)).square().sum() / n;
    s.scale(c) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw Error(ErrorKind::ShapeMismatch, "standardizer column count differs");
  Eigen::MatrixXd out = x.rowwise() - mean.transpose();
  return out.array().rowwise() / scale.transpose().array();
}

namespace {

void check_shapes(const LogRegModel& model, const Eigen::MatrixXd& x, std::span<const std::uint32_t> y) {
  if (x.cols() != model.weights.size() || static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(ErrorKind::ShapeMismatch, "logistic regression shape mismatch");
  }
}

Eigen::VectorXd margins(const LogRegModel& model, const Eigen::MatrixXd& x) {
  return (x * model.weights).array() + model.bias;
}

double sigmoid(double m) {
  return m >= 0 ? 1.0 / (1.0 + std::exp(-m)) : std::exp(m) / (1.0 + std::exp(m));
}

// log(1 + exp(m)) without overflow
double softplus(double m) { return m > 0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m)); }

}  // namespace

double logreg_loss(const LogRegModel& model, const Eigen::MatrixXd& x, std::span<const std::uint32_t> y, double l2) {
  check_shapes(model, x, y);
  const auto m = margins(model, x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < m.size(); ++i) total += softplus(m(i)) - (y[static_cast<std::size_t>(i)] ? m(i) : 0.0);
  const double n = static_cast<double>(std::max<std::size_t>(y.size(), 1));
  return total / n + 0.5 * l2 * model.weights.squaredNorm();
}

Eigen::VectorXd logreg_gradient(const LogRegModel& model, const Eigen::MatrixXd& x, std::span<const std::uint32_t> y,
                                double l2) {
  check_shapes(model, x, y);
  const auto m = margins(model, x);
  Eigen::VectorXd residual(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) residual(i) = sigmoid(m(i)) - (y[static_cast<std::size_t>(i)] ? 1.0 : 0.0);
  const double n = static_cast<double>(std::max<std::size_t>(y.size(), 1));
  Eigen::VectorXd g(x.cols() + 1);
  g.head(x.cols()) = x.transpose() * residual / n + l2 * model.weights;
  g(x.cols()) = residual.sum() / n;
  return g;
}

LogRegModel logreg_fit(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y, const LogRegConfig& config) {
  bool seen[2] = {false, false};
  for (auto v : y) {
    if (v > 1) throw Error(ErrorKind::DegenerateLabels, "binary logistic regression expects 0/1 labels");
    seen[v] = true;
  }
  if (!seen[0] || !seen[1]) throw Error(ErrorKind::DegenerateLabels, "training labels contain a single class");
  LogRegModel model;
  model.weights = Eigen::VectorXd::Zero(x.cols());
  for (std::uint32_t e = 0; e < config.epochs; ++e) {
    const auto g = logreg_gradient(model, x, y, config.l2);
    model.weights -= config.lr * g.head(x.cols());
    model.bias -= config.lr * g(x.cols());
  }
  return model;
}

Eigen::VectorXd logreg_predict(const LogRegModel& model, const Eigen::MatrixXd& x) {
  if (x.cols() != model.weights.size()) throw Error(ErrorKind::ShapeMismatch, "logistic regression shape mismatch");
  return margins(model, x).unaryExpr([](double m) { return sigmoid(m); });
}

MulticlassLogReg MulticlassLogReg::fit(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y,
                                       std::uint32_t classes, const LogRegConfig& config) {
  std::set<std::uint32_t> present(y.begin(), y.end());
  if (present.size() < 2) throw Error(ErrorKind::DegenerateLabels, "training labels contain a single class");
  MulticlassLogReg out;
  out.standardizer = Standardizer::fit(x);
  const auto xs = out.standardizer.apply(x);
  out.models.resize(classes);
  for (std::uint32_t c = 0; c < classes; ++c) {
    if (!present.count(c)) continue;  // never predicted
    std::vector<std::uint32_t> target(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) target[i] = y[i] == c;
    out.models[c] = logreg_fit(xs, target, config);
  }
  return out;
}

std::vector<std::uint32_t> MulticlassLogReg::predict(const Eigen::MatrixXd& x) const {
  const auto xs = standardizer.apply(x);
  Eigen::MatrixXd scores = Eigen::MatrixXd::Constant(x.rows(), static_cast<Eigen::Index>(models.size()),
                                                     -std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < models.size(); ++c) {
    if (models[c].weights.size() == 0) continue;
    scores.col(static_cast<Eigen::Index>(c)) = logreg_predict(models[c], xs);
  }
  std::vector<std::uint32_t> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Eigen::Index best = 0;
    scores.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<std::uint32_t>(best);
  }
  return out;
}

}  // namespace ethident
