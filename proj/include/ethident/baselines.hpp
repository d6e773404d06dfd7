#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ethident/records.hpp"

namespace ethident {

inline constexpr std::size_t kManualFeatureCount = 16;

inline constexpr std::array<const char*, kManualFeatureCount> kManualFeatureNames = {
    "active_days",       "total_received",         "num_received_tx",      "inter_acct_received",
    "total_output",      "num_output_tx",          "inter_acct_output",    "avg_received",
    "avg_received_day",  "avg_received_tx_day",    "avg_output",           "avg_output_day",
    "avg_output_tx_day", "times_contract_called",  "times_contract_called_day", "num_contract_called"};

struct ManualFeatureVector {
  double active_days = 0;
  double total_received = 0;  // Ether
  double num_received_tx = 0;
  double inter_acct_received = 0;
  double total_output = 0;  // Ether
  double num_output_tx = 0;
  double inter_acct_output = 0;
  double avg_received = 0;
  double avg_received_day = 0;
  double avg_received_tx_day = 0;
  double avg_output = 0;
  double avg_output_day = 0;
  double avg_output_tx_day = 0;
  double times_contract_called = 0;
  double times_contract_called_day = 0;
  double num_contract_called = 0;

  std::array<double, kManualFeatureCount> values() const;
  static ManualFeatureVector from_values(std::span<const double> values);
  bool operator==(const ManualFeatureVector&) const = default;
};

// Records not involving the account are ignored.
//   received: to == account
//   output:   from == account, excluding contract calls
//   calls:    from == account with a calling function on a contract
// A day is a UTC calendar day (timestamp / 86400) with any of the above.
ManualFeatureVector extract_manual_features(const std::string& account,
                                            std::span<const InteractionRecord> records);

// One pass over the records for many accounts.
std::vector<ManualFeatureVector> extract_manual_features(std::span<const std::string> accounts,
                                                         std::span<const InteractionRecord> records);

struct FeatureRow {
  std::string account;
  std::string label;
  ManualFeatureVector features;
};

void write_feature_csv(std::ostream& out, std::span<const FeatureRow> rows);
std::vector<FeatureRow> read_feature_csv(std::istream& in);

struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

struct LogRegModel {
  Eigen::VectorXd weights;
  double bias = 0.0;
};

struct LogRegConfig {
  double l2 = 1e-3;
  std::uint32_t epochs = 500;
  double lr = 0.5;
};

// Mean binary cross-entropy plus (l2/2)|w|^2; the bias is not penalised.
double logreg_loss(const LogRegModel& model, const Eigen::MatrixXd& x, std::span<const std::uint32_t> y, double l2);
// Gradient of logreg_loss: weights then bias.
Eigen::VectorXd logreg_gradient(const LogRegModel& model, const Eigen::MatrixXd& x,
                                std::span<const std::uint32_t> y, double l2);

// Full-batch gradient descent on 0/1 labels. Throws DegenerateLabels when only
// one class is present.
LogRegModel logreg_fit(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y, const LogRegConfig& config = {});
Eigen::VectorXd logreg_predict(const LogRegModel& model, const Eigen::MatrixXd& x);

// One-vs-rest over classes 0..C-1.
struct MulticlassLogReg {
  Standardizer standardizer;
  std::vector<LogRegModel> models;

  static MulticlassLogReg fit(const Eigen::MatrixXd& x, std::span<const std::uint32_t> y, std::uint32_t classes,
                              const LogRegConfig& config = {});
  std::vector<std::uint32_t> predict(const Eigen::MatrixXd& x) const;
};

}  // namespace ethident
