#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "armaid/arma_gen.hpp"
#include "armaid/baseline.hpp"
#include "armaid/identify.hpp"

namespace armaid {

/// One series per (p, q) combination in 0..max_order per batch, batch-major,
/// p-major within a batch. Series are standardized.
struct TestSuite {
  std::vector<TimeSeries> series;
  NoiseKind noise = NoiseKind::Normal01;
  int batches = 0;
  int max_order = kMaxOrder;
  int length = kDefaultSeriesLength;
  std::uint64_t seed = 0;
};

TestSuite gen_test_suite(NoiseKind noise, int batches, std::uint64_t seed, int max_order = kMaxOrder,
                         int length = kDefaultSeriesLength);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// 95% normal-approximation interval in percent, clipped to [0, 100].
Interval binomial_ci(std::int64_t successes, std::int64_t trials);

double order_mse(std::span<const int> predicted, std::span<const int> actual);

inline constexpr int kNumOrders = kMaxOrder + 1;

/// Row-normalized percentages; rows for orders absent from `actual` are NaN
/// and flagged in empty_rows.
struct ConfusionMatrix {
  std::vector<std::vector<double>> rows;
  std::vector<bool> empty_rows;
};

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> actual,
                                 int classes = kNumOrders);

/// Result of one method on one series; p_hat = q_hat = -1 marks a failure.
struct MethodOutcome {
  int p_hat = -1;
  int q_hat = -1;
  double score = 0.0;  // criterion value or joint probability
};

struct SeriesRow {
  std::int64_t series_id = 0;
  int p = 0;
  int q = 0;
  int p_hat = -1;
  int q_hat = -1;
  double criterion_or_prob = 0.0;
  double wall_ms = 0.0;

  [[nodiscard]] bool failed() const { return p_hat < 0 || q_hat < 0; }
};

struct EvalReport {
  std::string method;
  std::int64_t evaluated = 0;  // series with a prediction
  std::int64_t failed = 0;
  double ar_acc = 0.0, ma_acc = 0.0, both_acc = 0.0;  // percent
  Interval ar_ci, ma_ci, both_ci;
  double ar_mse = 0.0, ma_mse = 0.0;
  ConfusionMatrix confusion_ar, confusion_ma;
  double wall_seconds = 0.0;
  double cpu_seconds = 0.0;
  std::string hardware;
  std::vector<SeriesRow> rows;  // in suite order
};

using SeriesMethod = std::function<MethodOutcome(const TimeSeries&)>;

/// Builds all metrics from per-series rows (failed rows excluded).
EvalReport assemble_report(const std::string& method, std::vector<SeriesRow> rows);

/// Runs `method` over every series in parallel; exceptions count as failures.
EvalReport evaluate_method(const std::string& tag, const SeriesMethod& method, const TestSuite& suite);
EvalReport evaluate_method(const Identifier& identifier, const TestSuite& suite, const std::string& tag = "");
EvalReport evaluate_method(const SearchConfig& config, const TestSuite& suite, const std::string& tag = "");

std::string method_tag(const SearchConfig& config);

void write_series_csv(std::ostream& out, std::span<const SeriesRow> rows);
std::vector<SeriesRow> read_series_csv(std::istream& in);
void write_report_csv(std::ostream& out, std::span<const EvalReport> reports);
/// Aligned plain-text table, one column per method.
std::string format_report_table(std::span<const EvalReport> reports);
std::string format_confusion(const ConfusionMatrix& m, const std::string& title);

struct SubsetResult {
  std::int64_t count = 0;   // qualifying series
  std::int64_t evaluated = 0;
  double both_acc = 0.0;
  Interval ci;
};

/// Both-order accuracy over the series with p, q <= 2 excluding (0, 0). Rows are
/// matched to the suite by series_id and their labels checked against it.
SubsetResult chenoweth_subset(std::span<const SeriesRow> rows, const TestSuite& suite);

}  // namespace armaid
