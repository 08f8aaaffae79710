#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "armaid/evalbench.hpp"
#include "armaid/persist.hpp"
#include "doctest.h"

using namespace armaid;

namespace {

TestSuite labelled_only(int batches, int max_order) {
  // Labels without simulation, for metric tests that never look at values.
  TestSuite s;
  s.batches = batches;
  s.max_order = max_order;
  s.length = 2;
  for (int b = 0; b < batches; ++b) {
    for (int p = 0; p <= max_order; ++p) {
      for (int q = 0; q <= max_order; ++q) s.series.push_back({{0.0, 1.0}, OrderPair{p, q}});
    }
  }
  return s;
}

std::vector<SeriesRow> rows_from(const std::vector<std::pair<OrderPair, OrderPair>>& pairs) {
  std::vector<SeriesRow> rows;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    rows.push_back({static_cast<std::int64_t>(i), pairs[i].first.p, pairs[i].first.q, pairs[i].second.p,
                    pairs[i].second.q, 0.0, 0.0});
  }
  return rows;
}

void check_integrity(const EvalReport& r) {
  CHECK(r.both_acc <= std::min(r.ar_acc, r.ma_acc));
  for (const auto* m : {&r.confusion_ar, &r.confusion_ma}) {
    for (std::size_t i = 0; i < m->rows.size(); ++i) {
      if (m->empty_rows[i]) continue;
      double sum = 0.0;
      for (double v : m->rows[i]) sum += v;
      CHECK(std::abs(sum - 100.0) <= 1e-9);
    }
  }
}

}  // namespace

TEST_CASE("suite generation") {
  const TestSuite one = gen_test_suite(NoiseKind::Normal01, 1, 3, 9, 30);
  REQUIRE(one.series.size() == 100);
  std::set<std::pair<int, int>> labels;
  for (const auto& s : one.series) labels.insert({s.label->p, s.label->q});
  CHECK(labels.size() == 100);

  const TestSuite three = gen_test_suite(NoiseKind::StudentT2, 3, 3, 2, 30);
  CHECK(three.series.size() == 27);
  std::map<std::pair<int, int>, int> counts;
  for (const auto& s : three.series) ++counts[{s.label->p, s.label->q}];
  for (const auto& [k, c] : counts) CHECK(c == 3);

  CHECK(encode_suite(gen_test_suite(NoiseKind::Normal01, 2, 7, 9, 30)) ==
        encode_suite(gen_test_suite(NoiseKind::Normal01, 2, 7, 9, 30)));
  CHECK(encode_suite(gen_test_suite(NoiseKind::Normal01, 2, 7, 9, 30)) !=
        encode_suite(gen_test_suite(NoiseKind::Normal01, 2, 8, 9, 30)));
  CHECK_THROWS_AS(gen_test_suite(NoiseKind::Normal01, 0, 1), InvalidArgument);
}

TEST_CASE("binomial confidence intervals") {
  const Interval half = binomial_ci(5000, 10000);
  CHECK(half.lo == doctest::Approx(49.02).epsilon(1e-12));
  CHECK(half.hi == doctest::Approx(50.98).epsilon(1e-12));
  const Interval all = binomial_ci(10000, 10000);
  CHECK(all.lo == 100.0);
  CHECK(all.hi == 100.0);
  const Interval none = binomial_ci(0, 50);
  CHECK(none.lo == 0.0);
  CHECK(none.hi == 0.0);
  const Interval bic = binomial_ci(3523, 10000);
  CHECK((bic.hi - bic.lo) / 2.0 == doctest::Approx(0.9364).epsilon(1e-3));
  CHECK_THROWS_AS(binomial_ci(3, 2), InvalidArgument);
  CHECK_THROWS_AS(binomial_ci(0, 0), InvalidArgument);
}

TEST_CASE("order MSE") {
  const std::vector<int> a{0, 3, 5, 9};
  CHECK(order_mse(a, a) == 0.0);
  const std::vector<int> off{1, 2, 6, 8};
  CHECK(order_mse(off, a) == 1.0);
  const std::vector<int> short_v{1};
  CHECK_THROWS_AS(order_mse(short_v, a), InvalidArgument);
}

TEST_CASE("confusion matrices") {
  const std::vector<int> actual{0, 0, 1, 1, 1, 3};
  const ConfusionMatrix perfect = confusion_matrix(actual, actual);
  CHECK(perfect.rows[0][0] == 100.0);
  CHECK(perfect.rows[1][1] == 100.0);
  CHECK(perfect.empty_rows[2]);
  CHECK(std::isnan(perfect.rows[2][2]));
  const std::vector<int> pred{0, 1, 1, 2, 2, 9};
  const ConfusionMatrix m = confusion_matrix(pred, actual);
  CHECK(m.rows[0][0] == 50.0);
  CHECK(m.rows[1][2] == doctest::Approx(200.0 / 3.0));
  CHECK(m.rows[3][9] == 100.0);
  const std::vector<int> bad{10, 0, 0, 0, 0, 0};
  CHECK_THROWS_AS(confusion_matrix(bad, actual), InvalidArgument);
}

TEST_CASE("report metrics, failures and order invariance") {
  Rng rng(3);
  std::vector<std::pair<OrderPair, OrderPair>> pairs;
  for (int i = 0; i < 500; ++i) {
    const OrderPair truth{static_cast<int>(rng.uniform_index(10)), static_cast<int>(rng.uniform_index(10))};
    OrderPair guess = truth;
    if (rng.uniform() < 0.4) guess.p = static_cast<int>(rng.uniform_index(10));
    if (rng.uniform() < 0.5) guess.q = static_cast<int>(rng.uniform_index(10));
    if (i % 50 == 0) guess = {-1, -1};
    pairs.push_back({truth, guess});
  }
  const EvalReport r = assemble_report("m", rows_from(pairs));
  CHECK(r.failed == 10);
  CHECK(r.evaluated == 490);
  check_integrity(r);

  // Accuracy is the label-weighted mean of the confusion diagonal.
  std::vector<int> per_label(10, 0);
  for (const auto& row : r.rows) {
    if (!row.failed()) ++per_label[row.p];
  }
  double weighted = 0.0;
  for (int k = 0; k < 10; ++k) {
    if (per_label[k]) weighted += r.confusion_ar.rows[k][k] * per_label[k];
  }
  CHECK(std::abs(weighted / 490.0 - r.ar_acc) < 1e-9);

  std::vector<std::pair<OrderPair, OrderPair>> shuffled = pairs;
  std::shuffle(shuffled.begin(), shuffled.end(), rng.engine());
  const EvalReport s = assemble_report("m", rows_from(shuffled));
  CHECK(s.ar_acc == r.ar_acc);
  CHECK(s.ma_acc == r.ma_acc);
  CHECK(s.both_acc == r.both_acc);
  CHECK(s.ar_mse == r.ar_mse);
  CHECK(s.ma_mse == r.ma_mse);
  for (int k = 0; k < 10; ++k) {
    for (int j = 0; j < 10; ++j) CHECK(s.confusion_ma.rows[k][j] == r.confusion_ma.rows[k][j]);
  }
}

TEST_CASE("random guessing lands near ten percent") {
  // Distinct first values give every series its own guesser seed.
  TestSuite varied = labelled_only(10, 9);
  for (std::size_t i = 0; i < varied.series.size(); ++i) varied.series[i].values[0] = static_cast<double>(i);
  const SeriesMethod guess_varied = [](const TimeSeries& s) {
    Rng rng(mix_seed(7, "guess", static_cast<std::uint64_t>(s.values[0])));
    return MethodOutcome{static_cast<int>(rng.uniform_index(10)), static_cast<int>(rng.uniform_index(10)), 0.0};
  };
  const EvalReport r = evaluate_method("random", guess_varied, varied);
  CHECK(r.evaluated == 1000);
  CHECK(r.ar_ci.lo <= 10.0);
  CHECK(r.ar_ci.hi >= 10.0);
  check_integrity(r);
}

TEST_CASE("method exceptions become failed rows") {
  const TestSuite suite = labelled_only(1, 2);
  const SeriesMethod flaky = [](const TimeSeries& s) {
    if (s.label->p == 1) throw NumericalError("boom");
    return MethodOutcome{s.label->p, s.label->q, 1.0};
  };
  const EvalReport r = evaluate_method("flaky", flaky, suite);
  CHECK(r.failed == 3);
  CHECK(r.evaluated == 6);
  CHECK(r.both_acc == 100.0);
  CHECK(r.rows[3].p_hat == -1);
}

TEST_CASE("per-series CSV round trip") {
  const std::vector<SeriesRow> rows = rows_from({{{1, 2}, {1, 3}}, {{0, 0}, {-1, -1}}});
  std::stringstream io;
  write_series_csv(io, rows);
  CHECK(io.str().rfind("series_id,p,q,p_hat,q_hat,criterion_or_prob,wall_ms\n", 0) == 0);
  const std::vector<SeriesRow> back = read_series_csv(io);
  REQUIRE(back.size() == 2);
  CHECK(back[0].q_hat == 3);
  CHECK(back[1].failed());
  std::istringstream bad("nope\n");
  CHECK_THROWS_AS(read_series_csv(bad), InvalidArgument);
}

TEST_CASE("order-two subset") {
  const TestSuite suite = gen_test_suite(NoiseKind::Normal01, 100, 1, 9, 12);
  std::vector<SeriesRow> rows;
  for (std::size_t i = 0; i < suite.series.size(); ++i) {
    const auto l = *suite.series[i].label;
    rows.push_back({static_cast<std::int64_t>(i), l.p, l.q, l.p, l.q, 0.0, 0.0});
  }
  const SubsetResult perfect = chenoweth_subset(rows, suite);
  CHECK(perfect.count == 800);
  CHECK(perfect.both_acc == 100.0);

  for (auto& r : rows) r.q_hat = (r.q + 1) % 10;
  CHECK(chenoweth_subset(rows, suite).both_acc == 0.0);

  std::vector<SeriesRow> none;
  for (const auto& r : rows) {
    if (r.p > 2) none.push_back(r);
  }
  CHECK_THROWS_AS(chenoweth_subset(none, suite), InvalidArgument);
  rows[0].p = 5;
  CHECK_THROWS_AS(chenoweth_subset(rows, suite), InvalidArgument);
}

TEST_CASE("likelihood methods over a small suite") {
  const TestSuite suite = gen_test_suite(NoiseKind::Normal01, 1, 2, 1, 300);
  SearchConfig c;
  c.p_max = 1;
  c.q_max = 1;
  const EvalReport full = evaluate_method(c, suite);
  CHECK(full.method == "BIC full");
  CHECK(full.failed == 0);
  CHECK(full.evaluated == 4);
  check_integrity(full);
  for (const auto& r : full.rows) CHECK(std::isfinite(r.criterion_or_prob));

  const std::vector<EvalReport> reports{full, full};
  const std::string table = format_report_table(reports);
  CHECK(table.find("BIC full") != std::string::npos);
  CHECK(table.find("Both correct 95% C.I.") != std::string::npos);
  std::ostringstream csv;
  write_report_csv(csv, reports);
  CHECK(csv.str().rfind("method,evaluated,failed,ar_acc", 0) == 0);
  CHECK(format_confusion(full.confusion_ar, "AR").find("AR") == 0);
}
