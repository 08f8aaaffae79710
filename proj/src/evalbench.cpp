#include "armaid/evalbench.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <thread>

#include "armaid/parallel.hpp"

namespace armaid {

TestSuite gen_test_suite(NoiseKind noise, int batches, std::uint64_t seed, int max_order, int length) {
  if (batches < 1) throw InvalidArgument("gen_test_suite: batches must be at least 1");
  if (max_order < 0 || max_order > kMaxOrder) throw InvalidArgument("gen_test_suite: max_order must be in 0..9");
  if (length < 2) throw InvalidArgument("gen_test_suite: length must be at least 2");
  TestSuite suite;
  suite.noise = noise;
  suite.batches = batches;
  suite.max_order = max_order;
  suite.length = length;
  suite.seed = seed;
  const std::vector<int> orders = order_range(0, max_order);
  std::vector<LabeledBatch> parts(static_cast<std::size_t>(batches));
  const Rng root(seed);
  parallel_for(0, parts.size(), [&](std::size_t b) {
    Rng stream = root.substream("suite-batch", b);
    parts[b] = make_training_batch(orders, orders, noise, stream, 1, length, false);
  });
  for (LabeledBatch& b : parts) {
    for (TimeSeries& s : b.series) suite.series.push_back(std::move(s));
  }
  return suite;
}

Interval binomial_ci(std::int64_t successes, std::int64_t trials) {
  if (trials < 1 || successes < 0 || successes > trials) {
    throw InvalidArgument("binomial_ci: need 0 <= successes <= trials and trials >= 1");
  }
  const double p = static_cast<double>(successes) / static_cast<double>(trials);
  const double half = 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  return {std::max(0.0, 100.0 * (p - half)), std::min(100.0, 100.0 * (p + half))};
}

double order_mse(std::span<const int> predicted, std::span<const int> actual) {
  if (predicted.size() != actual.size()) throw InvalidArgument("order_mse: length mismatch");
  if (predicted.empty()) throw InvalidArgument("order_mse: empty input");
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const std::int64_t d = predicted[i] - actual[i];
    sum += d * d;
  }
  return static_cast<double>(sum) / static_cast<double>(predicted.size());
}

ConfusionMatrix confusion_matrix(std::span<const int> predicted, std::span<const int> actual, int classes) {
  if (predicted.size() != actual.size()) throw InvalidArgument("confusion_matrix: length mismatch");
  std::vector<std::vector<std::int64_t>> counts(classes, std::vector<std::int64_t>(classes, 0));
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] < 0 || predicted[i] >= classes || actual[i] < 0 || actual[i] >= classes) {
      throw InvalidArgument("confusion_matrix: label outside 0.." + std::to_string(classes - 1));
    }
    ++counts[actual[i]][predicted[i]];
  }
  ConfusionMatrix m;
  m.rows.assign(classes, std::vector<double>(classes, std::numeric_limits<double>::quiet_NaN()));
  m.empty_rows.assign(classes, true);
  for (int r = 0; r < classes; ++r) {
    std::int64_t total = 0;
    for (std::int64_t c : counts[r]) total += c;
    if (total == 0) continue;
    m.empty_rows[r] = false;
    for (int c = 0; c < classes; ++c) {
      m.rows[r][c] = 100.0 * static_cast<double>(counts[r][c]) / static_cast<double>(total);
    }
  }
  return m;
}

EvalReport assemble_report(const std::string& method, std::vector<SeriesRow> rows) {
  EvalReport rep;
  rep.method = method;
  std::vector<int> p, q, ph, qh;
  std::int64_t ar_ok = 0, ma_ok = 0, both_ok = 0;
  for (const SeriesRow& r : rows) {
    if (r.failed()) {
      ++rep.failed;
      continue;
    }
    p.push_back(r.p);
    q.push_back(r.q);
    ph.push_back(r.p_hat);
    qh.push_back(r.q_hat);
    ar_ok += r.p == r.p_hat;
    ma_ok += r.q == r.q_hat;
    both_ok += r.p == r.p_hat && r.q == r.q_hat;
  }
  rep.evaluated = static_cast<std::int64_t>(p.size());
  rep.rows = std::move(rows);
  if (rep.evaluated == 0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rep.ar_acc = rep.ma_acc = rep.both_acc = rep.ar_mse = rep.ma_mse = nan;
    rep.ar_ci = rep.ma_ci = rep.both_ci = {nan, nan};
    rep.confusion_ar = confusion_matrix({}, {});
    rep.confusion_ma = confusion_matrix({}, {});
    return rep;
  }
  const double n = static_cast<double>(rep.evaluated);
  rep.ar_acc = 100.0 * static_cast<double>(ar_ok) / n;
  rep.ma_acc = 100.0 * static_cast<double>(ma_ok) / n;
  rep.both_acc = 100.0 * static_cast<double>(both_ok) / n;
  rep.ar_ci = binomial_ci(ar_ok, rep.evaluated);
  rep.ma_ci = binomial_ci(ma_ok, rep.evaluated);
  rep.both_ci = binomial_ci(both_ok, rep.evaluated);
  rep.ar_mse = order_mse(ph, p);
  rep.ma_mse = order_mse(qh, q);
  rep.confusion_ar = confusion_matrix(ph, p);
  rep.confusion_ma = confusion_matrix(qh, q);
  return rep;
}

namespace {

std::string hardware_tag() {
  std::ostringstream s;
  s << std::thread::hardware_concurrency() << " hw threads, " << num_threads() << " used";
  return s.str();
}

}  // namespace

EvalReport evaluate_method(const std::string& tag, const SeriesMethod& method, const TestSuite& suite) {
  std::vector<SeriesRow> rows(suite.series.size());
  const auto wall0 = std::chrono::steady_clock::now();
  const std::clock_t cpu0 = std::clock();
  parallel_for(0, suite.series.size(), [&](std::size_t i) {
    const TimeSeries& s = suite.series[i];
    SeriesRow& row = rows[i];
    row.series_id = static_cast<std::int64_t>(i);
    if (s.label) {
      row.p = s.label->p;
      row.q = s.label->q;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const MethodOutcome o = method(s);
      row.p_hat = o.p_hat;
      row.q_hat = o.q_hat;
      row.criterion_or_prob = o.score;
    } catch (const std::exception&) {
      row.p_hat = row.q_hat = -1;
      row.criterion_or_prob = std::numeric_limits<double>::quiet_NaN();
    }
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  });
  EvalReport rep = assemble_report(tag, std::move(rows));
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  rep.cpu_seconds = static_cast<double>(std::clock() - cpu0) / CLOCKS_PER_SEC;
  rep.hardware = hardware_tag();
  return rep;
}

EvalReport evaluate_method(const Identifier& identifier, const TestSuite& suite, const std::string& tag) {
  const std::string name =
      tag.empty() ? std::string(identifier.mode() == AssemblyMode::Separate ? "CNN (Separate)" : "CNN (Joint)") : tag;
  // Batched inference: timing is shared evenly across series.
  const auto wall0 = std::chrono::steady_clock::now();
  const std::clock_t cpu0 = std::clock();
  std::vector<Identification> ids;
  try {
    ids = identifier.identify_all(suite.series);
  } catch (const std::exception&) {
    // Some series cannot be processed (e.g. constant); isolate them one by one.
    const std::string name_copy = name;
    return evaluate_method(
        name_copy,
        [&identifier](const TimeSeries& s) {
          const Identification id = identifier.identify(s.values);
          return MethodOutcome{id.p, id.q, id.p_probability * id.q_probability};
        },
        suite);
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall0).count();
  std::vector<SeriesRow> rows(suite.series.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    SeriesRow& r = rows[i];
    r.series_id = static_cast<std::int64_t>(i);
    if (suite.series[i].label) {
      r.p = suite.series[i].label->p;
      r.q = suite.series[i].label->q;
    }
    r.p_hat = ids[i].p;
    r.q_hat = ids[i].q;
    r.criterion_or_prob = ids[i].p_probability * ids[i].q_probability;
    r.wall_ms = 1000.0 * wall / static_cast<double>(rows.size());
  }
  EvalReport rep = assemble_report(name, std::move(rows));
  rep.wall_seconds = wall;
  rep.cpu_seconds = static_cast<double>(std::clock() - cpu0) / CLOCKS_PER_SEC;
  rep.hardware = hardware_tag();
  return rep;
}

std::string method_tag(const SearchConfig& config) {
  return (config.criterion == Criterion::AIC ? "AIC " : "BIC ") + to_string(config.mode);
}

EvalReport evaluate_method(const SearchConfig& config, const TestSuite& suite, const std::string& tag) {
  config.validate();
  // Parallelism goes across series; the fits inside one search then run serially.
  return evaluate_method(
      tag.empty() ? method_tag(config) : tag,
      [&config](const TimeSeries& s) {
        const SearchResult r = search(s.values, config);
        return MethodOutcome{r.p, r.q, r.value};
      },
      suite);
}

void write_series_csv(std::ostream& out, std::span<const SeriesRow> rows) {
  out << "series_id,p,q,p_hat,q_hat,criterion_or_prob,wall_ms\n";
  out << std::setprecision(17);
  for (const SeriesRow& r : rows) {
    out << r.series_id << ',' << r.p << ',' << r.q << ',' << r.p_hat << ',' << r.q_hat << ',' << r.criterion_or_prob
        << ',' << r.wall_ms << '\n';
  }
}

std::vector<SeriesRow> read_series_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("series_id,p,q,p_hat,q_hat", 0) != 0) {
    throw InvalidArgument("read_series_csv: missing or unexpected header line");
  }
  std::vector<SeriesRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    SeriesRow r;
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 7) {
      throw InvalidArgument("read_series_csv: line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected 7");
    }
    try {
      r.series_id = std::stoll(fields[0]);
      r.p = std::stoi(fields[1]);
      r.q = std::stoi(fields[2]);
      r.p_hat = std::stoi(fields[3]);
      r.q_hat = std::stoi(fields[4]);
      r.criterion_or_prob = std::stod(fields[5]);
      r.wall_ms = std::stod(fields[6]);
    } catch (const std::exception&) {
      throw InvalidArgument("read_series_csv: malformed number on line " + std::to_string(line_no));
    }
    rows.push_back(r);
  }
  return rows;
}

void write_report_csv(std::ostream& out, std::span<const EvalReport> reports) {
  out << "method,evaluated,failed,ar_acc,ar_ci_lo,ar_ci_hi,ar_mse,ma_acc,ma_ci_lo,ma_ci_hi,ma_mse,"
         "both_acc,both_ci_lo,both_ci_hi,wall_seconds,cpu_seconds,hardware\n";
  out << std::setprecision(10);
  for (const EvalReport& r : reports) {
    out << '"' << r.method << "\"," << r.evaluated << ',' << r.failed << ',' << r.ar_acc << ',' << r.ar_ci.lo << ','
        << r.ar_ci.hi << ',' << r.ar_mse << ',' << r.ma_acc << ',' << r.ma_ci.lo << ',' << r.ma_ci.hi << ','
        << r.ma_mse << ',' << r.both_acc << ',' << r.both_ci.lo << ',' << r.both_ci.hi << ',' << r.wall_seconds
        << ',' << r.cpu_seconds << ",\"" << r.hardware << "\"\n";
  }
}

namespace {

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string interval(const Interval& i) { return "[" + fixed(i.lo, 2) + ", " + fixed(i.hi, 2) + "]"; }

}  // namespace

std::string format_report_table(std::span<const EvalReport> reports) {
  std::vector<std::pair<std::string, std::vector<std::string>>> lines = {
      {"", {}},           {"AR(%)", {}},      {"AR 95% C.I.", {}},          {"AR MSE", {}},
      {"MA(%)", {}},      {"MA 95% C.I.", {}}, {"MA MSE", {}},              {"Both correct(%)", {}},
      {"Both correct 95% C.I.", {}},          {"Time taken (hours)", {}},   {"Failed", {}}};
  for (const EvalReport& r : reports) {
    const std::string cells[] = {r.method,
                                 fixed(r.ar_acc, 2),
                                 interval(r.ar_ci),
                                 fixed(r.ar_mse, 3),
                                 fixed(r.ma_acc, 2),
                                 interval(r.ma_ci),
                                 fixed(r.ma_mse, 3),
                                 fixed(r.both_acc, 2),
                                 interval(r.both_ci),
                                 fixed(r.wall_seconds / 3600.0, 3),
                                 std::to_string(r.failed)};
    for (std::size_t i = 0; i < lines.size(); ++i) lines[i].second.push_back(cells[i]);
  }
  std::size_t label_w = 0;
  for (const auto& l : lines) label_w = std::max(label_w, l.first.size());
  std::vector<std::size_t> col_w(reports.size(), 0);
  for (const auto& l : lines) {
    for (std::size_t c = 0; c < l.second.size(); ++c) col_w[c] = std::max(col_w[c], l.second[c].size());
  }
  std::ostringstream out;
  for (const auto& l : lines) {
    out << std::setw(static_cast<int>(label_w)) << std::right << l.first;
    for (std::size_t c = 0; c < l.second.size(); ++c) out << "  " << std::setw(static_cast<int>(col_w[c])) << l.second[c];
    out << '\n';
  }
  return out.str();
}

std::string format_confusion(const ConfusionMatrix& m, const std::string& title) {
  std::ostringstream out;
  out << title << " (rows: actual order, columns: classified order, % of row)\n    ";
  const int k = static_cast<int>(m.rows.size());
  for (int c = 0; c < k; ++c) out << std::setw(7) << c;
  out << '\n';
  for (int r = 0; r < k; ++r) {
    out << std::setw(4) << r;
    for (int c = 0; c < k; ++c) {
      if (m.empty_rows[r]) {
        out << std::setw(7) << "-";
      } else {
        out << std::setw(7) << fixed(m.rows[r][c], 2);
      }
    }
    out << '\n';
  }
  return out.str();
}

SubsetResult chenoweth_subset(std::span<const SeriesRow> rows, const TestSuite& suite) {
  SubsetResult res;
  std::int64_t ok = 0;
  for (const SeriesRow& r : rows) {
    if (r.series_id < 0 || r.series_id >= static_cast<std::int64_t>(suite.series.size())) {
      throw InvalidArgument("chenoweth_subset: series_id " + std::to_string(r.series_id) + " not in the suite");
    }
    const auto& label = suite.series[static_cast<std::size_t>(r.series_id)].label;
    if (!label || label->p != r.p || label->q != r.q) {
      throw InvalidArgument("chenoweth_subset: labels of series " + std::to_string(r.series_id) +
                            " disagree with the suite");
    }
    if (r.p > 2 || r.q > 2 || (r.p == 0 && r.q == 0)) continue;
    ++res.count;
    if (r.failed()) continue;
    ++res.evaluated;
    ok += r.p == r.p_hat && r.q == r.q_hat;
  }
  if (res.evaluated == 0) throw InvalidArgument("chenoweth_subset: no qualifying series with a prediction");
  res.both_acc = 100.0 * static_cast<double>(ok) / static_cast<double>(res.evaluated);
  res.ci = binomial_ci(ok, res.evaluated);
  return res;
}

}  // namespace armaid
