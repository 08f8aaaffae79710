#include "armaid/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "CLI11.hpp"
#include "armaid/baseline.hpp"
#include "armaid/evalbench.hpp"
#include "armaid/identify.hpp"
#include "armaid/parallel.hpp"
#include "armaid/persist.hpp"
#include "armaid/trainer.hpp"

namespace armaid {
namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::uint64_t seed = 1;
  int threads = 0;
  bool deterministic = false;
  bool full = false;
  std::string config;
};

const std::vector<std::string> kVariantNames{"plain", "original", "relu-before-addition", "full-pre-activation"};

// Output files must land in an existing directory.
const CLI::Validator kWritablePath(
    [](std::string& path) -> std::string {
      const fs::path parent = fs::absolute(fs::path(path)).parent_path();
      if (!fs::is_directory(parent)) return "directory does not exist: " + parent.string();
      if (fs::is_directory(path)) return "path is a directory: " + path;
      return {};
    },
    "WRITABLE");

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--seed", c.seed, "root random seed")->capture_default_str();
  sub->add_option("--threads", c.threads, "worker threads (0: all hardware threads)")->check(CLI::NonNegativeNumber);
  sub->add_flag("--deterministic", c.deterministic, "omit wall-clock fields so output files are bit-reproducible");
  sub->add_option("--config", c.config, "key=value file of option defaults")->check(CLI::ExistingFile);
  sub->add_flag("--full", c.full, "full-scale settings for options not given explicitly");
}

void apply_common(const Common& c) {
  int n = c.threads;
  if (n == 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  set_num_threads(n);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int parse_int(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty()) throw UsageError(what + ": not an integer: '" + text + "'");
  return v;
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
  std::vector<int> out;
  for (const std::string& s : split_list(text)) out.push_back(parse_int(s, what));
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

/// "0-9", "3" or "0,2,5"; sorted, unique, within 0..9.
std::vector<int> parse_orders(const std::string& text, const std::string& what) {
  std::vector<int> out;
  for (const std::string& part : split_list(text)) {
    const auto dash = part.find('-');
    if (dash != std::string::npos && dash > 0) {
      const int lo = parse_int(part.substr(0, dash), what);
      const int hi = parse_int(part.substr(dash + 1), what);
      if (lo > hi) throw UsageError(what + ": empty range '" + part + "'");
      for (int k = lo; k <= hi; ++k) out.push_back(k);
    } else {
      out.push_back(parse_int(part, what));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.empty()) throw UsageError(what + ": no orders given");
  if (out.front() < 0 || out.back() > kMaxOrder) throw UsageError(what + ": orders must lie in 0..9");
  return out;
}

bool given(const CLI::App* sub, const std::string& name) { return sub->count(name) > 0; }

void strip_timing(Checkpoint& ck) {
  ck.trace.wall_seconds = 0.0;
  std::fill(ck.trace.window_wall_seconds.begin(), ck.trace.window_wall_seconds.end(), 0.0);
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

std::string file_tag(const std::string& method) {
  std::string out;
  for (char ch : method) {
    if (std::isalnum(static_cast<unsigned char>(ch))) out += static_cast<char>(std::tolower(ch));
    else if (!out.empty() && out.back() != '_') out += '_';
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PersistError(PersistErrorCode::Io, "cannot open " + path + " for writing");
  out << text;
  if (!out) throw PersistError(PersistErrorCode::Io, "write failed: " + path);
}

std::vector<Checkpoint> load_checkpoints(const std::string& list) {
  std::vector<Checkpoint> out;
  for (const std::string& path : split_list(list)) out.push_back(load_checkpoint(path));
  return out;
}

Identifier make_identifier(const std::string& ar_path, const std::string& ma_path, const std::string& ensemble) {
  const Checkpoint ar = load_checkpoint(ar_path);
  if (!ensemble.empty()) return Identifier::joint(ar, load_checkpoints(ensemble));
  return Identifier::separate(ar, load_checkpoint(ma_path));
}

// simulate

struct SimulateArgs {
  std::string noise = "normal";
  int batches = 1;
  int max_order = kMaxOrder;
  int length = kDefaultSeriesLength;
  std::string out;
};

int run_simulate(const CLI::App* sub, const Common& c, SimulateArgs a) {
  if (c.full && !given(sub, "--batches")) a.batches = 100;
  const TestSuite suite = gen_test_suite(parse_noise_kind(a.noise), a.batches, c.seed, a.max_order, a.length);
  save_suite(suite, a.out);
  std::cout << "wrote " << suite.series.size() << " series of length " << suite.length << " to " << a.out << "\n";
  return 0;
}

// train / retrain / sweep share these settings

struct TrainArgs {
  std::string target = "ar";
  std::string noise = "normal";
  std::string variant = "relu-before-addition";
  int depth = 8;
  int kw = 7;
  int features = 8;
  int classes = kMaxOrder + 1;
  int length = kDefaultSeriesLength;
  std::string opposite = "0-9";
  std::string optimizer = "nag";
  double momentum = 0.75;
  double lr = 0.1;
  int window = 100;
  int patience = 6;
  double stop_lr = 1e-4;
  int copies = 1;
  std::int64_t max_batches = 0;
  bool quiet = false;
};

void add_train_options(CLI::App* sub, TrainArgs& a, bool with_architecture) {
  if (with_architecture) {
    sub->add_option("--target", a.target, "order to classify")->check(CLI::IsMember({"ar", "ma", "AR", "MA"}));
    sub->add_option("--noise", a.noise, "innovation distribution")->check(CLI::IsMember({"normal", "t2"}));
    sub->add_option("--variant", a.variant, "architecture")->check(CLI::IsMember(kVariantNames));
    sub->add_option("--depth", a.depth, "convolution layers")->capture_default_str();
    sub->add_option("--kw", a.kw, "filter width (odd)")->capture_default_str();
    sub->add_option("--features", a.features, "feature maps")->capture_default_str();
    sub->add_option("--classes", a.classes, "target orders 0..classes-1")->capture_default_str();
    sub->add_option("--length", a.length, "series length")->capture_default_str();
    sub->add_option("--opposite", a.opposite, "opposite-order set, e.g. 0-9 or 0,1")->capture_default_str();
    sub->add_option("--optimizer", a.optimizer, "nag or adam")->check(CLI::IsMember({"nag", "adam"}));
    sub->add_option("--momentum", a.momentum, "NAG momentum")->capture_default_str();
    sub->add_option("--lr", a.lr, "initial learning rate")->capture_default_str();
  }
  sub->add_option("--window", a.window, "batches per schedule window")->capture_default_str();
  sub->add_option("--patience", a.patience, "stale windows before halving")->capture_default_str();
  sub->add_option("--stop-lr", a.stop_lr, "stop once the halved rate falls below this")->capture_default_str();
  sub->add_option("--copies", a.copies, "series per (p, q) pair in a batch")->capture_default_str();
  sub->add_option("--max-batches", a.max_batches, "batch cap per run (0: until the schedule stops)");
  sub->add_flag("--quiet", a.quiet, "no progress lines");
}

NetworkConfig network_config(const TrainArgs& a) {
  NetworkConfig cfg;
  cfg.variant = parse_variant(a.variant);
  cfg.depth = a.depth;
  cfg.filter_width = a.kw;
  cfg.features = a.features;
  cfg.num_classes = a.classes;
  cfg.input_length = a.length;
  cfg.validate();
  return cfg;
}

TrainOptions train_options(const TrainArgs& a) {
  TrainOptions o;
  o.optimizer.kind = a.optimizer == "adam" ? OptimizerKind::Adam : OptimizerKind::NAG;
  o.optimizer.momentum = a.momentum;
  o.initial_lr = a.lr;
  o.window = a.window;
  o.patience = a.patience;
  o.stop_lr = a.stop_lr;
  o.copies = a.copies;
  o.max_batches = a.max_batches;
  if (!a.quiet) {
    o.on_window = [](const WindowReport& w) {
      std::cerr << "window " << w.window_index << "  mean error " << fmt(w.mean_error) << "  lr " << w.lr << "  "
                << fmt(w.wall_seconds, 1) << " s"
                << (w.action == ScheduleAction::Halve  ? "  halve"
                    : w.action == ScheduleAction::Stop ? "  stop"
                                                       : "")
                << "\n";
    };
  }
  return o;
}

void apply_full_architecture(const CLI::App* sub, TrainArgs& a) {
  // The largest best-performing CNN-AR architecture.
  if (!given(sub, "--depth")) a.depth = 16;
  if (!given(sub, "--kw")) a.kw = 15;
  if (!given(sub, "--features")) a.features = 68;
}

struct TrainOut {
  std::string out;
  std::string trace;
};

int run_train(const CLI::App* sub, const Common& c, TrainArgs a, const TrainOut& o) {
  if (c.full) apply_full_architecture(sub, a);
  const NetworkConfig cfg = network_config(a);
  const std::vector<int> opposite = parse_orders(a.opposite, "--opposite");
  if (!a.quiet) {
    std::cerr << "training " << a.target << " classifier: " << to_string(cfg.variant) << " D=" << cfg.depth
              << " kW=" << cfg.filter_width << " F=" << cfg.features << " (" << param_count(cfg) << " parameters)\n";
  }
  Checkpoint ck = train(cfg, parse_target(a.target), parse_noise_kind(a.noise), opposite, train_options(a), c.seed);
  if (c.deterministic) strip_timing(ck);
  save_checkpoint(ck, o.out);
  if (!o.trace.empty()) {
    std::ofstream t(o.trace);
    if (!t) throw PersistError(PersistErrorCode::Io, "cannot open " + o.trace);
    write_trace_csv(t, ck.trace);
  }
  std::cout << "mean error " << fmt(ck.mean_error()) << " after " << ck.trace.total_batches << " batches; wrote "
            << o.out << "\n";
  return 0;
}

struct RetrainArgs {
  std::string in;
  std::string out;
  std::string ensemble_dir;
  double reset_lr = 0.5;
  int opposite_max = kMaxOrder;
  int round_patience = 6;
  int max_rounds = 30;
};

int run_retrain(const Common& c, const TrainArgs& t, const RetrainArgs& a) {
  const Checkpoint start = load_checkpoint(a.in);
  RetrainOptions o;
  o.train = train_options(t);
  o.train.on_window = nullptr;
  o.reset_lr = a.reset_lr;
  o.opposite_max = a.opposite_max;
  o.round_patience = a.round_patience;
  o.max_rounds = a.max_rounds;
  if (!t.quiet) {
    o.on_round = [](const std::string& stage, int round, double err, bool accepted) {
      std::cerr << stage << " round " << round << "  mean error " << fmt(err) << (accepted ? "  kept" : "") << "\n";
    };
  }
  RetrainResult r = progressive_retrain(start, o, c.seed);
  if (c.deterministic) {
    strip_timing(r.final);
    for (auto& ck : r.ensemble) strip_timing(ck);
    for (auto& ck : r.ranged) strip_timing(ck);
  }
  save_checkpoint(r.final, a.out);
  if (!a.ensemble_dir.empty()) {
    for (std::size_t k = 0; k < r.ensemble.size(); ++k) {
      save_checkpoint(r.ensemble[k], (fs::path(a.ensemble_dir) / ("ensemble_" + std::to_string(k) + ".arid")).string());
    }
  }
  std::cout << "mean error " << fmt(start.mean_error()) << " -> " << fmt(r.final.mean_error()) << " over "
            << r.rounds_run << " rounds (" << r.rounds_diverged << " diverged); wrote " << a.out << "\n";
  if (!a.ensemble_dir.empty()) {
    std::cout << "ensemble checkpoints ensemble_0..ensemble_" << r.ensemble.size() - 1 << ".arid in "
              << a.ensemble_dir << "\n";
  }
  return 0;
}

struct SweepArgs {
  std::string variants = "relu-before-addition";
  std::string depths = "8";
  std::string kws = "7";
  std::string features = "8";
  int repeats = 1;
  std::string out;
};

int run_sweep(const CLI::App* sub, const Common& c, TrainArgs t, SweepArgs a) {
  if (c.full) {
    if (!given(sub, "--variants")) a.variants = "original,relu-before-addition,full-pre-activation";
    if (!given(sub, "--depths")) a.depths = "8,12,16,20,24";
    if (!given(sub, "--kws")) a.kws = "7,11,15";
    if (!given(sub, "--features")) a.features = "8,20,32,44,56,68";
    if (!given(sub, "--repeats")) a.repeats = 5;
  }
  if (a.repeats < 1) throw UsageError("--repeats must be at least 1");
  struct Run {
    NetworkConfig config;
    int repeat = 0;
    std::uint64_t seed = 0;
    double mean_error = std::numeric_limits<double>::quiet_NaN();
    std::int64_t batches = 0;
    double wall = 0.0;
    std::string status = "ok";
  };
  std::vector<Run> runs;
  for (const std::string& v : split_list(a.variants)) {
    for (int d : parse_int_list(a.depths, "--depths")) {
      for (int kw : parse_int_list(a.kws, "--kws")) {
        for (int f : parse_int_list(a.features, "--features")) {
          TrainArgs ta = t;
          ta.variant = v;
          ta.depth = d;
          ta.kw = kw;
          ta.features = f;
          for (int r = 0; r < a.repeats; ++r) {
            runs.push_back({network_config(ta), r, mix_seed(c.seed, "sweep", runs.size())});
          }
        }
      }
    }
  }
  const std::vector<int> opposite = parse_orders(t.opposite, "--opposite");
  TrainOptions opts = train_options(t);
  opts.on_window = nullptr;
  const Target target = parse_target(t.target);
  const NoiseKind noise = parse_noise_kind(t.noise);
  parallel_for(0, runs.size(), [&](std::size_t i) {
    Run& run = runs[i];
    try {
      const Checkpoint ck = train(run.config, target, noise, opposite, opts, run.seed);
      run.mean_error = ck.mean_error();
      run.batches = ck.trace.total_batches;
      run.wall = c.deterministic ? 0.0 : ck.trace.wall_seconds;
    } catch (const TrainingDiverged&) {
      run.status = "diverged";
    }
    if (!t.quiet) {
      std::cerr << "run " << i + 1 << "/" << runs.size() << " " << to_string(run.config.variant) << " D="
                << run.config.depth << " kW=" << run.config.filter_width << " F=" << run.config.features
                << "  mean error " << fmt(run.mean_error) << "\n";
    }
  });
  std::ofstream out(a.out);
  if (!out) throw PersistError(PersistErrorCode::Io, "cannot open " + a.out);
  out << "run,variant,depth,kW,features,params,repeat,seed,mean_error,total_batches,wall_seconds,status\n";
  out << std::setprecision(17);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const Run& r = runs[i];
    out << i << ',' << to_string(r.config.variant) << ',' << r.config.depth << ',' << r.config.filter_width << ','
        << r.config.features << ',' << param_count(r.config) << ',' << r.repeat << ',' << r.seed << ','
        << r.mean_error << ',' << r.batches << ',' << r.wall << ',' << r.status << '\n';
  }
  std::cout << "wrote " << runs.size() << " runs to " << a.out << "\n";
  return 0;
}

// identify / baseline / bench / subset

struct NetArgs {
  std::string ar;
  std::string ma;
  std::string ensemble;
};

void add_net_options(CLI::App* sub, NetArgs& n, bool required) {
  auto* ar = sub->add_option("--ar-checkpoint", n.ar, "CNN-AR checkpoint")->check(CLI::ExistingFile);
  auto* ma = sub->add_option("--ma-checkpoint", n.ma, "CNN-MA checkpoint")->check(CLI::ExistingFile);
  sub->add_option("--ma-ensemble", n.ensemble, "comma-separated CNN-MA checkpoints, one per AR order (Joint)");
  if (required) {
    ar->required();
    ma->required();
  }
}

struct IdentifyArgs {
  std::string suite;
  std::string series;
  std::string out;
};

std::vector<double> read_series_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw PersistError(PersistErrorCode::Io, "cannot open " + path);
  std::vector<double> values;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comma = line.find(',');
    std::string cell = comma == std::string::npos ? line : line.substr(comma + 1);
    cell.erase(0, cell.find_first_not_of(" \t\r"));
    cell.erase(cell.find_last_not_of(" \t\r") + 1);
    if (cell.empty()) continue;
    try {
      std::size_t used = 0;
      values.push_back(std::stod(cell, &used));
      if (used != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      if (values.empty() && line_no == 1) continue;  // header
      throw PersistError(PersistErrorCode::HeaderParse, path + ":" + std::to_string(line_no) + ": not a number");
    }
  }
  return values;
}

int run_identify(const NetArgs& n, const IdentifyArgs& a) {
  if (n.ar.empty()) throw UsageError("--ar-checkpoint is required");
  if (n.ma.empty() && n.ensemble.empty()) throw UsageError("--ma-checkpoint or --ma-ensemble is required");
  if (a.suite.empty() == a.series.empty()) throw UsageError("exactly one of --suite and --series is required");
  const Identifier id = make_identifier(n.ar, n.ma, n.ensemble);
  if (!a.series.empty()) {
    const std::vector<double> x = read_series_file(a.series);
    const Identification r = id.identify(x);
    std::cout << "p_hat=" << r.p << " q_hat=" << r.q << " p_probability=" << fmt(r.p_probability)
              << " q_probability=" << fmt(r.q_probability) << "\n";
    return 0;
  }
  const TestSuite suite = load_suite(a.suite);
  const std::vector<Identification> rs = id.identify_all(suite.series);
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw PersistError(PersistErrorCode::Io, "cannot open " + a.out);
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  out << "series_id,p,q,p_hat,q_hat,p_probability,q_probability\n" << std::setprecision(17);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    const auto& l = suite.series[i].label;
    out << i << ',' << (l ? l->p : -1) << ',' << (l ? l->q : -1) << ',' << rs[i].p << ',' << rs[i].q << ','
        << rs[i].p_probability << ',' << rs[i].q_probability << '\n';
  }
  return 0;
}

struct ReportOut {
  std::string out_dir;
};

void emit_reports(const std::vector<EvalReport>& reports, const std::string& out_dir, bool deterministic) {
  std::cout << format_report_table(reports);
  for (const EvalReport& r : reports) {
    std::cout << "\n" << r.method << "\n"
              << format_confusion(r.confusion_ar, "AR") << format_confusion(r.confusion_ma, "MA");
  }
  if (out_dir.empty()) return;
  std::vector<EvalReport> copy = reports;
  if (deterministic) {
    for (EvalReport& r : copy) {
      r.wall_seconds = r.cpu_seconds = 0.0;
      for (SeriesRow& row : r.rows) row.wall_ms = 0.0;
    }
  }
  std::ostringstream csv;
  write_report_csv(csv, copy);
  write_text((fs::path(out_dir) / "report.csv").string(), csv.str());
  std::ostringstream conf;
  for (const EvalReport& r : copy) {
    const std::string tag = file_tag(r.method);
    std::ostringstream rows;
    write_series_csv(rows, r.rows);
    write_text((fs::path(out_dir) / ("rows_" + tag + ".csv")).string(), rows.str());
    conf << r.method << "\n" << format_confusion(r.confusion_ar, "AR") << format_confusion(r.confusion_ma, "MA") << "\n";
  }
  write_text((fs::path(out_dir) / "confusion.txt").string(), conf.str());
  std::cout << "\nwrote report.csv, confusion.txt and per-series rows to " << out_dir << "\n";
}

struct BaselineArgs {
  std::string suite;
  std::string criterion = "bic";
  std::string mode = "full";
  int p_max = kMaxOrder;
  int q_max = kMaxOrder;
};

int run_baseline(const Common& c, const BaselineArgs& a, const ReportOut& o) {
  const TestSuite suite = load_suite(a.suite);
  SearchConfig cfg;
  cfg.criterion = parse_criterion(a.criterion);
  cfg.mode = parse_search_mode(a.mode);
  cfg.p_max = a.p_max;
  cfg.q_max = a.q_max;
  cfg.validate();
  emit_reports({evaluate_method(cfg, suite)}, o.out_dir, c.deterministic);
  return 0;
}

struct BenchArgs {
  std::string suite;
  std::string baselines;
  int p_max = kMaxOrder;
  int q_max = kMaxOrder;
};

int run_bench(const CLI::App* sub, const Common& c, const NetArgs& n, BenchArgs a, const ReportOut& o) {
  if (c.full && !given(sub, "--baselines")) a.baselines = "aic-full,aic-stepwise,bic-full,bic-stepwise";
  // Validate every method name before any work.
  std::vector<SearchConfig> searches;
  for (const std::string& name : split_list(a.baselines)) {
    const auto dash = name.find('-');
    if (dash == std::string::npos) throw UsageError("--baselines: expected criterion-mode, got '" + name + "'");
    SearchConfig cfg;
    try {
      cfg.criterion = parse_criterion(name.substr(0, dash));
      cfg.mode = parse_search_mode(name.substr(dash + 1));
    } catch (const InvalidArgument& e) {
      throw UsageError(std::string("--baselines: ") + e.what());
    }
    cfg.p_max = a.p_max;
    cfg.q_max = a.q_max;
    cfg.validate();
    searches.push_back(cfg);
  }
  const TestSuite suite = load_suite(a.suite);
  const Checkpoint ar = load_checkpoint(n.ar);
  const Checkpoint ma = load_checkpoint(n.ma);
  std::vector<EvalReport> reports;
  reports.push_back(evaluate_method(Identifier::separate(ar, ma), suite, "CNN (Separate)"));
  if (!n.ensemble.empty()) {
    reports.push_back(evaluate_method(Identifier::joint(ar, load_checkpoints(n.ensemble)), suite, "CNN (Joint)"));
  }
  for (const SearchConfig& cfg : searches) {
    std::cerr << "running " << method_tag(cfg) << " over " << suite.series.size() << " series\n";
    reports.push_back(evaluate_method(cfg, suite));
  }
  emit_reports(reports, o.out_dir, c.deterministic);
  return 0;
}

struct SubsetArgs {
  std::string suite;
  std::string rows;
};

int run_subset(const SubsetArgs& a) {
  const TestSuite suite = load_suite(a.suite);
  std::ifstream in(a.rows);
  if (!in) throw PersistError(PersistErrorCode::Io, "cannot open " + a.rows);
  const std::vector<SeriesRow> rows = read_series_csv(in);
  const SubsetResult r = chenoweth_subset(rows, suite);
  std::cout << "series with p, q <= 2 excluding (0, 0): " << r.count << " (" << r.evaluated << " evaluated)\n"
            << "both orders correct: " << fmt(r.both_acc, 2) << "%  95% C.I. [" << fmt(r.ci.lo, 2) << ", "
            << fmt(r.ci.hi, 2) << "]\n";
  return 0;
}

// selftest

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

double dense_loglik(std::span<const double> x, std::span<const double> phi, std::span<const double> theta,
                    double sigma2) {
  const int n = static_cast<int>(x.size());
  const Autocovariances ac = arma_autocovariances(phi, theta, sigma2, n - 1);
  Eigen::MatrixXd cov(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) cov(i, j) = ac.gamma[static_cast<std::size_t>(std::abs(i - j))];
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
  const Eigen::VectorXd z = llt.matrixL().solve(Eigen::Map<const Eigen::VectorXd>(x.data(), n));
  double logdet = 0.0;
  for (int i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + logdet + z.squaredNorm());
}

struct SelftestArgs {
  bool param_table = false;
};

int run_selftest(const Common& c, const SelftestArgs& a) {
  std::vector<Check> checks;
  const auto add = [&](const std::string& name, bool pass, const std::string& detail) {
    checks.push_back({name, pass, detail});
  };

  const auto count = [](Variant v, int d, int kw, int f) {
    NetworkConfig cfg;
    cfg.variant = v;
    cfg.depth = d;
    cfg.filter_width = kw;
    cfg.features = f;
    return param_count(cfg);
  };
  const std::int64_t small = count(Variant::ReluBeforeAddition, 8, 7, 8);
  const std::int64_t large = count(Variant::ReluBeforeAddition, 24, 15, 68);
  const std::int64_t mid = count(Variant::ReluBeforeAddition, 16, 15, 68);
  add("param count D8 kW7 F8", small == 3502, std::to_string(small));
  add("param count D24 kW15 F68", large == 1541862, std::to_string(large));
  add("param count D16 kW15 F68", mid == 985350, std::to_string(mid));

  Rng rng(c.seed);
  for (Variant v : {Variant::Plain, Variant::Original, Variant::ReluBeforeAddition, Variant::FullPreActivation}) {
    NetworkConfig cfg;
    cfg.variant = v;
    cfg.input_length = 64;
    Rng r = rng.substream("gradcheck", static_cast<std::uint64_t>(v));
    const GradCheckResult g = grad_check(cfg, r);
    add("gradient check " + to_string(v), g.max_rel_error < 1e-5,
        "max rel error " + sci(g.max_rel_error) + " over " + std::to_string(g.coordinates_checked));
  }

  {
    double worst = 0.0;
    Rng r = rng.substream("kalman");
    for (int m = 0; m < 50; ++m) {
      const int p = static_cast<int>(r.uniform_index(3));
      const int q = static_cast<int>(r.uniform_index(3));
      const ArmaSpec spec = random_spec(p, q, NoiseKind::Normal01, r);
      const std::vector<double> x = simulate_arma(spec, 40, r).values;
      const double sigma2 = 0.5 + r.uniform();
      worst = std::max(worst, std::abs(kalman_loglik(x, spec.phi, spec.theta, sigma2) -
                                       dense_loglik(x, spec.phi, spec.theta, sigma2)));
    }
    add("Kalman vs dense likelihood (50 models)", worst < 1e-6, "max abs diff " + sci(worst));
  }

  {
    Rng r = rng.substream("criteria");
    const ArmaSpec spec = random_spec(1, 1, NoiseKind::Normal01, r);
    const std::vector<double> x = standardize(simulate_arma(spec, 300, r)).values;
    const FitResult f = fit_arma(x, 1, 1);
    const double gap = std::abs((f.bic - f.aic) - f.num_params() * (std::log(300.0) - 2.0));
    add("BIC - AIC identity", gap <= 1e-9, "deviation " + sci(gap));
  }

  {
    Checkpoint ck;
    ck.config.depth = 4;
    ck.config.filter_width = 3;
    ck.config.features = 4;
    ck.config.input_length = 32;
    Rng r = rng.substream("persist");
    ck.params = Network::he_initialized(ck.config, r).params();
    ck.optimizer = OptimizerState::create(ck.optimizer.config, ck.params.values.size());
    const std::string bytes = encode_checkpoint(ck);
    add("checkpoint round trip", encode_checkpoint(decode_checkpoint(bytes)) == bytes,
        std::to_string(bytes.size()) + " bytes");
    const TestSuite suite = gen_test_suite(NoiseKind::Normal01, 1, c.seed, 2, 50);
    const std::string sb = encode_suite(suite);
    add("suite round trip", encode_suite(decode_suite(sb)) == sb, std::to_string(sb.size()) + " bytes");
  }

  {
    const Interval ci = binomial_ci(5000, 10000);
    add("binomial interval", std::abs(ci.lo - 49.02) < 1e-9 && std::abs(ci.hi - 50.98) < 1e-9,
        "[" + fmt(ci.lo, 2) + ", " + fmt(ci.hi, 2) + "]");
  }

  std::size_t width = 0;
  for (const Check& ch : checks) width = std::max(width, ch.name.size());
  bool all = true;
  for (const Check& ch : checks) {
    all = all && ch.pass;
    std::cout << std::left << std::setw(static_cast<int>(width) + 2) << ch.name << (ch.pass ? "PASS  " : "FAIL  ")
              << ch.detail << "\n";
  }

  if (a.param_table) {
    std::cout << "\nvariant,depth,kW,features,params\n";
    for (Variant v : {Variant::Plain, Variant::Original, Variant::ReluBeforeAddition, Variant::FullPreActivation}) {
      for (int d = 8; d <= 24; d += 4) {
        for (int kw : {7, 11, 15}) {
          for (int f = 8; f <= 68; f += 12) {
            std::cout << to_string(v) << ',' << d << ',' << kw << ',' << f << ',' << count(v, d, kw, f) << '\n';
          }
        }
      }
    }
  }
  std::cout << (all ? "all checks passed\n" : "some checks FAILED\n");
  return all ? 0 : 1;
}

// config files: key=value lines become --key=value arguments placed before the
// command-line ones, so explicit flags win.

std::vector<std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  std::vector<std::string> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw UsageError(path + ":" + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = line.substr(0, eq);
    key.erase(key.find_last_not_of(" \t") + 1);
    std::string value = line.substr(eq + 1);
    value.erase(0, value.find_first_not_of(" \t"));
    out.push_back(key);
    out.push_back(value);
  }
  return out;
}

std::vector<std::string> expand_config(CLI::App& app, std::vector<std::string> args) {
  if (args.empty()) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args.front());
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || sub == nullptr) return args;
  const std::vector<std::string> kv = read_config(path);
  std::vector<std::string> extra;
  for (std::size_t i = 0; i < kv.size(); i += 2) {
    const std::string& key = kv[i];
    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (opt == nullptr || key == "config") throw UsageError("unknown key '" + key + "' in config file " + path);
    extra.push_back("--" + key + "=" + kv[i + 1]);
  }
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

}  // namespace

int cli_dispatch(int argc, char** argv) {
  CLI::App app{"ARMA order identification: convolutional classifiers and likelihood selection"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  Common common;
  TrainArgs targs;

  auto* simulate = app.add_subcommand("simulate", "generate a labelled test suite");
  SimulateArgs sim;
  add_common(simulate, common);
  simulate->add_option("--noise", sim.noise, "normal or t2")->check(CLI::IsMember({"normal", "t2"}));
  simulate->add_option("--batches", sim.batches, "one series per (p, q) pair per batch")->capture_default_str();
  simulate->add_option("--max-order", sim.max_order, "largest p and q")->capture_default_str();
  simulate->add_option("--length", sim.length, "series length")->capture_default_str();
  simulate->add_option("--out", sim.out, "suite file")->required()->check(kWritablePath);

  auto* train_cmd = app.add_subcommand("train", "train a CNN-AR or CNN-MA on simulated batches");
  TrainOut tout;
  add_common(train_cmd, common);
  add_train_options(train_cmd, targs, true);
  train_cmd->add_option("--out", tout.out, "checkpoint file")->required()->check(kWritablePath);
  train_cmd->add_option("--trace", tout.trace, "per-window CSV trace")->check(kWritablePath);

  auto* retrain = app.add_subcommand("retrain", "progressive retraining of a checkpoint");
  RetrainArgs rargs;
  add_common(retrain, common);
  add_train_options(retrain, targs, false);
  retrain->add_option("--in", rargs.in, "starting checkpoint")->required()->check(CLI::ExistingFile);
  retrain->add_option("--out", rargs.out, "final checkpoint")->required()->check(kWritablePath);
  retrain->add_option("--ensemble-dir", rargs.ensemble_dir, "directory for the fixed-order checkpoints")
      ->check(CLI::ExistingDirectory);
  retrain->add_option("--reset-lr", rargs.reset_lr, "learning rate at the start of each round")->capture_default_str();
  retrain->add_option("--opposite-max", rargs.opposite_max, "largest opposite order")->capture_default_str();
  retrain->add_option("--round-patience", rargs.round_patience, "rounds without improvement before moving on")
      ->capture_default_str();
  retrain->add_option("--max-rounds", rargs.max_rounds, "round cap per constraint")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "train a hyper-parameter grid with repetitions");
  SweepArgs sargs;
  add_common(sweep, common);
  // The architecture options are lists here, so only the shared ones come from add_train_options.
  sweep->add_option("--target", targs.target, "order to classify")->check(CLI::IsMember({"ar", "ma", "AR", "MA"}));
  sweep->add_option("--noise", targs.noise, "normal or t2")->check(CLI::IsMember({"normal", "t2"}));
  sweep->add_option("--classes", targs.classes, "target orders 0..classes-1")->capture_default_str();
  sweep->add_option("--length", targs.length, "series length")->capture_default_str();
  sweep->add_option("--opposite", targs.opposite, "opposite-order set")->capture_default_str();
  sweep->add_option("--optimizer", targs.optimizer, "nag or adam")->check(CLI::IsMember({"nag", "adam"}));
  sweep->add_option("--momentum", targs.momentum, "NAG momentum")->capture_default_str();
  sweep->add_option("--lr", targs.lr, "initial learning rate")->capture_default_str();
  add_train_options(sweep, targs, false);
  sweep->add_option("--variants", sargs.variants, "comma-separated architectures")->capture_default_str();
  sweep->add_option("--depths", sargs.depths, "comma-separated depths")->capture_default_str();
  sweep->add_option("--kws", sargs.kws, "comma-separated filter widths")->capture_default_str();
  sweep->add_option("--features", sargs.features, "comma-separated feature counts")->capture_default_str();
  sweep->add_option("--repeats", sargs.repeats, "runs per configuration")->capture_default_str();
  sweep->add_option("--out", sargs.out, "CSV of final mean errors")->required()->check(kWritablePath);

  auto* identify = app.add_subcommand("identify", "predict (p, q) for a suite or a single series");
  NetArgs nargs;
  IdentifyArgs iargs;
  add_common(identify, common);
  add_net_options(identify, nargs, false);
  identify->add_option("--suite", iargs.suite, "suite file")->check(CLI::ExistingFile);
  identify->add_option("--series", iargs.series, "CSV with one value per line (last column)")
      ->check(CLI::ExistingFile);
  identify->add_option("--out", iargs.out, "prediction CSV (default: standard output)")->check(kWritablePath);

  auto* baseline = app.add_subcommand("baseline", "AIC/BIC order selection over a suite");
  BaselineArgs bargs;
  ReportOut rout;
  add_common(baseline, common);
  baseline->add_option("--suite", bargs.suite, "suite file")->required()->check(CLI::ExistingFile);
  baseline->add_option("--criterion", bargs.criterion, "aic or bic")->check(CLI::IsMember({"aic", "bic"}));
  baseline->add_option("--mode", bargs.mode, "full or stepwise")->check(CLI::IsMember({"full", "stepwise"}));
  baseline->add_option("--p-max", bargs.p_max, "largest AR order searched")->capture_default_str();
  baseline->add_option("--q-max", bargs.q_max, "largest MA order searched")->capture_default_str();
  baseline->add_option("--out-dir", rout.out_dir, "directory for CSV reports")->check(CLI::ExistingDirectory);

  auto* bench = app.add_subcommand("bench", "evaluate classifiers and baselines on a suite");
  BenchArgs benchargs;
  NetArgs bnargs;
  add_common(bench, common);
  bench->add_option("--suite", benchargs.suite, "suite file")->required()->check(CLI::ExistingFile);
  add_net_options(bench, bnargs, true);
  bench->add_option("--baselines", benchargs.baselines, "comma-separated, e.g. bic-full,aic-stepwise");
  bench->add_option("--p-max", benchargs.p_max, "largest AR order searched by baselines")->capture_default_str();
  bench->add_option("--q-max", benchargs.q_max, "largest MA order searched by baselines")->capture_default_str();
  bench->add_option("--out-dir", rout.out_dir, "directory for CSV reports")->check(CLI::ExistingDirectory);

  auto* subset = app.add_subcommand("subset-chenoweth", "accuracy on the p, q <= 2 subset of a suite");
  SubsetArgs subargs;
  add_common(subset, common);
  subset->add_option("--suite", subargs.suite, "suite file")->required()->check(CLI::ExistingFile);
  subset->add_option("--rows", subargs.rows, "per-series CSV from bench or baseline")->required()
      ->check(CLI::ExistingFile);

  auto* selftest = app.add_subcommand("selftest", "gradient, likelihood and format checks");
  SelftestArgs stargs;
  add_common(selftest, common);
  selftest->add_flag("--param-table", stargs.param_table, "also print parameter counts over the grid");

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = expand_config(app, std::move(args));
    std::reverse(args.begin(), args.end());  // CLI11 consumes the vector from the back
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << "\n";
    if (!app.get_subcommands().empty()) std::cerr << "run with " << app.get_subcommands().front()->get_name() << " --help for usage\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    apply_common(common);
    if (simulate->parsed()) return run_simulate(simulate, common, sim);
    if (train_cmd->parsed()) return run_train(train_cmd, common, targs, tout);
    if (retrain->parsed()) return run_retrain(common, targs, rargs);
    if (sweep->parsed()) return run_sweep(sweep, common, targs, sargs);
    if (identify->parsed()) return run_identify(nargs, iargs);
    if (baseline->parsed()) return run_baseline(common, bargs, rout);
    if (bench->parsed()) return run_bench(bench, common, bnargs, benchargs, rout);
    if (subset->parsed()) return run_subset(subargs);
    if (selftest->parsed()) return run_selftest(common, stargs);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace armaid
