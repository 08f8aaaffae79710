#include "armaid/trainer.hpp"

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

#include "armaid/parallel.hpp"

namespace armaid {

std::string to_string(Target t) { return t == Target::AR ? "AR" : "MA"; }

Target parse_target(const std::string& text) {
  if (text == "AR" || text == "ar") return Target::AR;
  if (text == "MA" || text == "ma") return Target::MA;
  throw InvalidArgument("unknown target '" + text + "' (expected AR or MA)");
}

OptimizerState OptimizerState::create(const OptimizerConfig& config, std::size_t size) {
  OptimizerState s;
  s.config = config;
  s.first.assign(size, 0.0);
  if (config.kind == OptimizerKind::Adam) s.second.assign(size, 0.0);
  return s;
}

namespace {

void check_shapes(std::span<double> params, std::span<const double> grads, const OptimizerState& state) {
  if (params.size() != grads.size() || state.first.size() != params.size()) {
    throw InvalidArgument("optimizer: parameter, gradient and state sizes differ");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) throw NumericalError("optimizer: non-finite gradient, step aborted");
  }
}

}  // namespace

void nag_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, double lr) {
  check_shapes(params, grads, state);
  const double mu = state.config.momentum;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double v_old = state.first[i];
    const double v_new = mu * v_old - lr * grads[i];
    state.first[i] = v_new;
    params[i] += -mu * v_old + (1.0 + mu) * v_new;
  }
  ++state.step;
}

void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, double lr) {
  check_shapes(params, grads, state);
  if (state.second.size() != params.size()) throw InvalidArgument("adam: second-moment buffer missing");
  const auto& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.first[i] = c.beta1 * state.first[i] + (1.0 - c.beta1) * g;
    state.second[i] = c.beta2 * state.second[i] + (1.0 - c.beta2) * g * g;
    const double m_hat = state.first[i] / bc1;
    const double v_hat = state.second[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

void optimizer_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, double lr) {
  if (state.config.kind == OptimizerKind::NAG) {
    nag_step(params, grads, state, lr);
  } else {
    adam_step(params, grads, state, lr);
  }
}

ScheduleAction schedule_update(Schedule& schedule, double window_mean) {
  schedule.window_means.push_back(window_mean);
  if (window_mean < schedule.best) {
    schedule.best = window_mean;
    schedule.stale = 0;
    return ScheduleAction::Continue;
  }
  if (++schedule.stale < schedule.patience) return ScheduleAction::Continue;
  schedule.stale = 0;
  schedule.best = std::numeric_limits<double>::infinity();
  if (schedule.lr / 2.0 < schedule.stop_lr) return ScheduleAction::Stop;
  schedule.lr /= 2.0;
  return ScheduleAction::Halve;
}

namespace {

struct BatchRanges {
  std::vector<int> ar;
  std::vector<int> ma;
};

BatchRanges ranges_for(Target target, int num_classes, std::span<const int> opposite) {
  BatchRanges r;
  const std::vector<int> own = order_range(0, num_classes - 1);
  if (num_classes - 1 > kMaxOrder) throw InvalidArgument("train: more classes than representable orders");
  if (target == Target::AR) {
    r.ar = own;
    r.ma.assign(opposite.begin(), opposite.end());
  } else {
    r.ar.assign(opposite.begin(), opposite.end());
    r.ma = own;
  }
  return r;
}

/// Bounded producer/consumer queue of generated batches (capacity 2).
class BatchPrefetcher {
 public:
  BatchPrefetcher(std::function<LabeledBatch(std::int64_t)> make, bool threaded)
      : make_(std::move(make)), threaded_(threaded) {
    if (threaded_) worker_ = std::thread([this] { run(); });
  }
  ~BatchPrefetcher() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      stop_ = true;
    }
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }
  BatchPrefetcher(const BatchPrefetcher&) = delete;
  BatchPrefetcher& operator=(const BatchPrefetcher&) = delete;

  LabeledBatch next() {
    if (!threaded_) return make_(consumed_++);
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [this] { return !queue_.empty() || failure_; });
    if (queue_.empty() && failure_) std::rethrow_exception(failure_);
    LabeledBatch b = std::move(queue_.front());
    queue_.pop_front();
    ++consumed_;
    cv_.notify_all();
    return b;
  }

 private:
  void run() {
    for (std::int64_t i = 0;; ++i) {
      {
        std::unique_lock<std::mutex> lock(mutex_);
        cv_.wait(lock, [this] { return stop_ || queue_.size() < kCapacity; });
        if (stop_) return;
      }
      try {
        LabeledBatch b = make_(i);
        std::lock_guard<std::mutex> lock(mutex_);
        queue_.push_back(std::move(b));
      } catch (...) {
        std::lock_guard<std::mutex> lock(mutex_);
        failure_ = std::current_exception();
        cv_.notify_all();
        return;
      }
      cv_.notify_all();
    }
  }

  static constexpr std::size_t kCapacity = 2;
  std::function<LabeledBatch(std::int64_t)> make_;
  bool threaded_;
  std::int64_t consumed_ = 0;
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<LabeledBatch> queue_;
  std::exception_ptr failure_;
  bool stop_ = false;
  std::thread worker_;
};

int target_label(Target target, const OrderPair& l) { return target == Target::AR ? l.p : l.q; }

Checkpoint run_training(Checkpoint ckpt, std::span<const int> opposite_range, const TrainOptions& options,
                        std::uint64_t seed) {
  const NetworkConfig& config = ckpt.config;
  if (opposite_range.empty()) throw InvalidArgument("train: empty opposite-order range");
  for (int o : opposite_range) {
    if (o < 0 || o > kMaxOrder) throw InvalidArgument("train: opposite order outside 0..9");
  }
  if (options.window < 1 || options.patience < 1 || options.initial_lr <= 0.0) {
    throw InvalidArgument("train: invalid schedule settings");
  }
  const BatchRanges ranges = ranges_for(ckpt.target, config.num_classes, opposite_range);
  const std::size_t batch_size = ranges.ar.size() * ranges.ma.size() * static_cast<std::size_t>(options.copies);
  if (batch_size < 4) throw InvalidArgument("train: batch too small to split into two mini-batches of >= 2");

  Network net(config, std::move(ckpt.params));
  OptimizerState opt = OptimizerState::create(options.optimizer, net.params().values.size());
  Schedule schedule;
  schedule.lr = options.initial_lr;
  schedule.window = options.window;
  schedule.patience = options.patience;
  schedule.stop_lr = options.stop_lr;
  const double divergence = options.divergence_factor * std::log(static_cast<double>(config.num_classes));

  const Rng root(seed);
  BatchPrefetcher prefetch(
      [&](std::int64_t i) {
        Rng stream = root.substream("batch", static_cast<std::uint64_t>(i));
        return make_training_batch(ranges.ar, ranges.ma, ckpt.noise, stream, options.copies, config.input_length);
      },
      num_threads() > 1);

  TrainTrace trace;
  std::vector<double> grads(net.params().values.size());
  const auto start = std::chrono::steady_clock::now();
  double window_sum = 0.0;
  int window_iters = 0;

  for (std::int64_t batch_index = 0;; ++batch_index) {
    if (options.max_batches > 0 && batch_index >= options.max_batches) break;
    const LabeledBatch batch = prefetch.next();
    const std::size_t half = batch.series.size() / 2;
    for (int part = 0; part < 2; ++part) {
      std::vector<std::size_t> idx;
      std::vector<int> labels;
      const std::size_t lo = part == 0 ? 0 : half;
      const std::size_t hi = part == 0 ? half : batch.series.size();
      for (std::size_t i = lo; i < hi; ++i) {
        idx.push_back(i);
        labels.push_back(target_label(ckpt.target, batch.labels[i]));
      }
      ForwardCache cache;
      const Tensor logits = net.forward(stack_series(batch.series, idx), Mode::Train, &cache);
      const LossResult loss = softmax_cross_entropy(logits, labels);
      net.backward(cache, loss.dlogits, grads);
      optimizer_step(net.params().values, grads, opt, schedule.lr);
      window_sum += loss.loss;
      ++window_iters;
    }
    trace.total_batches = batch_index + 1;

    if ((batch_index + 1) % options.window == 0) {
      const double mean = window_sum / window_iters;
      window_sum = 0.0;
      window_iters = 0;
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const double lr_used = schedule.lr;
      trace.window_means.push_back(mean);
      trace.window_lr.push_back(lr_used);
      trace.window_wall_seconds.push_back(wall);
      trace.final_mean_error = mean;
      if (!std::isfinite(mean) || mean > divergence) {
        throw TrainingDiverged("train: window " + std::to_string(trace.window_means.size()) + " mean error " +
                               std::to_string(mean) + " exceeds divergence bound " + std::to_string(divergence) +
                               " at lr " + std::to_string(lr_used));
      }
      const ScheduleAction action = schedule_update(schedule, mean);
      if (options.on_window) {
        options.on_window({static_cast<int>(trace.window_means.size()) - 1, mean, lr_used, wall, action});
      }
      if (action == ScheduleAction::Stop) break;
    }
  }
  if (window_iters > 0 && trace.window_means.empty()) trace.final_mean_error = window_sum / window_iters;
  trace.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  ckpt.params = std::move(net.params());
  ckpt.optimizer = std::move(opt);
  ckpt.trace = std::move(trace);
  ckpt.constraint_history.emplace_back(opposite_range.begin(), opposite_range.end());
  ckpt.seed = seed;
  return ckpt;
}

}  // namespace

Checkpoint train(const NetworkConfig& config, Target target, NoiseKind noise, std::span<const int> opposite_range,
                 const TrainOptions& options, std::uint64_t seed) {
  config.validate();
  Rng init = Rng(seed).substream("init");
  Network net = Network::he_initialized(config, init);
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.params = net.params();
  ckpt.target = target;
  ckpt.noise = noise;
  return run_training(std::move(ckpt), opposite_range, options, seed);
}

Checkpoint train_from(const Checkpoint& start, std::span<const int> opposite_range, const TrainOptions& options,
                      std::uint64_t seed) {
  if (!start.params.matches(network_graph(start.config))) {
    throw InvalidArgument("train_from: checkpoint parameters do not match its configuration");
  }
  return run_training(start, opposite_range, options, seed);
}

double probe_mean_error(const Checkpoint& checkpoint, std::span<const int> opposite_range, int copies, int batches,
                        std::uint64_t seed) {
  Network net = checkpoint.network();
  const BatchRanges ranges = ranges_for(checkpoint.target, checkpoint.config.num_classes, opposite_range);
  const Rng root(seed);
  double sum = 0.0;
  for (int b = 0; b < batches; ++b) {
    Rng stream = root.substream("probe", static_cast<std::uint64_t>(b));
    const LabeledBatch batch =
        make_training_batch(ranges.ar, ranges.ma, checkpoint.noise, stream, copies, checkpoint.config.input_length);
    std::vector<int> labels;
    for (const auto& l : batch.labels) labels.push_back(target_label(checkpoint.target, l));
    const Tensor logits = net.forward(stack_series(batch.series), Mode::Train, nullptr, false);
    sum += softmax_cross_entropy(logits, labels).loss;
  }
  return sum / batches;
}

RetrainResult progressive_retrain(const Checkpoint& checkpoint, const RetrainOptions& options, std::uint64_t seed) {
  if (options.opposite_max < 0 || options.opposite_max > kMaxOrder) {
    throw InvalidArgument("progressive_retrain: opposite_max must be in 0..9");
  }
  if (options.round_patience < 1 || options.max_rounds < 1) {
    throw InvalidArgument("progressive_retrain: round limits must be positive");
  }
  struct Stage {
    std::string name;
    std::vector<int> range;
    bool ranged;
    int k;
  };
  std::vector<Stage> stages;
  for (int k = 0; k <= options.opposite_max; ++k) stages.push_back({"fixed-" + std::to_string(k), {k}, false, k});
  for (int k = 1; k <= options.opposite_max; ++k) stages.push_back({"range-0-" + std::to_string(k), order_range(0, k), true, k});

  TrainOptions round_options = options.train;
  round_options.initial_lr = options.reset_lr;

  RetrainResult result;
  result.ensemble.resize(static_cast<std::size_t>(options.opposite_max) + 1);
  result.ranged.resize(static_cast<std::size_t>(options.opposite_max) + 1);
  Checkpoint incumbent = checkpoint;

  for (const Stage& stage : stages) {
    // Mean errors are only comparable under one constraint, so each stage's
    // first round is accepted and later rounds must beat it.
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;
    for (int round = 0; round < options.max_rounds && stale < options.round_patience; ++round) {
      const std::uint64_t round_seed = mix_seed(seed, stage.name, static_cast<std::uint64_t>(round));
      ++result.rounds_run;
      bool accepted = false;
      double err = std::numeric_limits<double>::quiet_NaN();
      try {
        Checkpoint candidate = train_from(incumbent, stage.range, round_options, round_seed);
        err = candidate.mean_error();
        if (err < best) {
          best = err;
          incumbent = std::move(candidate);
          accepted = true;
        }
      } catch (const TrainingDiverged&) {
        ++result.rounds_diverged;
      }
      stale = accepted ? 0 : stale + 1;
      if (options.on_round) options.on_round(stage.name, round, err, accepted);
    }
    if (stage.ranged) {
      result.ranged[stage.k] = incumbent;
    } else {
      result.ensemble[stage.k] = incumbent;
      if (stage.k == 0) result.ranged[0] = incumbent;
    }
  }

  // Keep the input unless the retrained network is strictly better.
  result.final = incumbent.mean_error() < checkpoint.mean_error() ? std::move(incumbent) : checkpoint;
  return result;
}

}  // namespace armaid
