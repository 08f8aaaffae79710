#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "armaid/arma_gen.hpp"
#include "armaid/convnet.hpp"
#include "armaid/error.hpp"

namespace armaid {

/// Which order a classifier predicts (CNN-AR or CNN-MA).
enum class Target { AR, MA };

std::string to_string(Target t);
Target parse_target(const std::string& text);

enum class OptimizerKind { NAG, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::NAG;
  double momentum = 0.75;  // NAG
  double beta1 = 0.9;      // Adam
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  OptimizerConfig config;
  std::vector<double> first;   // NAG velocity / Adam first moment
  std::vector<double> second;  // Adam second moment (empty for NAG)
  std::int64_t step = 0;

  static OptimizerState create(const OptimizerConfig& config, std::size_t size);
};

/// Nesterov momentum in the look-ahead reformulation: the stored parameters are
/// theta + mu * v, so the gradient passed in is already taken at the look-ahead
/// point. v' = mu v - lr g;  params' = params - mu v + (1 + mu) v'.
void nag_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, double lr);
void adam_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, double lr);
/// Dispatches on state.config.kind. Throws NumericalError (leaving params
/// untouched) on a non-finite gradient.
void optimizer_step(std::span<double> params, std::span<const double> grads, OptimizerState& state, double lr);

enum class ScheduleAction { Continue, Halve, Stop };

/// Learning-rate halving on stalled window means.
struct Schedule {
  double lr = 0.1;
  int window = 100;     // batches per window
  int patience = 6;     // windows without a new best before halving
  double stop_lr = 1e-4;
  double best = std::numeric_limits<double>::infinity();  // best since the last halving
  int stale = 0;
  std::vector<double> window_means;
};

/// Records the window mean; after `patience` windows that fail to beat the best
/// since the last halving, halves lr (or stops if the halved lr would fall
/// below stop_lr).
ScheduleAction schedule_update(Schedule& schedule, double window_mean);

struct TrainTrace {
  std::vector<double> window_means;
  std::vector<double> window_lr;
  std::vector<double> window_wall_seconds;  // cumulative
  std::int64_t total_batches = 0;
  double wall_seconds = 0.0;
  double final_mean_error = std::numeric_limits<double>::quiet_NaN();
};

struct Checkpoint {
  NetworkConfig config;
  NetworkParams params;
  Target target = Target::AR;
  NoiseKind noise = NoiseKind::Normal01;
  std::vector<std::vector<int>> constraint_history;  // opposite-order ranges, oldest first
  TrainTrace trace;
  std::uint64_t seed = 0;
  OptimizerState optimizer;

  [[nodiscard]] double mean_error() const { return trace.final_mean_error; }
  [[nodiscard]] Network network() const { return Network(config, params); }
};

class TrainingDiverged : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct WindowReport {
  int window_index = 0;
  double mean_error = 0.0;
  double lr = 0.0;
  double wall_seconds = 0.0;
  ScheduleAction action = ScheduleAction::Continue;
};

struct TrainOptions {
  OptimizerConfig optimizer;
  double initial_lr = 0.1;
  int window = 100;
  int patience = 6;
  double stop_lr = 1e-4;
  int copies = 1;                 // series per (p, q) combination in a batch
  std::int64_t max_batches = 0;   // 0: run until the schedule stops
  /// Abort when a window mean exceeds this multiple of ln(num_classes).
  double divergence_factor = 10.0;
  std::function<void(const WindowReport&)> on_window;
};

/// Target order classes 0..num_classes-1; the opposite order is drawn from
/// opposite_range. Each generated batch is split into two mini-batches, one
/// optimizer iteration each.
Checkpoint train(const NetworkConfig& config, Target target, NoiseKind noise, std::span<const int> opposite_range,
                 const TrainOptions& options, std::uint64_t seed);

/// Continues training from existing weights (optimizer state starts fresh).
Checkpoint train_from(const Checkpoint& start, std::span<const int> opposite_range, const TrainOptions& options,
                      std::uint64_t seed);

/// Mean cross-entropy of a network in training mode (batch statistics, running
/// statistics untouched) over `batches` freshly generated batches.
double probe_mean_error(const Checkpoint& checkpoint, std::span<const int> opposite_range, int copies, int batches,
                        std::uint64_t seed);

struct RetrainOptions {
  TrainOptions train;         // initial_lr is replaced by reset_lr for every round
  double reset_lr = 0.5;
  int opposite_max = kMaxOrder;
  int round_patience = 6;     // rounds without improvement before moving on
  int max_rounds = 30;        // per constraint value
  std::function<void(const std::string& stage, int round, double mean_error, bool accepted)> on_round;
};

struct RetrainResult {
  Checkpoint final;
  std::vector<Checkpoint> ensemble;         // [k]: accepted with opposite order fixed at {k}
  std::vector<Checkpoint> ranged;           // [k]: accepted with opposite range {0..k}; [0] mirrors ensemble[0]
  int rounds_run = 0;
  int rounds_diverged = 0;
};

/// Progressive retraining: opposite order fixed at {0}, {1}, ... then ranged
/// {0..1}, {0..2}, ...; inside each constraint, rounds restart the schedule at
/// reset_lr and a round is kept only if its mean error beats the incumbent.
/// The returned checkpoint never has a higher mean error than the input.
RetrainResult progressive_retrain(const Checkpoint& checkpoint, const RetrainOptions& options, std::uint64_t seed);

}  // namespace armaid
