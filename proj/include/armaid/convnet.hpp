#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "armaid/arma_gen.hpp"
#include "armaid/rng.hpp"

namespace armaid {

enum class Variant { Plain, Original, ReluBeforeAddition, FullPreActivation };
enum class Mode { Train, Infer };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct NetworkConfig {
  Variant variant = Variant::ReluBeforeAddition;
  int depth = 8;          // number of convolution layers
  int filter_width = 7;   // kW, odd
  int features = 8;       // F
  int num_classes = 10;
  int input_length = kDefaultSeriesLength;

  void validate() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Tunable parameter count: conv weights and biases plus batch-norm gamma and
/// beta for every convolution layer. Running statistics are not counted.
std::int64_t param_count(const NetworkConfig& config);

/// Dense batch x channels x length array, row-major.
struct Tensor {
  int batch = 0;
  int channels = 0;
  int length = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int b, int c, int l, double fill = 0.0)
      : batch(b), channels(c), length(l), data(static_cast<std::size_t>(b) * c * l, fill) {}

  double* row(int b, int c) { return data.data() + (static_cast<std::size_t>(b) * channels + c) * length; }
  const double* row(int b, int c) const {
    return data.data() + (static_cast<std::size_t>(b) * channels + c) * length;
  }
  double& at(int b, int c, int t) { return row(b, c)[t]; }
  double at(int b, int c, int t) const { return row(b, c)[t]; }
  [[nodiscard]] bool same_shape(const Tensor& o) const {
    return batch == o.batch && channels == o.channels && length == o.length;
  }
};

/// Stacks single-channel series into a B x 1 x L tensor.
Tensor stack_series(std::span<const TimeSeries> series);
Tensor stack_series(std::span<const TimeSeries> series, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Layer primitives

/// Same-length cross-correlation, stride 1, zero padding (kW-1)/2 per side.
/// weight is out x in x kW.
Tensor conv1d_forward(const Tensor& x, std::span<const double> weight, std::span<const double> bias, int out_channels,
                      int kernel_width);
/// Accumulates into dweight/dbias; returns dx when need_dx, otherwise an empty tensor.
Tensor conv1d_backward(const Tensor& x, std::span<const double> weight, const Tensor& dy, int kernel_width,
                       std::span<double> dweight, std::span<double> dbias, bool need_dx = true);

struct BatchNormStats {
  std::vector<double> mean;
  std::vector<double> inv_std;
  std::vector<double> unbiased_var;
};

Tensor batch_norm_forward_train(const Tensor& x, std::span<const double> gamma, std::span<const double> beta,
                                BatchNormStats& stats);
Tensor batch_norm_forward_infer(const Tensor& x, std::span<const double> gamma, std::span<const double> beta,
                                std::span<const double> running_mean, std::span<const double> running_var);
void update_running_stats(const BatchNormStats& stats, std::span<double> running_mean, std::span<double> running_var);
Tensor batch_norm_backward(const Tensor& x, std::span<const double> gamma, const BatchNormStats& stats, const Tensor& dy,
                           std::span<double> dgamma, std::span<double> dbeta);

Tensor relu_forward(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& dy);

// ---------------------------------------------------------------------------
// Computation graph shared by networks and standalone blocks

struct LayerShape {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_width = 0;
  int bn_channels = 0;
  std::size_t weight = 0;  // offsets into the flat parameter vector
  std::size_t bias = 0;
  std::size_t gamma = 0;
  std::size_t beta = 0;

  [[nodiscard]] std::size_t weight_size() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel_width;
  }
};

enum class OpKind { Broadcast, Conv, BatchNorm, Relu, Add, MeanPool };

struct Op {
  OpKind kind;
  int layer = -1;  // Conv / BatchNorm
  int a = -1;      // input slot
  int b = -1;      // second input slot (Add)
  int out = -1;    // output slot
  int channels = 0;  // Broadcast target channel count
};

struct Graph {
  std::vector<LayerShape> layers;
  std::vector<Op> ops;
  int num_slots = 1;  // slot 0 is the input
  int input_channels = 1;
  int output_slot = 0;
  std::size_t param_size = 0;
};

Graph network_graph(const NetworkConfig& config);
/// One residual block (or plain two-layer stack) on F channels, input in slot 0.
Graph residual_block_graph(Variant variant, int features, int kernel_width);

/// Flat tunable parameters plus per-layer batch-norm running statistics.
struct NetworkParams {
  std::vector<double> values;
  std::vector<std::vector<double>> running_mean;
  std::vector<std::vector<double>> running_var;

  NetworkParams() = default;
  /// Zero conv weights and biases, gamma 1, beta 0, running stats (0, 1).
  explicit NetworkParams(const Graph& graph);

  [[nodiscard]] bool matches(const Graph& graph) const;
};

/// He initialisation: weights ~ N(0, 2 / (in * kW)), biases 0, gamma 1, beta 0.
void init_he(const Graph& graph, NetworkParams& params, Rng& rng);

struct ForwardCache {
  std::vector<Tensor> slots;
  std::vector<BatchNormStats> bn_stats;  // by layer
  bool valid = false;
};

struct BackwardOptions {
  /// Mutation hook for testing the gradient checker: negates conv weight gradients.
  bool corrupt_conv_weight_grad = false;
};

/// Runs the graph. Train mode needs batch >= 2, fills `cache` when given and,
/// when update_running is set, moves running statistics toward the batch
/// statistics. Infer mode uses running statistics and keeps nothing.
Tensor graph_forward(const Graph& graph, NetworkParams& params, const Tensor& input, Mode mode,
                     ForwardCache* cache = nullptr, bool update_running = true);
Tensor graph_forward_infer(const Graph& graph, const NetworkParams& params, const Tensor& input);

/// Reverse-mode pass. grads (size graph.param_size) is overwritten. The input
/// gradient is only formed when `dinput` is given.
void graph_backward(const Graph& graph, const NetworkParams& params, const ForwardCache& cache, const Tensor& doutput,
                    std::span<double> grads, const BackwardOptions& options = {}, Tensor* dinput = nullptr);

/// Hash of the sign pattern of every ReLU input stored in a train-mode cache.
std::uint64_t relu_pattern_hash(const Graph& graph, const ForwardCache& cache);

// ---------------------------------------------------------------------------
// Classifier network

class Network {
 public:
  explicit Network(NetworkConfig config);
  Network(NetworkConfig config, NetworkParams params);
  static Network he_initialized(NetworkConfig config, Rng& rng);

  [[nodiscard]] const NetworkConfig& config() const { return config_; }
  [[nodiscard]] const Graph& graph() const { return graph_; }
  [[nodiscard]] const NetworkParams& params() const { return params_; }
  NetworkParams& params() { return params_; }

  /// Logits as a B x num_classes x 1 tensor.
  Tensor forward(const Tensor& input, Mode mode, ForwardCache* cache = nullptr, bool update_running = true);
  [[nodiscard]] Tensor infer(const Tensor& input) const;
  void backward(const ForwardCache& cache, const Tensor& dlogits, std::span<double> grads,
                const BackwardOptions& options = {}) const;

 private:
  NetworkConfig config_;
  Graph graph_;
  NetworkParams params_;
};

struct LossResult {
  double loss = 0.0;
  Tensor dlogits;  // same shape as logits
};

/// Mean softmax cross-entropy over the batch; gradient is (softmax - onehot) / B.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

std::vector<double> softmax_row(const Tensor& logits, int b);

struct GradCheckOptions {
  int batch = 4;
  int length = 64;
  int coordinates = 200;
  double step = 1e-6;
  bool corrupt_conv_weight_grad = false;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  int coordinates_checked = 0;
  int kink_skips = 0;  // coordinates resampled because a ReLU changed sign
};

/// Central finite differences of the mean loss against the analytic gradient
/// over a random coordinate sample. Relative error is
/// |a - n| / max(|a|, |n|, kGradCheckFloor).
GradCheckResult grad_check(const NetworkConfig& config, Rng& rng, const GradCheckOptions& options = {});
inline constexpr double kGradCheckFloor = 1e-4;

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

}  // namespace armaid
