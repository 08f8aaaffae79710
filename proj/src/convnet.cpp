#include "armaid/convnet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "armaid/error.hpp"
#include "armaid/parallel.hpp"

namespace armaid {

void NetworkConfig::validate() const {
  if (depth < 4 || depth % 2 != 0) throw InvalidArgument("NetworkConfig: depth must be an even integer >= 4");
  if (filter_width < 1 || filter_width % 2 == 0) throw InvalidArgument("NetworkConfig: filter width must be odd");
  if (features < 1) throw InvalidArgument("NetworkConfig: features must be positive");
  if (num_classes < 2) throw InvalidArgument("NetworkConfig: need at least two classes");
  if (input_length < 1) throw InvalidArgument("NetworkConfig: input length must be positive");
}

std::int64_t param_count(const NetworkConfig& c) {
  const std::int64_t kw = c.filter_width;
  const std::int64_t f = c.features;
  const std::int64_t k = c.num_classes;
  const std::int64_t first = f * kw + f + 2 * f;
  const std::int64_t middle = (c.depth - 2) * (f * f * kw + f + 2 * f);
  const std::int64_t last = k * f * kw + k + 2 * k;
  return first + middle + last;
}

Tensor stack_series(std::span<const TimeSeries> series) {
  std::vector<std::size_t> idx(series.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return stack_series(series, idx);
}

Tensor stack_series(std::span<const TimeSeries> series, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("stack_series: empty selection");
  const int length = static_cast<int>(series[indices[0]].values.size());
  Tensor t(static_cast<int>(indices.size()), 1, length);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& v = series[indices[k]].values;
    if (static_cast<int>(v.size()) != length) throw InvalidArgument("stack_series: series lengths differ");
    std::copy(v.begin(), v.end(), t.row(static_cast<int>(k), 0));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Convolution

Tensor conv1d_forward(const Tensor& x, std::span<const double> weight, std::span<const double> bias, int out_channels,
                      int kernel_width) {
  const int in = x.channels;
  const int len = x.length;
  if (kernel_width % 2 == 0) throw InvalidArgument("conv1d: kernel width must be odd");
  if (weight.size() != static_cast<std::size_t>(out_channels) * in * kernel_width ||
      bias.size() != static_cast<std::size_t>(out_channels)) {
    throw InvalidArgument("conv1d: weight/bias shape does not match input features");
  }
  const int pad = (kernel_width - 1) / 2;
  Tensor y(x.batch, out_channels, len);
  parallel_for(0, static_cast<std::size_t>(x.batch), [&](std::size_t bi) {
    const int b = static_cast<int>(bi);
    for (int o = 0; o < out_channels; ++o) {
      double* __restrict yr = y.row(b, o);
      std::fill(yr, yr + len, bias[o]);
      for (int i = 0; i < in; ++i) {
        const double* __restrict xr = x.row(b, i);
        const double* w = weight.data() + (static_cast<std::size_t>(o) * in + i) * kernel_width;
        for (int j = 0; j < kernel_width; ++j) {
          const int s = j - pad;
          const int t0 = std::max(0, -s);
          const int t1 = std::min(len, len - s);
          const double wj = w[j];
          const double* __restrict xs = xr + s;
          for (int t = t0; t < t1; ++t) yr[t] += wj * xs[t];
        }
      }
    }
  });
  return y;
}

Tensor conv1d_backward(const Tensor& x, std::span<const double> weight, const Tensor& dy, int kernel_width,
                       std::span<double> dweight, std::span<double> dbias, bool need_dx) {
  const int in = x.channels;
  const int out = dy.channels;
  const int len = x.length;
  const int pad = (kernel_width - 1) / 2;
  if (dy.batch != x.batch || dy.length != len || dweight.size() != weight.size() ||
      weight.size() != static_cast<std::size_t>(out) * in * kernel_width || dbias.size() != static_cast<std::size_t>(out)) {
    throw InvalidArgument("conv1d_backward: shape mismatch");
  }
  parallel_for(0, static_cast<std::size_t>(out), [&](std::size_t oi) {
    const int o = static_cast<int>(oi);
    double bias_sum = 0.0;
    for (int b = 0; b < x.batch; ++b) {
      const double* g = dy.row(b, o);
      for (int t = 0; t < len; ++t) bias_sum += g[t];
    }
    dbias[o] += bias_sum;
    for (int i = 0; i < in; ++i) {
      double* dw = dweight.data() + (static_cast<std::size_t>(o) * in + i) * kernel_width;
      for (int j = 0; j < kernel_width; ++j) {
        const int s = j - pad;
        const int t0 = std::max(0, -s);
        const int t1 = std::min(len, len - s);
        double acc = 0.0;
        for (int b = 0; b < x.batch; ++b) {
          const double* __restrict g = dy.row(b, o);
          const double* __restrict xs = x.row(b, i) + s;
          for (int t = t0; t < t1; ++t) acc += g[t] * xs[t];
        }
        dw[j] += acc;
      }
    }
  });
  if (!need_dx) return {};
  Tensor dx(x.batch, in, len);
  parallel_for(0, static_cast<std::size_t>(x.batch), [&](std::size_t bi) {
    const int b = static_cast<int>(bi);
    for (int i = 0; i < in; ++i) {
      double* __restrict dxr = dx.row(b, i);
      for (int o = 0; o < out; ++o) {
        const double* __restrict g = dy.row(b, o);
        const double* w = weight.data() + (static_cast<std::size_t>(o) * in + i) * kernel_width;
        for (int j = 0; j < kernel_width; ++j) {
          const int s = j - pad;
          const int t0 = std::max(0, -s);
          const int t1 = std::min(len, len - s);
          const double wj = w[j];
          double* __restrict dxs = dxr + s;
          for (int t = t0; t < t1; ++t) dxs[t] += wj * g[t];
        }
      }
    }
  });
  return dx;
}

// ---------------------------------------------------------------------------
// Batch normalisation

Tensor batch_norm_forward_train(const Tensor& x, std::span<const double> gamma, std::span<const double> beta,
                                BatchNormStats& stats) {
  const int ch = x.channels;
  if (x.batch < 2) throw InvalidArgument("batch_norm: training mode needs batch size >= 2");
  if (gamma.size() != static_cast<std::size_t>(ch) || beta.size() != static_cast<std::size_t>(ch)) {
    throw InvalidArgument("batch_norm: parameter size does not match channels");
  }
  stats.mean.assign(ch, 0.0);
  stats.inv_std.assign(ch, 0.0);
  stats.unbiased_var.assign(ch, 0.0);
  const double count = static_cast<double>(x.batch) * x.length;
  Tensor y(x.batch, ch, x.length);
  parallel_for(0, static_cast<std::size_t>(ch), [&](std::size_t ci) {
    const int c = static_cast<int>(ci);
    double sum = 0.0;
    for (int b = 0; b < x.batch; ++b) {
      const double* r = x.row(b, c);
      for (int t = 0; t < x.length; ++t) sum += r[t];
    }
    const double mean = sum / count;
    double ss = 0.0;
    for (int b = 0; b < x.batch; ++b) {
      const double* r = x.row(b, c);
      for (int t = 0; t < x.length; ++t) ss += (r[t] - mean) * (r[t] - mean);
    }
    const double var = ss / count;
    const double inv = 1.0 / std::sqrt(var + kBatchNormEps);
    stats.mean[c] = mean;
    stats.inv_std[c] = inv;
    stats.unbiased_var[c] = ss / (count - 1.0);
    const double scale = gamma[c] * inv;
    const double shift = beta[c] - mean * scale;
    for (int b = 0; b < x.batch; ++b) {
      const double* r = x.row(b, c);
      double* o = y.row(b, c);
      for (int t = 0; t < x.length; ++t) o[t] = r[t] * scale + shift;
    }
  });
  return y;
}

Tensor batch_norm_forward_infer(const Tensor& x, std::span<const double> gamma, std::span<const double> beta,
                                std::span<const double> running_mean, std::span<const double> running_var) {
  const int ch = x.channels;
  if (gamma.size() != static_cast<std::size_t>(ch) || running_mean.size() != static_cast<std::size_t>(ch)) {
    throw InvalidArgument("batch_norm: parameter size does not match channels");
  }
  Tensor y(x.batch, ch, x.length);
  for (int c = 0; c < ch; ++c) {
    const double scale = gamma[c] / std::sqrt(running_var[c] + kBatchNormEps);
    const double shift = beta[c] - running_mean[c] * scale;
    for (int b = 0; b < x.batch; ++b) {
      const double* r = x.row(b, c);
      double* o = y.row(b, c);
      for (int t = 0; t < x.length; ++t) o[t] = r[t] * scale + shift;
    }
  }
  return y;
}

void update_running_stats(const BatchNormStats& stats, std::span<double> running_mean, std::span<double> running_var) {
  for (std::size_t c = 0; c < running_mean.size(); ++c) {
    running_mean[c] = (1.0 - kBatchNormMomentum) * running_mean[c] + kBatchNormMomentum * stats.mean[c];
    running_var[c] = (1.0 - kBatchNormMomentum) * running_var[c] + kBatchNormMomentum * stats.unbiased_var[c];
  }
}

Tensor batch_norm_backward(const Tensor& x, std::span<const double> gamma, const BatchNormStats& stats, const Tensor& dy,
                           std::span<double> dgamma, std::span<double> dbeta) {
  const int ch = x.channels;
  if (!x.same_shape(dy)) throw InvalidArgument("batch_norm_backward: shape mismatch");
  const double count = static_cast<double>(x.batch) * x.length;
  Tensor dx(x.batch, ch, x.length);
  parallel_for(0, static_cast<std::size_t>(ch), [&](std::size_t ci) {
    const int c = static_cast<int>(ci);
    const double mean = stats.mean[c];
    const double inv = stats.inv_std[c];
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int b = 0; b < x.batch; ++b) {
      const double* r = x.row(b, c);
      const double* g = dy.row(b, c);
      for (int t = 0; t < x.length; ++t) {
        sum_dy += g[t];
        sum_dy_xhat += g[t] * (r[t] - mean) * inv;
      }
    }
    dgamma[c] += sum_dy_xhat;
    dbeta[c] += sum_dy;
    const double k = gamma[c] * inv / count;
    for (int b = 0; b < x.batch; ++b) {
      const double* r = x.row(b, c);
      const double* g = dy.row(b, c);
      double* o = dx.row(b, c);
      for (int t = 0; t < x.length; ++t) {
        const double xhat = (r[t] - mean) * inv;
        o[t] = k * (count * g[t] - sum_dy - xhat * sum_dy_xhat);
      }
    }
  });
  return dx;
}

// ---------------------------------------------------------------------------
// ReLU

Tensor relu_forward(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& dy) {
  if (!x.same_shape(dy)) throw InvalidArgument("relu_backward: shape mismatch");
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i) {
    if (!(x.data[i] > 0.0)) dx.data[i] = 0.0;
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Graph construction

namespace {

class GraphBuilder {
 public:
  explicit GraphBuilder(Graph& g) : g_(g) {}

  int add_layer(int in, int out, int kw, int bn_channels) {
    LayerShape l;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel_width = kw;
    l.bn_channels = bn_channels;
    l.weight = g_.param_size;
    g_.param_size += l.weight_size();
    l.bias = g_.param_size;
    g_.param_size += static_cast<std::size_t>(out);
    l.gamma = g_.param_size;
    g_.param_size += static_cast<std::size_t>(bn_channels);
    l.beta = g_.param_size;
    g_.param_size += static_cast<std::size_t>(bn_channels);
    g_.layers.push_back(l);
    return static_cast<int>(g_.layers.size()) - 1;
  }

  int conv(int layer, int in) { return emit({OpKind::Conv, layer, in}); }
  int bn(int layer, int in) { return emit({OpKind::BatchNorm, layer, in}); }
  int relu(int in) { return emit({OpKind::Relu, -1, in}); }
  int add(int a, int b) {
    Op op{OpKind::Add, -1, a};
    op.b = b;
    return emit(op);
  }
  int broadcast(int in, int channels) {
    Op op{OpKind::Broadcast, -1, in};
    op.channels = channels;
    return emit(op);
  }
  int mean_pool(int in) { return emit({OpKind::MeanPool, -1, in}); }

  int block(Variant variant, int la, int lb, int h) {
    switch (variant) {
      case Variant::Plain: {
        const int r = relu(bn(la, conv(la, h)));
        return relu(bn(lb, conv(lb, r)));
      }
      case Variant::Original: {
        const int r = relu(bn(la, conv(la, h)));
        return relu(add(bn(lb, conv(lb, r)), h));
      }
      case Variant::ReluBeforeAddition: {
        const int r = relu(bn(la, conv(la, h)));
        return add(relu(bn(lb, conv(lb, r))), h);
      }
      case Variant::FullPreActivation: {
        const int c = conv(la, relu(bn(la, h)));
        return add(conv(lb, relu(bn(lb, c))), h);
      }
    }
    throw InvalidArgument("unknown variant");
  }

 private:
  int emit(Op op) {
    op.out = g_.num_slots++;
    g_.ops.push_back(op);
    return op.out;
  }
  Graph& g_;
};

}  // namespace

Graph network_graph(const NetworkConfig& config) {
  config.validate();
  Graph g;
  GraphBuilder gb(g);
  const int f = config.features;
  const int kw = config.filter_width;
  const Variant v = config.variant;

  const int first = gb.add_layer(1, f, kw, f);
  for (int l = 1; l < config.depth - 1; ++l) gb.add_layer(f, f, kw, f);
  const int last = gb.add_layer(f, config.num_classes, kw, config.num_classes);

  // Fan-out layer; residual variants add the raw input broadcast to F channels.
  const int n0 = gb.bn(first, gb.conv(first, 0));
  int h = 0;
  switch (v) {
    case Variant::Plain: h = gb.relu(n0); break;
    case Variant::Original: h = gb.relu(gb.add(n0, gb.broadcast(0, f))); break;
    case Variant::ReluBeforeAddition: h = gb.add(gb.relu(n0), gb.broadcast(0, f)); break;
    case Variant::FullPreActivation: h = gb.add(n0, gb.broadcast(0, f)); break;
  }
  for (int k = 0; k < (config.depth - 2) / 2; ++k) h = gb.block(v, 1 + 2 * k, 2 + 2 * k, h);

  // Output layer without skip; rectify first where block outputs are not.
  if (v == Variant::ReluBeforeAddition || v == Variant::FullPreActivation) h = gb.relu(h);
  const int logits_map = gb.bn(last, gb.conv(last, h));
  g.output_slot = gb.mean_pool(logits_map);
  g.input_channels = 1;
  return g;
}

Graph residual_block_graph(Variant variant, int features, int kernel_width) {
  if (features < 1 || kernel_width % 2 == 0) throw InvalidArgument("residual_block_graph: bad shape");
  Graph g;
  GraphBuilder gb(g);
  const int la = gb.add_layer(features, features, kernel_width, features);
  const int lb = gb.add_layer(features, features, kernel_width, features);
  g.output_slot = gb.block(variant, la, lb, 0);
  g.input_channels = features;
  return g;
}

NetworkParams::NetworkParams(const Graph& graph) : values(graph.param_size, 0.0) {
  for (const auto& l : graph.layers) {
    std::fill(values.begin() + static_cast<std::ptrdiff_t>(l.gamma),
              values.begin() + static_cast<std::ptrdiff_t>(l.gamma + l.bn_channels), 1.0);
    running_mean.emplace_back(l.bn_channels, 0.0);
    running_var.emplace_back(l.bn_channels, 1.0);
  }
}

bool NetworkParams::matches(const Graph& graph) const {
  if (values.size() != graph.param_size || running_mean.size() != graph.layers.size() ||
      running_var.size() != graph.layers.size()) {
    return false;
  }
  for (std::size_t l = 0; l < graph.layers.size(); ++l) {
    const auto ch = static_cast<std::size_t>(graph.layers[l].bn_channels);
    if (running_mean[l].size() != ch || running_var[l].size() != ch) return false;
  }
  return true;
}

void init_he(const Graph& graph, NetworkParams& params, Rng& rng) {
  params = NetworkParams(graph);
  for (const auto& l : graph.layers) {
    const double sd = std::sqrt(2.0 / (static_cast<double>(l.in_channels) * l.kernel_width));
    for (std::size_t i = 0; i < l.weight_size(); ++i) params.values[l.weight + i] = sd * rng.normal();
  }
}

// ---------------------------------------------------------------------------
// Graph execution

namespace {

std::span<const double> slice(const std::vector<double>& v, std::size_t off, std::size_t n) {
  return {v.data() + off, n};
}

void accumulate(Tensor& into, Tensor&& g) {
  if (into.data.empty()) {
    into = std::move(g);
    return;
  }
  for (std::size_t i = 0; i < into.data.size(); ++i) into.data[i] += g.data[i];
}

Tensor forward_impl(const Graph& graph, const NetworkParams& params, const Tensor& input, Mode mode,
                    ForwardCache* cache, NetworkParams* running_sink) {
  if (!params.matches(graph)) throw InvalidArgument("network: parameters do not match configuration");
  if (input.channels != graph.input_channels) throw InvalidArgument("network: input channel mismatch");
  if (mode == Mode::Train && input.batch < 2) throw InvalidArgument("network: training mode needs batch size >= 2");

  std::vector<int> last_use(static_cast<std::size_t>(graph.num_slots), -1);
  for (std::size_t k = 0; k < graph.ops.size(); ++k) {
    const Op& op = graph.ops[k];
    if (op.a >= 0) last_use[op.a] = static_cast<int>(k);
    if (op.b >= 0) last_use[op.b] = static_cast<int>(k);
  }
  const bool keep = cache != nullptr;

  std::vector<Tensor> slots(static_cast<std::size_t>(graph.num_slots));
  std::vector<BatchNormStats> stats(graph.layers.size());
  slots[0] = input;
  const auto& pv = params.values;
  for (std::size_t k = 0; k < graph.ops.size(); ++k) {
    const Op& op = graph.ops[k];
    const Tensor& x = slots[op.a];
    Tensor y;
    switch (op.kind) {
      case OpKind::Conv: {
        const LayerShape& l = graph.layers[op.layer];
        y = conv1d_forward(x, slice(pv, l.weight, l.weight_size()), slice(pv, l.bias, l.out_channels), l.out_channels,
                           l.kernel_width);
        break;
      }
      case OpKind::BatchNorm: {
        const LayerShape& l = graph.layers[op.layer];
        const auto gamma = slice(pv, l.gamma, l.bn_channels);
        const auto beta = slice(pv, l.beta, l.bn_channels);
        if (mode == Mode::Train) {
          y = batch_norm_forward_train(x, gamma, beta, stats[op.layer]);
          if (running_sink != nullptr) {
            update_running_stats(stats[op.layer], running_sink->running_mean[op.layer],
                                 running_sink->running_var[op.layer]);
          }
        } else {
          y = batch_norm_forward_infer(x, gamma, beta, params.running_mean[op.layer], params.running_var[op.layer]);
        }
        break;
      }
      case OpKind::Relu: y = relu_forward(x); break;
      case OpKind::Add: {
        y = x;
        const Tensor& other = slots[op.b];
        if (!y.same_shape(other)) throw InvalidArgument("network: skip connection shape mismatch");
        for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += other.data[i];
        break;
      }
      case OpKind::Broadcast: {
        y = Tensor(x.batch, op.channels, x.length);
        for (int b = 0; b < x.batch; ++b) {
          for (int c = 0; c < op.channels; ++c) std::copy(x.row(b, 0), x.row(b, 0) + x.length, y.row(b, c));
        }
        break;
      }
      case OpKind::MeanPool: {
        y = Tensor(x.batch, x.channels, 1);
        for (int b = 0; b < x.batch; ++b) {
          for (int c = 0; c < x.channels; ++c) {
            const double* r = x.row(b, c);
            double s = 0.0;
            for (int t = 0; t < x.length; ++t) s += r[t];
            y.at(b, c, 0) = s / x.length;
          }
        }
        break;
      }
    }
    slots[op.out] = std::move(y);
    if (!keep) {
      if (last_use[op.a] == static_cast<int>(k)) slots[op.a] = Tensor();
      if (op.b >= 0 && last_use[op.b] == static_cast<int>(k)) slots[op.b] = Tensor();
    }
  }
  Tensor out = slots[graph.output_slot];
  if (keep) {
    cache->slots = std::move(slots);
    cache->bn_stats = std::move(stats);
    cache->valid = mode == Mode::Train;
  }
  return out;
}

}  // namespace

Tensor graph_forward(const Graph& graph, NetworkParams& params, const Tensor& input, Mode mode, ForwardCache* cache,
                     bool update_running) {
  return forward_impl(graph, params, input, mode, cache, update_running ? &params : nullptr);
}

Tensor graph_forward_infer(const Graph& graph, const NetworkParams& params, const Tensor& input) {
  return forward_impl(graph, params, input, Mode::Infer, nullptr, nullptr);
}

void graph_backward(const Graph& graph, const NetworkParams& params, const ForwardCache& cache, const Tensor& doutput,
                    std::span<double> grads, const BackwardOptions& options, Tensor* dinput) {
  if (!cache.valid || cache.slots.size() != static_cast<std::size_t>(graph.num_slots) ||
      cache.bn_stats.size() != graph.layers.size()) {
    throw InvalidArgument("network_backward: cache does not come from a train-mode forward of this graph");
  }
  if (grads.size() != graph.param_size) throw InvalidArgument("network_backward: gradient buffer size mismatch");
  if (!doutput.same_shape(cache.slots[graph.output_slot])) {
    throw InvalidArgument("network_backward: output gradient shape mismatch");
  }
  std::fill(grads.begin(), grads.end(), 0.0);
  std::vector<Tensor> g(static_cast<std::size_t>(graph.num_slots));
  g[graph.output_slot] = doutput;
  const auto& pv = params.values;

  for (auto it = graph.ops.rbegin(); it != graph.ops.rend(); ++it) {
    const Op& op = *it;
    Tensor gout = std::move(g[op.out]);
    g[op.out] = Tensor();
    if (gout.data.empty()) continue;
    const Tensor& x = cache.slots[op.a];
    const bool need_input_grad = op.a != 0 || dinput != nullptr;
    switch (op.kind) {
      case OpKind::Conv: {
        const LayerShape& l = graph.layers[op.layer];
        auto dw = grads.subspan(l.weight, l.weight_size());
        Tensor dx = conv1d_backward(x, slice(pv, l.weight, l.weight_size()), gout, l.kernel_width, dw,
                                    grads.subspan(l.bias, l.out_channels), need_input_grad);
        if (options.corrupt_conv_weight_grad) {
          for (double& v : dw) v = -v;
        }
        if (need_input_grad) accumulate(g[op.a], std::move(dx));
        break;
      }
      case OpKind::BatchNorm: {
        const LayerShape& l = graph.layers[op.layer];
        Tensor dx = batch_norm_backward(x, slice(pv, l.gamma, l.bn_channels), cache.bn_stats[op.layer], gout,
                                        grads.subspan(l.gamma, l.bn_channels), grads.subspan(l.beta, l.bn_channels));
        if (need_input_grad) accumulate(g[op.a], std::move(dx));
        break;
      }
      case OpKind::Relu:
        if (need_input_grad) accumulate(g[op.a], relu_backward(x, gout));
        break;
      case OpKind::Add:
        if (op.b != 0 || dinput != nullptr) accumulate(g[op.b], Tensor(gout));
        if (need_input_grad) accumulate(g[op.a], std::move(gout));
        break;
      case OpKind::Broadcast: {
        // The fan-out skip reads the raw input; its gradient is usually dropped.
        if (need_input_grad) {
          Tensor dx(x.batch, 1, x.length);
          for (int b = 0; b < x.batch; ++b) {
            double* d = dx.row(b, 0);
            for (int c = 0; c < gout.channels; ++c) {
              const double* s = gout.row(b, c);
              for (int t = 0; t < x.length; ++t) d[t] += s[t];
            }
          }
          accumulate(g[op.a], std::move(dx));
        }
        break;
      }
      case OpKind::MeanPool: {
        if (need_input_grad) {
          Tensor dx(x.batch, x.channels, x.length);
          for (int b = 0; b < x.batch; ++b) {
            for (int c = 0; c < x.channels; ++c) {
              const double v = gout.at(b, c, 0) / x.length;
              std::fill(dx.row(b, c), dx.row(b, c) + x.length, v);
            }
          }
          accumulate(g[op.a], std::move(dx));
        }
        break;
      }
    }
  }
  if (dinput != nullptr) {
    *dinput = g[0].data.empty() ? Tensor(cache.slots[0].batch, cache.slots[0].channels, cache.slots[0].length)
                                : std::move(g[0]);
  }
}

std::uint64_t relu_pattern_hash(const Graph& graph, const ForwardCache& cache) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Op& op : graph.ops) {
    if (op.kind != OpKind::Relu) continue;
    for (double v : cache.slots[op.a].data) {
      h ^= v > 0.0 ? 1u : 0u;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Network

Network::Network(NetworkConfig config) : config_(config), graph_(network_graph(config_)), params_(graph_) {}

Network::Network(NetworkConfig config, NetworkParams params)
    : config_(config), graph_(network_graph(config_)), params_(std::move(params)) {
  if (!params_.matches(graph_)) throw InvalidArgument("Network: parameters do not match configuration");
}

Network Network::he_initialized(NetworkConfig config, Rng& rng) {
  Network net(config);
  init_he(net.graph_, net.params_, rng);
  return net;
}

Tensor Network::forward(const Tensor& input, Mode mode, ForwardCache* cache, bool update_running) {
  if (input.length != config_.input_length) throw InvalidArgument("network_forward: wrong input length");
  return graph_forward(graph_, params_, input, mode, cache, update_running);
}

Tensor Network::infer(const Tensor& input) const {
  if (input.length != config_.input_length) throw InvalidArgument("network_forward: wrong input length");
  return graph_forward_infer(graph_, params_, input);
}

void Network::backward(const ForwardCache& cache, const Tensor& dlogits, std::span<double> grads,
                       const BackwardOptions& options) const {
  graph_backward(graph_, params_, cache, dlogits, grads, options);
}

// ---------------------------------------------------------------------------
// Loss

std::vector<double> softmax_row(const Tensor& logits, int b) {
  const int k = logits.channels;
  std::vector<double> p(static_cast<std::size_t>(k));
  double mx = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < k; ++c) mx = std::max(mx, logits.at(b, c, 0));
  double z = 0.0;
  for (int c = 0; c < k; ++c) {
    p[c] = std::exp(logits.at(b, c, 0) - mx);
    z += p[c];
  }
  for (double& v : p) v /= z;
  return p;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.length != 1 || labels.size() != static_cast<std::size_t>(logits.batch)) {
    throw InvalidArgument("softmax_cross_entropy: logits/labels shape mismatch");
  }
  const int k = logits.channels;
  LossResult r;
  r.dlogits = Tensor(logits.batch, k, 1);
  const double inv_b = 1.0 / logits.batch;
  for (int b = 0; b < logits.batch; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= k) throw InvalidArgument("softmax_cross_entropy: label out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) mx = std::max(mx, logits.at(b, c, 0));
    double z = 0.0;
    for (int c = 0; c < k; ++c) z += std::exp(logits.at(b, c, 0) - mx);
    const double log_z = mx + std::log(z);
    r.loss += (log_z - logits.at(b, y, 0)) * inv_b;
    for (int c = 0; c < k; ++c) {
      const double p = std::exp(logits.at(b, c, 0) - log_z);
      r.dlogits.at(b, c, 0) = (p - (c == y ? 1.0 : 0.0)) * inv_b;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckResult grad_check(const NetworkConfig& config, Rng& rng, const GradCheckOptions& options) {
  NetworkConfig cfg = config;
  cfg.input_length = options.length;
  Network net = Network::he_initialized(cfg, rng);
  auto& values = net.params().values;
  for (const auto& l : net.graph().layers) {
    for (int o = 0; o < l.out_channels; ++o) values[l.bias + o] = 0.1 * rng.normal();
    for (int c = 0; c < l.bn_channels; ++c) {
      values[l.gamma + c] = 1.0 + 0.1 * rng.normal();
      values[l.beta + c] = 0.1 * rng.normal();
    }
  }
  Tensor input(options.batch, 1, options.length);
  for (double& v : input.data) v = rng.normal();
  std::vector<int> labels(static_cast<std::size_t>(options.batch));
  for (int& y : labels) y = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(cfg.num_classes)));

  auto loss_and_hash = [&](std::uint64_t& hash) {
    ForwardCache c;
    const Tensor logits = net.forward(input, Mode::Train, &c, false);
    hash = relu_pattern_hash(net.graph(), c);
    return softmax_cross_entropy(logits, labels).loss;
  };

  ForwardCache cache;
  const Tensor logits = net.forward(input, Mode::Train, &cache, false);
  const LossResult base = softmax_cross_entropy(logits, labels);
  const std::uint64_t base_hash = relu_pattern_hash(net.graph(), cache);
  std::vector<double> grads(values.size());
  BackwardOptions bo;
  bo.corrupt_conv_weight_grad = options.corrupt_conv_weight_grad;
  net.backward(cache, base.dlogits, grads, bo);

  GradCheckResult result;
  const int max_attempts = options.coordinates * 10;
  for (int attempt = 0; attempt < max_attempts && result.coordinates_checked < options.coordinates; ++attempt) {
    const std::size_t i = rng.uniform_index(values.size());
    const double saved = values[i];
    std::uint64_t hp = 0;
    std::uint64_t hm = 0;
    values[i] = saved + options.step;
    const double lp = loss_and_hash(hp);
    values[i] = saved - options.step;
    const double lm = loss_and_hash(hm);
    values[i] = saved;
    if (hp != base_hash || hm != base_hash) {
      ++result.kink_skips;
      continue;
    }
    const double numeric = (lp - lm) / (2.0 * options.step);
    const double analytic = grads[i];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
    result.max_rel_error = std::max(result.max_rel_error, std::abs(analytic - numeric) / denom);
    ++result.coordinates_checked;
  }
  return result;
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Plain: return "plain";
    case Variant::Original: return "original";
    case Variant::ReluBeforeAddition: return "relu-before-addition";
    case Variant::FullPreActivation: return "full-pre-activation";
  }
  return "?";
}

Variant parse_variant(const std::string& text) {
  for (Variant v : {Variant::Plain, Variant::Original, Variant::ReluBeforeAddition, Variant::FullPreActivation}) {
    if (to_string(v) == text) return v;
  }
  throw InvalidArgument("unknown variant '" + text +
                        "' (expected plain, original, relu-before-addition or full-pre-activation)");
}

}  // namespace armaid
