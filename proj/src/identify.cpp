#include "armaid/identify.hpp"

#include <map>

#include "armaid/parallel.hpp"

namespace armaid {

namespace {

Prediction from_logits(const Tensor& logits, int b) {
  const int k = logits.channels;
  Prediction pred;
  pred.probabilities = softmax_row(logits, b);
  for (int c = 1; c < k; ++c) {
    if (pred.probabilities[c] > pred.probabilities[pred.order]) pred.order = c;
  }
  return pred;
}

void check_length(const Network& network, std::size_t n) {
  if (static_cast<int>(n) != network.config().input_length) {
    throw InvalidArgument("predict_order: series length " + std::to_string(n) + " but the network expects " +
                          std::to_string(network.config().input_length));
  }
}

TimeSeries standardized(std::span<const double> series) {
  TimeSeries ts;
  ts.values.assign(series.begin(), series.end());
  return standardize(ts);
}

}  // namespace

Prediction predict_order(const Network& network, std::span<const double> series) {
  check_length(network, series.size());
  Tensor x(1, 1, static_cast<int>(series.size()));
  std::copy(series.begin(), series.end(), x.data.begin());
  return from_logits(network.infer(x), 0);
}

Prediction predict_order(const Checkpoint& checkpoint, std::span<const double> series) {
  return predict_order(checkpoint.network(), series);
}

std::vector<Prediction> predict_orders(const Network& network, std::span<const TimeSeries> series, int chunk) {
  if (chunk < 1) throw InvalidArgument("predict_orders: chunk must be positive");
  for (const TimeSeries& s : series) check_length(network, s.values.size());
  std::vector<Prediction> out(series.size());
  const std::size_t n_chunks = (series.size() + chunk - 1) / chunk;
  // Inference on one sample never reads another sample, so chunking does not
  // change any result.
  parallel_for(0, n_chunks, [&](std::size_t c) {
    const std::size_t lo = c * chunk;
    const std::size_t hi = std::min(series.size(), lo + chunk);
    std::vector<std::size_t> idx;
    for (std::size_t i = lo; i < hi; ++i) idx.push_back(i);
    const Tensor logits = network.infer(stack_series(series, idx));
    for (std::size_t i = lo; i < hi; ++i) out[i] = from_logits(logits, static_cast<int>(i - lo));
  });
  return out;
}

Identifier::Identifier(AssemblyMode mode, Network ar, std::vector<Network> ma)
    : mode_(mode), ar_(std::move(ar)), ma_(std::move(ma)) {}

Identifier Identifier::separate(const Checkpoint& ar, const Checkpoint& ma) {
  if (ar.target != Target::AR) throw InvalidArgument("identifier: first checkpoint must be a CNN-AR");
  if (ma.target != Target::MA) throw InvalidArgument("identifier: second checkpoint must be a CNN-MA");
  if (ar.config.input_length != ma.config.input_length) {
    throw InvalidArgument("identifier: AR and MA networks expect different input lengths");
  }
  std::vector<Network> m;
  m.push_back(ma.network());
  return Identifier(AssemblyMode::Separate, ar.network(), std::move(m));
}

Identifier Identifier::joint(const Checkpoint& ar, const std::vector<Checkpoint>& ma_ensemble) {
  if (ar.target != Target::AR) throw InvalidArgument("identifier: first checkpoint must be a CNN-AR");
  if (static_cast<int>(ma_ensemble.size()) != ar.config.num_classes) {
    throw InvalidArgument("identifier: joint mode needs " + std::to_string(ar.config.num_classes) +
                          " CNN-MA ensemble members, got " + std::to_string(ma_ensemble.size()));
  }
  std::vector<Network> m;
  for (const Checkpoint& c : ma_ensemble) {
    if (c.target != Target::MA) throw InvalidArgument("identifier: ensemble members must be CNN-MA");
    if (c.config.input_length != ar.config.input_length) {
      throw InvalidArgument("identifier: ensemble member input length differs from the CNN-AR");
    }
    m.push_back(c.network());
  }
  return Identifier(AssemblyMode::Joint, ar.network(), std::move(m));
}

const Network& Identifier::ma_network(int predicted_p) const {
  if (mode_ == AssemblyMode::Separate) return ma_.front();
  return ma_.at(static_cast<std::size_t>(predicted_p));
}

Identification Identifier::identify(std::span<const double> series) const {
  const TimeSeries s = standardized(series);
  const Prediction p = predict_order(ar_, s.values);
  const Prediction q = predict_order(ma_network(p.order), s.values);
  return {p.order, q.order, p.probabilities[p.order], q.probabilities[q.order]};
}

std::vector<Identification> Identifier::identify_all(std::span<const TimeSeries> series) const {
  std::vector<TimeSeries> std_series(series.size());
  parallel_for(0, series.size(), [&](std::size_t i) { std_series[i] = standardized(series[i].values); });
  const std::vector<Prediction> ps = predict_orders(ar_, std_series);
  std::vector<Identification> out(series.size());
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < series.size(); ++i) {
    out[i].p = ps[i].order;
    out[i].p_probability = ps[i].probabilities[ps[i].order];
    groups[mode_ == AssemblyMode::Separate ? 0 : ps[i].order].push_back(i);
  }
  for (const auto& [key, members] : groups) {
    std::vector<TimeSeries> sub;
    sub.reserve(members.size());
    for (std::size_t i : members) sub.push_back(std_series[i]);
    const std::vector<Prediction> qs = predict_orders(ma_network(key), sub);
    for (std::size_t j = 0; j < members.size(); ++j) {
      out[members[j]].q = qs[j].order;
      out[members[j]].q_probability = qs[j].probabilities[qs[j].order];
    }
  }
  return out;
}

}  // namespace armaid
