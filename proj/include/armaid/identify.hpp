#pragma once

#include <span>
#include <vector>

#include "armaid/trainer.hpp"

namespace armaid {

struct Prediction {
  int order = 0;
  std::vector<double> probabilities;
};

/// Argmax of the softmax output, ties toward the smaller order. The series must
/// already be standardized and of the network's input length.
Prediction predict_order(const Network& network, std::span<const double> series);
Prediction predict_order(const Checkpoint& checkpoint, std::span<const double> series);
/// Batched inference in chunks; identical to per-series predict_order.
std::vector<Prediction> predict_orders(const Network& network, std::span<const TimeSeries> series, int chunk = 100);

enum class AssemblyMode { Separate, Joint };

struct Identification {
  int p = 0;
  int q = 0;
  double p_probability = 0.0;
  double q_probability = 0.0;
};

/// CNN-AR plus either one CNN-MA (Separate) or one CNN-MA per possible AR
/// prediction (Joint). Immutable after construction; raw series are
/// standardized internally.
class Identifier {
 public:
  static Identifier separate(const Checkpoint& ar, const Checkpoint& ma);
  /// ma_ensemble[k] is used when CNN-AR predicts order k, so its size must equal
  /// the AR network's class count.
  static Identifier joint(const Checkpoint& ar, const std::vector<Checkpoint>& ma_ensemble);

  [[nodiscard]] AssemblyMode mode() const { return mode_; }
  [[nodiscard]] const Network& ar_network() const { return ar_; }
  [[nodiscard]] const Network& ma_network(int predicted_p) const;
  [[nodiscard]] int input_length() const { return ar_.config().input_length; }

  [[nodiscard]] Identification identify(std::span<const double> series) const;
  [[nodiscard]] std::vector<Identification> identify_all(std::span<const TimeSeries> series) const;

 private:
  Identifier(AssemblyMode mode, Network ar, std::vector<Network> ma);

  AssemblyMode mode_;
  Network ar_;
  std::vector<Network> ma_;
};

}  // namespace armaid
